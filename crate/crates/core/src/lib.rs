//! Small fully connected regression networks for daily stream water
//! temperature, with three assessments beyond RMSE:
//!
//! * certified output intervals under input perturbations ([`verify`]),
//! * multi-start projected-gradient search for extreme outputs ([`analysis`]),
//! * per-feature loss-gradient impact ([`analysis`]).
//!
//! Training uses full-batch L-BFGS with validation-based early stopping
//! ([`training`]). The [`experiment`] module wires everything into the
//! `hydroverify` command-line harness.

pub mod analysis;
pub mod artifact;
pub mod dataset;
pub mod experiment;
pub mod network;
pub mod seed;
pub mod training;
pub mod verify;
