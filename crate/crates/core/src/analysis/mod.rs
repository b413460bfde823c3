//! Output extrema by projected gradient search, and per-feature impact from
//! loss gradients.

mod extremum;
mod impact;

pub use extremum::{extremum_search, Direction, ExtremumConfig, ExtremumResult, LabeledValue, RestartEndpoint};
pub use impact::{impact, impact_csv, median, FeatureImpact, ImpactReport, ImpactSummary};

use crate::network::NetworkError;
use crate::verify::VerifyError;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("restarts, steps and step size must be positive")]
    InvalidConfig,
    #[error("every restart hit a non-finite gradient")]
    AllRestartsFailed,
    #[error("empty dataset")]
    Empty,
    #[error(transparent)]
    Box(#[from] VerifyError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}
