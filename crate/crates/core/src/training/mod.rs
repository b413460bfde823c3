//! L-BFGS training with validation early stopping, and the architecture
//! grid search.

mod fit;
mod grid;
mod init;
mod lbfgs;
mod train;

pub use fit::{fit, FitReport};
pub use grid::{default_widths, grid_search, GridCell, GridResult, GridSpace, WidthMode, PRESET_SHAPES};
pub use init::{initialize, InitScheme};
pub use lbfgs::{
    lbfgs_minimize, two_loop_direction, CurvaturePair, LbfgsConfig, LbfgsError, LbfgsOutcome, LbfgsStop, CURVATURE_EPS,
};
pub use train::{train, EarlyStopping, StopReason, TrainConfig, TrainReport, ValidationScale};

use crate::network::{Network, NetworkError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training and validation sets must be non-empty")]
    EmptySet,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("training diverged (non-finite loss) at iteration {iteration}")]
    Diverged {
        iteration: usize,
        last_finite: Box<Network>,
    },
}
