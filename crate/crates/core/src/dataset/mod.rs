//! Station CSV ingest, feature construction, normalization, splitting and a
//! synthetic stream generator.

mod export;
mod features;
mod normalize;
mod split;
mod synth;
mod table;

use std::path::PathBuf;

pub use export::{dataset_csv, write_dataset, write_source_csvs};
pub use features::{
    build_features, build_features_with, Dataset, DatasetSchema, FeatureConfig, FeatureKind, InputVariant, Sample,
    DEFAULT_LAG_WINDOW,
};
pub use normalize::NormalizationSpec;
pub use split::{
    split, split_indices, split_sizes, split_with, SplitIndices, SplitStrategy, Splits, MIN_SPLIT_SIZE, TEST_FRACTION,
    TRAIN_FRACTION, VALIDATION_FRACTION,
};
pub use synth::{synthesize, MohseniParams, SynthConfig};
pub use table::{ingest, DailyRecord, JoinedTable, SENTINEL};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("no dates remain after joining and removing missing values")]
    EmptyTable,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("dataset too small to split: {n} samples (need at least {min})")]
    TooSmall { n: usize, min: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("table invariant violated: {0}")]
    Invariant(String),
}

impl DataError {
    pub(crate) fn from_csv(path: &std::path::Path, e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io {
                path: path.to_path_buf(),
                source,
            },
            kind => DataError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("{kind:?}"),
            },
        }
    }
}
