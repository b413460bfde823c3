use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

pub const TRAIN_FRACTION: f64 = 0.675;
pub const VALIDATION_FRACTION: f64 = 0.075;
pub const TEST_FRACTION: f64 = 0.25;
pub const MIN_SPLIT_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    #[default]
    Random,
    /// Oldest samples train, then validation, newest samples test.
    Chronological,
}

/// Sample indices of each part, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub indices: SplitIndices,
}

/// Part sizes for `n` samples: validation and test are floored, the
/// rounding remainder goes to train.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let validation = (n as f64 * VALIDATION_FRACTION).floor() as usize;
    let test = (n as f64 * TEST_FRACTION).floor() as usize;
    (n - validation - test, validation, test)
}

pub fn split_indices(n: usize, seed: u64, strategy: SplitStrategy) -> Result<SplitIndices, DataError> {
    if n < MIN_SPLIT_SIZE {
        return Err(DataError::TooSmall { n, min: MIN_SPLIT_SIZE });
    }
    let (n_train, n_val, _) = split_sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    if strategy == SplitStrategy::Random {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices {
        train,
        validation,
        test,
    })
}

pub fn split(ds: &Dataset, seed: u64) -> Result<Splits, DataError> {
    split_with(ds, seed, SplitStrategy::Random)
}

pub fn split_with(ds: &Dataset, seed: u64, strategy: SplitStrategy) -> Result<Splits, DataError> {
    let indices = split_indices(ds.len(), seed, strategy)?;
    Ok(Splits {
        train: ds.subset(&indices.train),
        validation: ds.subset(&indices.validation),
        test: ds.subset(&indices.test),
        indices,
    })
}
