use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, SeededRng};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub validation_fraction_of_train: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.20,
            validation_fraction_of_train: 0.10,
            seed: 42,
        }
    }
}

/// Disjoint index sets covering `0..n`, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub const MIN_SPLIT_RECORDS: usize = 10;

fn floor_fraction(n: usize, fraction: f64) -> usize {
    // The epsilon absorbs representation error in fractions such as 0.1.
    ((n as f64) * fraction + 1e-9).floor() as usize
}

/// Seeded permutation of `0..n`; its last `floor(test_fraction * n)`
/// entries are the test set, then the last `floor(validation_fraction *
/// remainder)` of the remainder form the validation set.
pub fn split_dataset(n: usize, spec: &SplitSpec) -> Result<DataSplit, TrainError> {
    if n < MIN_SPLIT_RECORDS {
        return Err(TrainError::Split(format!(
            "need at least {MIN_SPLIT_RECORDS} records to split, got {n}"
        )));
    }
    for (name, f) in [
        ("test_fraction", spec.test_fraction),
        ("validation_fraction_of_train", spec.validation_fraction_of_train),
    ] {
        if !(0.0..1.0).contains(&f) {
            return Err(TrainError::Split(format!("{name} must be in [0, 1), got {f}")));
        }
    }
    let perm = SeededRng::new(spec.seed).permutation(n);
    let n_test = floor_fraction(n, spec.test_fraction);
    let (rest, test) = perm.split_at(n - n_test);
    let n_val = floor_fraction(rest.len(), spec.validation_fraction_of_train);
    let (train, validation) = rest.split_at(rest.len() - n_val);
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(DataSplit {
        train: sorted(train),
        validation: sorted(validation),
        test: sorted(test),
    })
}

/// Re-draws the validation holdout from the non-test pool for one epoch.
pub fn redraw_validation(split: &DataSplit, spec: &SplitSpec, epoch: usize) -> DataSplit {
    let mut pool: Vec<usize> = split.train.iter().chain(&split.validation).copied().collect();
    pool.sort_unstable();
    SeededRng::new(derive_seed(spec.seed, epoch as u64 + 1)).shuffle(&mut pool);
    let n_val = floor_fraction(pool.len(), spec.validation_fraction_of_train);
    let (train, validation) = pool.split_at(pool.len() - n_val);
    let mut train = train.to_vec();
    let mut validation = validation.to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    DataSplit {
        train,
        validation,
        test: split.test.clone(),
    }
}
