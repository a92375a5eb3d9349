use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// Map ids strictly above this go to the test set.
    pub test_threshold: u64,
    /// `(train, val)` parts of the remaining ids.
    pub train_val_ratio: (u32, u32),
    pub split_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_threshold: 550,
            train_val_ratio: (12, 1),
            split_seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_val_ratio.0 == 0 || self.train_val_ratio.1 == 0 {
            return Err(Error::Config(format!(
                "train/val ratio parts must be positive, got {:?}",
                self.train_val_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

/// Test ids are those above the threshold; the rest are sorted, shuffled by
/// `split_seed` and divided with the train part rounded up.
pub fn split_dataset(ids: &[u64], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let unique: BTreeSet<u64> = ids.iter().copied().collect();
    if unique.len() != ids.len() {
        return Err(Error::Domain("map ids must be distinct".into()));
    }
    let (test, mut rest): (Vec<u64>, Vec<u64>) = unique.into_iter().partition(|&id| id > spec.test_threshold);
    rest.shuffle(&mut rng_from(spec.split_seed, &[0x5b1]));
    let (a, b) = (spec.train_val_ratio.0 as u64, spec.train_val_ratio.1 as u64);
    let n = rest.len() as u64;
    let n_train = (a * n).div_ceil(a + b) as usize;
    let val = rest.split_off(n_train);
    let split = Split {
        train: rest,
        val,
        test,
    };
    for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if part.is_empty() {
            return Err(Error::EmptySplit(name));
        }
    }
    Ok(split)
}
