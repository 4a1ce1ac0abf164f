use rand::seq::SliceRandom;
use rand::RngCore;

use crate::dataset::spec::{FcSample, LABEL_MDD, LABEL_NC};
use crate::error::{Error, Result};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// Indices into a site's sample list, each ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn select<'a, T>(idx: &[usize], items: &'a [T]) -> Vec<&'a T> {
        idx.iter().map(|&i| &items[i]).collect()
    }
}

/// Number of test samples taken from a label group of `count`.
pub fn test_count(count: usize, test_fraction: f64) -> usize {
    ((count as f64 * test_fraction).round() as usize).clamp(1, count.saturating_sub(1))
}

/// Label-stratified split: each label contributes `test_count` samples to
/// the test side, so both sides always hold both labels.
pub fn split_train_test(samples: &[FcSample], test_fraction: f64, rng: &mut dyn RngCore) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 0.5) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 0.5), got {test_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [LABEL_NC, LABEL_MDD] {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label == label).collect();
        if idx.len() < 2 {
            return Err(Error::Split(format!(
                "label {label} has {} samples; stratifying needs at least 2",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        let k = test_count(idx.len(), test_fraction);
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}
