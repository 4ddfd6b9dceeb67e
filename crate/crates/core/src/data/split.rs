use rand::seq::SliceRandom;

use super::EpochSet;
use crate::rng::rng_for;
use crate::{Error, Result};

/// Guard against `0.7 * 10 = 6.999...` style rounding in count rules.
const COUNT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitScheme {
    WithinSubjectRatio,
    LeaveOneSubjectOut,
}

/// Disjoint train/test trial indices into one epoch set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub scheme: SplitScheme,
}

impl SplitPlan {
    pub fn apply(&self, epochs: &EpochSet) -> Result<(EpochSet, EpochSet)> {
        Ok((epochs.subset(&self.train_indices)?, epochs.subset(&self.test_indices)?))
    }
}

/// Stratified random split: per class, `max(1, floor(ratio * n_class))`
/// trials go to train and the rest to test.
pub fn split_within_subject(epochs: &EpochSet, train_ratio: f64, seed: u64) -> Result<SplitPlan> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::param(format!("train ratio must be in (0, 1), got {train_ratio}")));
    }
    let mut rng = rng_for(seed, "split", 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for k in 0..epochs.n_classes() {
        let mut idx = epochs.class_indices(k);
        if idx.len() < 2 {
            return Err(Error::validation(format!(
                "class {} has {} trials; at least 2 are needed to split",
                epochs.class_names[k],
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((train_ratio * idx.len() as f64 + COUNT_EPS).floor() as usize).max(1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    if test.is_empty() {
        return Err(Error::validation("split leaves an empty test set"));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan { train_indices: train, test_indices: test, seed, scheme: SplitScheme::WithinSubjectRatio })
}

/// Leave-one-subject-out: the held-out subject's set becomes the test set and
/// all other subjects are concatenated (in order) into the training set.
pub fn split_loso(by_subject: &[EpochSet], held_out: &str) -> Result<(EpochSet, EpochSet)> {
    if by_subject.len() < 2 {
        return Err(Error::param("leave-one-subject-out needs at least 2 subjects"));
    }
    let first = &by_subject[0];
    if let Some(bad) = by_subject.iter().find(|s| !first.metadata_matches(s)) {
        return Err(Error::validation(format!(
            "subject {:?} has different channel/class/rate metadata",
            bad.subjects()
        )));
    }
    let pos = by_subject
        .iter()
        .position(|s| s.trials.iter().all(|t| t.subject == held_out))
        .ok_or_else(|| Error::param(format!("unknown subject {held_out:?}")))?;
    let rest: Vec<&EpochSet> = by_subject.iter().enumerate().filter(|&(i, _)| i != pos).map(|(_, s)| s).collect();
    let train = EpochSet::concat(&rest)?;
    Ok((train, by_subject[pos].clone()))
}

/// Stratified subsample keeping `ceil(ratio * n_class)` trials of each class,
/// in original order. `ratio == 1` returns the input unchanged.
pub fn subsample_training(train: &EpochSet, ratio: f64, seed: u64) -> Result<EpochSet> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::param(format!("subsample ratio must be in (0, 1], got {ratio}")));
    }
    if ratio == 1.0 {
        return Ok(train.clone());
    }
    let mut rng = rng_for(seed, "subsample", 0);
    let mut keep = Vec::new();
    for k in 0..train.n_classes() {
        let mut idx = train.class_indices(k);
        let n = ((ratio * idx.len() as f64 - COUNT_EPS).ceil() as usize).min(idx.len());
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..n]);
    }
    keep.sort_unstable();
    train.subset(&keep)
}
