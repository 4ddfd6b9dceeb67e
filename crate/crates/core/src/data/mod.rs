//! Labeled multi-channel EEG trials: storage, preprocessing, synthesis and
//! splitting.

mod filter;
mod io;
mod split;
mod synth;

use ndarray::Array2;

use crate::{Error, Result};

pub use filter::{bandpass_filter, butter_bandpass, filtfilt, Biquad, BUTTER_ORDER};
pub use io::{import_csv, load_epochset, save_epochset, MANIFEST_FILE};
pub use split::{split_loso, split_within_subject, subsample_training, SplitPlan, SplitScheme};
pub use synth::{synthesize_dataset, synthesize_subjects, SynthSpec};

/// One EEG trial: `data` is channels x samples, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub data: Array2<f64>,
    pub label: usize,
    pub subject: String,
}

/// A collection of equally shaped, labeled trials plus recording metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub trials: Vec<Trial>,
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl EpochSet {
    /// Builds an epoch set, checking every invariant.
    pub fn new(trials: Vec<Trial>, fs: f64, channel_names: Vec<String>, class_names: Vec<String>) -> Result<Self> {
        let set = EpochSet { trials, fs, channel_names, class_names };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials.is_empty() {
            return Err(Error::validation("epoch set has no trials"));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::validation(format!("sampling rate must be positive, got {}", self.fs)));
        }
        if self.class_names.is_empty() {
            return Err(Error::validation("no class names"));
        }
        let (c, t) = self.trials[0].data.dim();
        if c < 2 || t < 2 {
            return Err(Error::validation(format!("trials must be at least 2x2, got {c}x{t}")));
        }
        if self.channel_names.len() != c {
            return Err(Error::validation(format!("{} channel names for {c} channels", self.channel_names.len())));
        }
        let k = self.class_names.len();
        for (i, trial) in self.trials.iter().enumerate() {
            if trial.data.dim() != (c, t) {
                return Err(Error::validation(format!(
                    "trial {i} has shape {:?}, expected ({c}, {t})",
                    trial.data.dim()
                )));
            }
            if trial.label >= k {
                return Err(Error::validation(format!("trial {i} has label {} but only {k} classes", trial.label)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.trials[0].data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.trials[0].data.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.trials.iter().map(|t| t.label).collect()
    }

    /// Indices of all trials with label `class`, in storage order.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.trials.iter().enumerate().filter(|(_, t)| t.label == class).map(|(i, _)| i).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for t in &self.trials {
            counts[t.label] += 1;
        }
        counts
    }

    /// Distinct subject ids in order of first appearance.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in &self.trials {
            if !out.contains(&t.subject) {
                out.push(t.subject.clone());
            }
        }
        out
    }

    /// A new set holding the trials at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<EpochSet> {
        let trials = indices
            .iter()
            .map(|&i| self.trials.get(i).cloned().ok_or_else(|| Error::param(format!("trial index {i} out of range"))))
            .collect::<Result<Vec<_>>>()?;
        EpochSet::new(trials, self.fs, self.channel_names.clone(), self.class_names.clone())
    }

    /// One epoch set per subject, in order of first appearance.
    pub fn split_by_subject(&self) -> Vec<EpochSet> {
        self.subjects()
            .into_iter()
            .map(|s| EpochSet {
                trials: self.trials.iter().filter(|t| t.subject == s).cloned().collect(),
                fs: self.fs,
                channel_names: self.channel_names.clone(),
                class_names: self.class_names.clone(),
            })
            .collect()
    }

    /// True when both sets share sampling rate, channels, classes and trial length.
    pub fn metadata_matches(&self, other: &EpochSet) -> bool {
        self.fs == other.fs
            && self.channel_names == other.channel_names
            && self.class_names == other.class_names
            && self.n_samples() == other.n_samples()
    }

    /// Concatenates sets with identical metadata.
    pub fn concat(sets: &[&EpochSet]) -> Result<EpochSet> {
        let first = sets.first().ok_or_else(|| Error::validation("nothing to concatenate"))?;
        let mut trials = Vec::new();
        for s in sets {
            if !first.metadata_matches(s) {
                return Err(Error::validation(
                    "cannot concatenate epoch sets with different channels, classes, rates or lengths",
                ));
            }
            trials.extend(s.trials.iter().cloned());
        }
        EpochSet::new(trials, first.fs, first.channel_names.clone(), first.class_names.clone())
    }
}

/// Channel names `ch1..chN`.
pub fn default_channel_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("ch{i}")).collect()
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use ndarray::Array2;

    /// A small deterministic epoch set; trial `i` is filled with `i + j*0.5`.
    pub fn toy(n_per_class: usize, classes: usize, c: usize, t: usize, subject: &str) -> EpochSet {
        let mut trials = Vec::new();
        for i in 0..n_per_class * classes {
            let data = Array2::from_shape_fn((c, t), |(ch, s)| (i as f64) + 0.5 * (ch * t + s) as f64);
            trials.push(Trial { data, label: i % classes, subject: subject.to_string() });
        }
        EpochSet::new(trials, 100.0, default_channel_names(c), (0..classes).map(|k| format!("class{k}")).collect())
            .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::toy;
    use super::*;

    #[test]
    fn rejects_mismatched_shapes() {
        let mut set = toy(2, 2, 3, 8, "S1");
        set.trials[1].data = Array2::zeros((3, 7));
        assert!(matches!(set.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_out_of_range_label() {
        let mut set = toy(2, 2, 3, 8, "S1");
        set.trials[0].label = 2;
        assert!(set.validate().is_err());
    }

    #[test]
    fn rejects_single_channel() {
        let trials = vec![Trial { data: Array2::zeros((1, 8)), label: 0, subject: "S1".into() }];
        let r = EpochSet::new(trials, 100.0, vec!["a".into()], vec!["x".into()]);
        assert!(r.is_err());
    }

    #[test]
    fn split_by_subject_round_trips_through_concat() {
        let a = toy(2, 2, 3, 8, "S1");
        let b = toy(3, 2, 3, 8, "S2");
        let all = EpochSet::concat(&[&a, &b]).unwrap();
        assert_eq!(all.subjects(), vec!["S1", "S2"]);
        let parts = all.split_by_subject();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
