use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::{run_single, Approach, FitSettings, RunRecord};
use crate::data::{split_loso, split_within_subject, subsample_training, EpochSet};
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Within,
    Cross,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within" => Ok(Scenario::Within),
            "cross" => Ok(Scenario::Cross),
            _ => Err(Error::param(format!("unknown scenario {s:?} (expected within or cross)"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Within => "within",
            Scenario::Cross => "cross",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOptions {
    pub fit: FitSettings,
    pub repeats: usize,
    pub base_seed: u64,
    /// Worker threads; 1 runs everything sequentially on the caller's thread.
    pub jobs: usize,
    /// Fraction of each subject's trials used for training (within-subject).
    pub train_split: f64,
    /// Fraction of the training split actually used (ratio sweep).
    pub train_ratio: f64,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            fit: FitSettings::default(),
            repeats: 5,
            base_seed: 0,
            jobs: 1,
            train_split: 0.8,
            train_ratio: 1.0,
        }
    }
}

fn run_tasks<F>(n_tasks: usize, jobs: usize, task: F) -> Result<Vec<RunRecord>>
where
    F: Fn(usize) -> Result<RunRecord> + Sync + Send,
{
    let results: Vec<Result<RunRecord>> = if jobs <= 1 {
        (0..n_tasks).map(&task).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::param(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| (0..n_tasks).into_par_iter().map(&task).collect())
    };
    let mut records = Vec::with_capacity(n_tasks);
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Numerical(format!("{} run(s) failed: {}", failures.len(), failures.join("; "))));
    }
    records.sort_by(|a, b| (&a.subject, a.repeat).cmp(&(&b.subject, b.repeat)));
    Ok(records)
}

fn check_options(subjects: &[EpochSet], opts: &ProtocolOptions) -> Result<()> {
    if subjects.is_empty() {
        return Err(Error::param("no subjects"));
    }
    if opts.repeats == 0 {
        return Err(Error::param("at least one repeat is needed"));
    }
    opts.fit.train.validate()
}

/// Per subject and repeat `r`: stratified split with seed `base_seed + r`,
/// optional subsampling of the training split, fit on the training part only,
/// evaluate on the rest.
pub fn run_within_subject(subjects: &[EpochSet], approach: Approach, opts: &ProtocolOptions) -> Result<Vec<RunRecord>> {
    check_options(subjects, opts)?;
    run_tasks(subjects.len() * opts.repeats, opts.jobs, |task| {
        let (s, r) = (task / opts.repeats, task % opts.repeats);
        let set = &subjects[s];
        let name = set.trials[0].subject.clone();
        let seed = opts.base_seed + r as u64;
        let ctx = |e: Error| Error::Numerical(format!("{} subject {name} repeat {r}: {e}", approach.label()));
        let (train, test) =
            split_within_subject(set, opts.train_split, seed).and_then(|p| p.apply(set)).map_err(ctx)?;
        let train = subsample_training(&train, opts.train_ratio, seed).map_err(ctx)?;
        run_single(approach, &train, &test, &opts.fit, substream(seed, "run", s as u64), &name, r).map_err(ctx)
    })
}

/// Leave-one-subject-out: each subject is the test set once, the rest are
/// pooled for fitting. Repeats differ only in the training seed.
pub fn run_cross_subject(subjects: &[EpochSet], approach: Approach, opts: &ProtocolOptions) -> Result<Vec<RunRecord>> {
    check_options(subjects, opts)?;
    if subjects.len() < 2 {
        return Err(Error::param("leave-one-subject-out needs at least 2 subjects"));
    }
    run_tasks(subjects.len() * opts.repeats, opts.jobs, |task| {
        let (s, r) = (task / opts.repeats, task % opts.repeats);
        let name = subjects[s].trials[0].subject.clone();
        let seed = opts.base_seed + r as u64;
        let ctx = |e: Error| Error::Numerical(format!("{} held-out {name} repeat {r}: {e}", approach.label()));
        let (train, test) = split_loso(subjects, &name).map_err(ctx)?;
        let train = subsample_training(&train, opts.train_ratio, seed).map_err(ctx)?;
        run_single(approach, &train, &test, &opts.fit, substream(seed, "run", s as u64), &name, r).map_err(ctx)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Done(Vec<RunRecord>),
    Failed(String),
    Skipped(String),
}

/// One `(approach, swept value)` cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub approach: String,
    pub value: f64,
    pub status: CellStatus,
}

impl SweepCell {
    pub fn mean_accuracy(&self) -> Option<f64> {
        match &self.status {
            CellStatus::Done(recs) if !recs.is_empty() => {
                Some(recs.iter().map(|r| r.accuracy).sum::<f64>() / recs.len() as f64)
            }
            _ => None,
        }
    }
}

/// Within-subject protocol with the training split subsampled to each ratio;
/// CSP is re-designed on the subsample. Runs that fail become failed cells.
pub fn sweep_training_ratio(
    subjects: &[EpochSet],
    approach: Approach,
    ratios: &[f64],
    opts: &ProtocolOptions,
) -> Result<Vec<SweepCell>> {
    if let Some(bad) = ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(Error::param(format!("training ratio {bad} outside (0, 1]")));
    }
    Ok(ratios
        .iter()
        .map(|&ratio| {
            let o = ProtocolOptions { train_ratio: ratio, ..opts.clone() };
            let status = match run_within_subject(subjects, approach, &o) {
                Ok(recs) => CellStatus::Done(recs),
                Err(e) => CellStatus::Failed(e.to_string()),
            };
            SweepCell { approach: approach.label(), value: ratio, status }
        })
        .collect())
}

/// The chosen protocol repeated for each filter count. Counts that exceed the
/// channel count or cannot be split over the classes are skipped.
pub fn sweep_filter_count(
    subjects: &[EpochSet],
    approach: Approach,
    f_values: &[usize],
    scenario: Scenario,
    opts: &ProtocolOptions,
) -> Result<Vec<SweepCell>> {
    let first = subjects.first().ok_or_else(|| Error::param("no subjects"))?;
    let (c, k) = (first.n_channels(), first.n_classes());
    Ok(f_values
        .iter()
        .map(|&f| {
            let skip = if f == 0 {
                Some("no filters".to_string())
            } else if f > c {
                Some(format!("f={f} exceeds {c} channels"))
            } else if k == 2 && f % 2 != 0 {
                Some(format!("f={f} is odd for a two-class problem"))
            } else if k > 2 && f % k != 0 {
                Some(format!("f={f} is not divisible by {k} classes"))
            } else {
                None
            };
            let status = match skip {
                Some(reason) => CellStatus::Skipped(reason),
                None => {
                    let mut o = opts.clone();
                    o.fit.n_filters = f;
                    let res = match scenario {
                        Scenario::Within => run_within_subject(subjects, approach, &o),
                        Scenario::Cross => run_cross_subject(subjects, approach, &o),
                    };
                    match res {
                        Ok(recs) => CellStatus::Done(recs),
                        Err(e) => CellStatus::Failed(e.to_string()),
                    }
                }
            };
            SweepCell { approach: approach.label(), value: f as f64, status }
        })
        .collect())
}
