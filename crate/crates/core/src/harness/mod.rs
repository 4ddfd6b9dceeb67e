//! Training loop, evaluation, the within-subject and leave-one-subject-out
//! protocols, sweeps, statistics and reports.

mod protocol;
mod report;
mod stats;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use crate::csp::{design_csp, predict_csp_lr, train_csp_lr};
use crate::cspnet::{make_cspnet1, make_cspnet2, CspLayerMode, CspNetFamily, CspVariant};
use crate::data::EpochSet;
use crate::models::{build_backbone, BackboneKind, BackboneSpec};
use crate::nn::{adam_step, model_backward, AdamState, ModelGraph, Tensor4};
use crate::rng::{rng_for, substream};
use crate::{Error, Result};
use rand::seq::SliceRandom;

pub use protocol::{
    run_cross_subject, run_within_subject, sweep_filter_count, sweep_training_ratio, CellStatus, ProtocolOptions,
    Scenario, SweepCell,
};
pub use report::{
    export_report, export_sweep, export_tables, read_runs_csv, significance_stars, ApproachRow, Comparison,
    ExperimentReport,
};
pub use stats::{bh_adjust, paired_ttest, regularized_incomplete_beta, student_t_cdf};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub dropout: f64,
    /// Epochs between curve samples; the final epoch is always sampled.
    pub eval_every: usize,
    /// Report class-balanced instead of plain accuracy.
    pub balanced_accuracy: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            lr: 0.01,
            weight_decay: 0.0005,
            max_epochs: 200,
            seed: 0,
            dropout: 0.25,
            eval_every: 10,
            balanced_accuracy: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.eval_every == 0 {
            return Err(Error::param("batch size, epochs and eval interval must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::param("learning rate and weight decay must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// One trained-and-evaluated model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub approach: String,
    pub subject: String,
    pub repeat: usize,
    /// Final-epoch test accuracy.
    pub accuracy: f64,
    /// Epoch numbers at which the curves were sampled.
    pub epochs: Vec<usize>,
    pub train_curve: Vec<f64>,
    pub test_curve: Vec<f64>,
    pub wall_time_s: f64,
}

/// What to train: the CSP + logistic-regression baseline, a plain backbone,
/// or a CSP-Net over a backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    CspLr,
    Standard(BackboneKind),
    CspNet { family: CspNetFamily, variant: CspVariant, backbone: BackboneKind },
}

impl Approach {
    /// Parses `csp-lr`, `standard` or `cspnet{1,2}-{fix,upd,rad}` with the
    /// backbone given separately. `cspnet2-rad` is not a defined approach.
    pub fn parse(name: &str, backbone: BackboneKind) -> Result<Approach> {
        let name = name.trim();
        match name {
            "csp-lr" => return Ok(Approach::CspLr),
            "standard" | "backbone" => return Ok(Approach::Standard(backbone)),
            _ => {}
        }
        let bad = || Error::param(format!("unknown approach {name:?}"));
        let (fam, var) = name.split_once('-').ok_or_else(bad)?;
        let family = match fam {
            "cspnet1" => CspNetFamily::CspNet1,
            "cspnet2" => CspNetFamily::CspNet2,
            _ => return Err(bad()),
        };
        let variant: CspVariant = var.parse().map_err(|_| bad())?;
        if family == CspNetFamily::CspNet2 && variant == CspVariant::Rad {
            return Err(bad());
        }
        Ok(Approach::CspNet { family, variant, backbone })
    }

    pub fn backbone(&self) -> Option<BackboneKind> {
        match *self {
            Approach::CspLr => None,
            Approach::Standard(b) | Approach::CspNet { backbone: b, .. } => Some(b),
        }
    }

    /// Report label, e.g. `csp-lr`, `eegnet/standard`, `eegnet/cspnet1-fix`.
    pub fn label(&self) -> String {
        match self {
            Approach::CspLr => "csp-lr".to_string(),
            Approach::Standard(b) => format!("{b}/standard"),
            Approach::CspNet { family, variant, backbone } => format!("{backbone}/{}-{variant}", family.name()),
        }
    }

    /// Whether designing CSP filters is part of fitting.
    pub fn uses_csp(&self) -> bool {
        !matches!(self, Approach::Standard(_))
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Approach {
    type Err = Error;

    /// Parses a full label such as `eegnet/cspnet1-fix` or `csp-lr`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('/') {
            Some((b, a)) => Approach::parse(a, b.parse()?),
            None => Approach::parse(s, BackboneKind::EegNet),
        }
    }
}

/// Called with a stage name and the data whenever a fit path consumes data.
/// Used to verify that test trials never reach fitting.
pub type FitObserver = Arc<dyn Fn(&str, &EpochSet) + Send + Sync>;

/// Stacks trials into a `(n, 1, c, t)` tensor.
pub fn epochs_to_tensor(epochs: &EpochSet, indices: &[usize]) -> Tensor4 {
    let (c, t) = (epochs.n_channels(), epochs.n_samples());
    let mut data = Vec::with_capacity(indices.len() * c * t);
    for &i in indices {
        data.extend(epochs.trials[i].data.iter());
    }
    Tensor4::from_vec([indices.len(), 1, c, t], data).expect("trial tensor shape")
}

fn accuracy_from_predictions(pred: &[usize], labels: &[usize], n_classes: usize, balanced: bool) -> f64 {
    if !balanced {
        let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
        return hits as f64 / labels.len() as f64;
    }
    let mut per_class = Vec::new();
    for k in 0..n_classes {
        let total = labels.iter().filter(|&&y| y == k).count();
        if total > 0 {
            let hits = pred.iter().zip(labels).filter(|&(&p, &y)| y == k && p == k).count();
            per_class.push(hits as f64 / total as f64);
        }
    }
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

const EVAL_CHUNK: usize = 256;

/// Eval-mode argmax predictions (ties go to the smallest class index).
pub fn predict(model: &ModelGraph, epochs: &EpochSet) -> Result<Vec<usize>> {
    let mut pred = Vec::with_capacity(epochs.len());
    let all: Vec<usize> = (0..epochs.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let out = model.predict(&epochs_to_tensor(epochs, chunk))?;
        let k = out.sample_len();
        pred.extend(out.data().chunks(k).map(crate::csp::argmax_slice));
    }
    Ok(pred)
}

/// Fraction of trials whose argmax prediction matches the label.
pub fn evaluate(model: &ModelGraph, epochs: &EpochSet) -> Result<f64> {
    evaluate_with(model, epochs, false)
}

pub fn evaluate_with(model: &ModelGraph, epochs: &EpochSet, balanced: bool) -> Result<f64> {
    if epochs.is_empty() {
        return Err(Error::param("cannot evaluate on an empty set"));
    }
    let pred = predict(model, epochs)?;
    Ok(accuracy_from_predictions(&pred, &epochs.labels(), epochs.n_classes(), balanced))
}

/// Per-epoch accuracy curves of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub epochs: Vec<usize>,
    pub train_curve: Vec<f64>,
    pub test_curve: Vec<f64>,
    pub final_test_accuracy: f64,
}

/// Adam training for exactly `cfg.max_epochs` epochs of shuffled mini-batches
/// (the last short batch is kept). Only `train` drives the updates; `test`
/// is evaluated for the curves.
pub fn train_model(
    model: &mut ModelGraph,
    train: &EpochSet,
    test: &EpochSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::param("training and test sets must be non-empty"));
    }
    let labels = train.labels();
    let mut adam = AdamState::new(&model.params, cfg.lr, cfg.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut outcome =
        TrainOutcome { epochs: Vec::new(), train_curve: Vec::new(), test_curve: Vec::new(), final_test_accuracy: 0.0 };
    let mut step = 0u64;
    for epoch in 1..=cfg.max_epochs {
        let mut rng = rng_for(cfg.seed, "shuffle", epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let x = epochs_to_tensor(train, batch);
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, tape) = model_backward(model, &x, &y, substream(cfg.seed, "dropout", step))
                .map_err(|e| Error::Numerical(format!("epoch {epoch}: {e}")))?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("loss became non-finite at epoch {epoch}")));
            }
            model.commit_running_stats(&tape);
            adam_step(&mut adam, &mut model.params);
            step += 1;
        }
        if epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs {
            outcome.epochs.push(epoch);
            outcome.train_curve.push(evaluate_with(model, train, cfg.balanced_accuracy)?);
            outcome.test_curve.push(evaluate_with(model, test, cfg.balanced_accuracy)?);
        }
    }
    outcome.final_test_accuracy = *outcome.test_curve.last().expect("final epoch is sampled");
    Ok(outcome)
}

/// Settings shared by every fit within an experiment.
#[derive(Clone)]
pub struct FitSettings {
    pub train: TrainConfig,
    /// Number of CSP filters.
    pub n_filters: usize,
    /// CSP ridge; `None` uses the default scaled ridge.
    pub ridge: Option<f64>,
    /// Whether `rad` layers are trained.
    pub rad_trainable: bool,
    pub observer: Option<FitObserver>,
}

impl fmt::Debug for FitSettings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FitSettings")
            .field("train", &self.train)
            .field("n_filters", &self.n_filters)
            .field("ridge", &self.ridge)
            .field("rad_trainable", &self.rad_trainable)
            .finish_non_exhaustive()
    }
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings { train: TrainConfig::default(), n_filters: 8, ridge: None, rad_trainable: false, observer: None }
    }
}

impl FitSettings {
    fn observe(&self, stage: &str, data: &EpochSet) {
        if let Some(obs) = &self.observer {
            obs(stage, data);
        }
    }
}

/// Builds the network for a neural approach; CSP filters (if any) are
/// designed on `train` only.
pub fn build_network(approach: Approach, train: &EpochSet, settings: &FitSettings, seed: u64) -> Result<ModelGraph> {
    let Some(kind) = approach.backbone() else {
        return Err(Error::param("csp-lr has no network"));
    };
    let mut spec = BackboneSpec::new(kind, train.n_channels(), train.n_samples(), train.fs, train.n_classes());
    spec.dropout = settings.train.dropout;
    let init_seed = substream(seed, "model", 0);
    match approach {
        Approach::Standard(_) => build_backbone(&spec, init_seed),
        Approach::CspNet { family, variant, .. } => {
            settings.observe("csp", train);
            let csp = design_csp(train, settings.n_filters, settings.ridge)?;
            let mut mode = CspLayerMode::new(variant, substream(seed, "csp_layer", 0));
            mode.rad_trainable = settings.rad_trainable;
            let net = match family {
                CspNetFamily::CspNet1 => make_cspnet1(&spec, &csp, mode, init_seed)?,
                CspNetFamily::CspNet2 => make_cspnet2(&spec, &csp, mode, init_seed)?,
            };
            Ok(net.graph)
        }
        Approach::CspLr => unreachable!(),
    }
}

/// Fits `approach` on `train` and evaluates on `test`.
pub fn run_single(
    approach: Approach,
    train: &EpochSet,
    test: &EpochSet,
    settings: &FitSettings,
    seed: u64,
    subject: &str,
    repeat: usize,
) -> Result<RunRecord> {
    let start = Instant::now();
    let (epochs, train_curve, test_curve, accuracy) = match approach {
        Approach::CspLr => {
            settings.observe("csp-lr", train);
            let model = train_csp_lr(train, settings.n_filters, settings.ridge)?;
            let score = |set: &EpochSet| -> Result<f64> {
                let pred = set
                    .trials
                    .iter()
                    .map(|t| predict_csp_lr(&model, t.data.view()).map(|p| p.0))
                    .collect::<Result<Vec<_>>>()?;
                Ok(accuracy_from_predictions(&pred, &set.labels(), set.n_classes(), settings.train.balanced_accuracy))
            };
            let (tr, te) = (score(train)?, score(test)?);
            (vec![0], vec![tr], vec![te], te)
        }
        _ => {
            let mut model = build_network(approach, train, settings, seed)?;
            settings.observe("train", train);
            let cfg = TrainConfig { seed: substream(seed, "train", 0), ..settings.train.clone() };
            let out = train_model(&mut model, train, test, &cfg)?;
            (out.epochs, out.train_curve, out.test_curve, out.final_test_accuracy)
        }
    };
    Ok(RunRecord {
        approach: approach.label(),
        subject: subject.to_string(),
        repeat,
        accuracy,
        epochs,
        train_curve,
        test_curve,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn approach_labels_parse_back() {
        let all = [
            Approach::CspLr,
            Approach::Standard(BackboneKind::DeepCnn),
            Approach::CspNet {
                family: CspNetFamily::CspNet1,
                variant: CspVariant::Rad,
                backbone: BackboneKind::EegNet,
            },
            Approach::CspNet {
                family: CspNetFamily::CspNet2,
                variant: CspVariant::Upd,
                backbone: BackboneKind::ShallowCnn,
            },
        ];
        for a in all {
            assert_eq!(a.label().parse::<Approach>().unwrap(), a);
        }
        assert!(Approach::parse("cspnet2-rad", BackboneKind::EegNet).is_err());
        assert!(Approach::parse("cspnet3-fix", BackboneKind::EegNet).is_err());
    }

    #[test]
    fn balanced_accuracy_weights_classes_equally() {
        let pred = [0, 0, 0, 0, 1];
        let labels = [0, 0, 0, 1, 1];
        assert!((accuracy_from_predictions(&pred, &labels, 2, false) - 0.8).abs() < 1e-15);
        assert!((accuracy_from_predictions(&pred, &labels, 2, true) - 0.75).abs() < 1e-15);
    }
}
