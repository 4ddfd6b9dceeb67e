use rand::seq::index::sample;

use super::graph::ModelGraph;
use super::loss::softmax_xent;
use super::tensor::Tensor4;
use super::{logits_matrix, model_backward, Mode};
use crate::rng::rng_for;
use crate::Result;

/// Gradients smaller than this in magnitude are compared on an absolute
/// scale, since their relative error is dominated by round-off.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Upper bound on checked entries per parameter; `None` checks all.
    pub max_entries_per_param: Option<usize>,
    pub dropout_seed: u64,
    pub sample_seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, max_entries_per_param: None, dropout_seed: 7, sample_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(parameter name, worst relative error)` in parameter order.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub n_checked: usize,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

fn train_loss(model: &ModelGraph, batch: &Tensor4, labels: &[usize], seed: u64) -> Result<f64> {
    let tape = model.forward(batch, Mode::Train, seed)?;
    Ok(softmax_xent(logits_matrix(tape.output()).view(), labels)?.0)
}

/// Compares back-propagated gradients of the train-mode cross-entropy with
/// central differences, for every trainable parameter. Dropout masks are
/// held fixed through `dropout_seed`; batch-norm uses batch statistics.
pub fn grad_check(
    model: &mut ModelGraph,
    batch: &Tensor4,
    labels: &[usize],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    model_backward(model, batch, labels, cfg.dropout_seed)?;
    let analytic: Vec<Vec<f64>> = model.params.iter().map(|p| p.grad.clone()).collect();
    let mut per_param = Vec::new();
    let mut n_checked = 0;
    for pi in 0..model.params.len() {
        if !model.params[pi].trainable {
            continue;
        }
        let len = model.params[pi].len();
        let entries: Vec<usize> = match cfg.max_entries_per_param {
            Some(m) if m < len => {
                let mut rng = rng_for(cfg.sample_seed, "gradcheck", pi as u64);
                let mut idx = sample(&mut rng, len, m).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..len).collect(),
        };
        let mut worst = 0.0f64;
        for k in entries {
            let orig = model.params[pi].value[k];
            model.params[pi].value[k] = orig + cfg.step;
            let plus = train_loss(model, batch, labels, cfg.dropout_seed);
            model.params[pi].value[k] = orig - cfg.step;
            let minus = train_loss(model, batch, labels, cfg.dropout_seed);
            model.params[pi].value[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * cfg.step);
            worst = worst.max(rel_error(analytic[pi][k], numeric));
            n_checked += 1;
        }
        per_param.push((model.params[pi].name.clone(), worst));
    }
    let max_rel_error = per_param.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GradCheckReport { per_param, max_rel_error, n_checked })
}
