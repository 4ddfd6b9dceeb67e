//! CSP + logistic regression baseline: standardized log-variance features of
//! CSP-filtered trials fed to a multinomial logistic regression.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{apply_filters, design_csp, logvar_features, CspModel};
use crate::data::EpochSet;
use crate::{Error, Result};

/// L2 penalty on the regression weights (not the bias).
pub const LR_L2_PENALTY: f64 = 1e-4;
const MAX_ITERS: usize = 5000;
const GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CspLrModel {
    pub csp: CspModel,
    /// `f x K`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub feature_mean: Array1<f64>,
    pub feature_std: Array1<f64>,
}

impl CspLrModel {
    fn features(&self, trial: ArrayView2<f64>) -> Result<Array1<f64>> {
        let raw = logvar_features(apply_filters(&self.csp, trial)?.view());
        Ok((raw - &self.feature_mean) / &self.feature_std)
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax_slice(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Largest eigenvalue of `a' a / n` by power iteration.
fn gram_spectral_bound(a: &Array2<f64>) -> f64 {
    let n = a.nrows() as f64;
    let gram = a.t().dot(a) / n;
    let mut v = Array1::from_elem(gram.nrows(), 1.0 / (gram.nrows() as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..200 {
        let next = gram.dot(&v);
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = next / norm;
    }
    lambda
}

/// Designs CSP on `train` (binary or one-vs-rest by class count), then fits a
/// multinomial logistic regression by full-batch gradient descent.
pub fn train_csp_lr(train: &EpochSet, f: usize, ridge: Option<f64>) -> Result<CspLrModel> {
    let k = train.n_classes();
    if k < 2 {
        return Err(Error::validation("CSP-LR needs at least two classes"));
    }
    let csp = design_csp(train, f, ridge)?;
    let n = train.len();
    let mut feats = Array2::<f64>::zeros((n, f));
    for (i, trial) in train.trials.iter().enumerate() {
        feats.row_mut(i).assign(&logvar_features(apply_filters(&csp, trial.data.view())?.view()));
    }
    let mean = feats.mean_axis(Axis(0)).expect("non-empty");
    let std = feats.var_axis(Axis(0), 0.0).mapv(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
    let z = (&feats - &mean) / &std;

    let mut design = Array2::<f64>::ones((n, f + 1));
    design.slice_mut(ndarray::s![.., ..f]).assign(&z);
    let step = 1.0 / (0.5 * gram_spectral_bound(&design) + LR_L2_PENALTY);

    let labels = train.labels();
    let mut weights = Array2::<f64>::zeros((f, k));
    let mut bias = Array1::<f64>::zeros(k);
    for _ in 0..MAX_ITERS {
        let mut resid = z.dot(&weights) + &bias;
        for (mut row, &y) in resid.rows_mut().into_iter().zip(&labels) {
            let r = row.as_slice_mut().expect("standard layout");
            softmax_in_place(r);
            r[y] -= 1.0;
        }
        resid /= n as f64;
        let grad_w = z.t().dot(&resid) + &(&weights * LR_L2_PENALTY);
        let grad_b = resid.sum_axis(Axis(0));
        let norm = (grad_w.iter().chain(grad_b.iter()).map(|g| g * g).sum::<f64>()).sqrt();
        if norm < GRAD_TOL {
            break;
        }
        weights.scaled_add(-step, &grad_w);
        bias.scaled_add(-step, &grad_b);
    }
    Ok(CspLrModel { csp, weights, bias, feature_mean: mean, feature_std: std })
}

/// Class probabilities and the arg-max label (ties to the smallest index).
pub fn predict_csp_lr(model: &CspLrModel, trial: ArrayView2<f64>) -> Result<(usize, Vec<f64>)> {
    let x = model.features(trial)?;
    let mut logits = (x.dot(&model.weights) + &model.bias).to_vec();
    softmax_in_place(&mut logits);
    Ok((argmax_slice(&logits), logits))
}
