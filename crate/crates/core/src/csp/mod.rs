//! Common spatial patterns.
//!
//! Binary CSP looks for filters `w` maximizing the Rayleigh quotient
//! `w' C1 w / w' C2 w` of the two class-mean covariances. Its stationary
//! points are the generalized eigenvectors of the pencil `(C1, C2)`; they are
//! computed here by whitening with the Cholesky factor of `C2 + ridge I`,
//! diagonalizing the whitened `C1`, and mapping back. Filters for the `f/2`
//! largest and `f/2` smallest eigenvalues are kept.

mod io;
pub mod linalg;
mod lr;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::data::EpochSet;
use crate::{Error, Result};

pub use io::{read_csp_model, write_csp_model, write_weights_csv};
pub(crate) use lr::argmax_slice;
pub use lr::{predict_csp_lr, train_csp_lr, CspLrModel, LR_L2_PENALTY};

use linalg::{cholesky, lower_inverse, symmetric_eigen};

/// Added to `log(var)` so constant rows stay finite.
pub const LOGVAR_EPS: f64 = 1e-10;

/// A class-mean (or single-trial) spatial covariance, trace-normalized per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    pub matrix: Array2<f64>,
    pub n_trials_averaged: usize,
}

impl SpatialCovariance {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CspScheme {
    Binary,
    OneVsRest { n_classes: usize },
}

/// A bank of `f` spatial filters, stored as the columns of a `c x f` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CspModel {
    pub w: Array2<f64>,
    /// Generalized eigenvalue of each column.
    pub eigenvalues: Vec<f64>,
    pub scheme: CspScheme,
    /// The class each column favours (binary: first half class 0, second half class 1).
    pub class_blocks: Vec<usize>,
}

impl CspModel {
    pub fn n_channels(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_filters(&self) -> usize {
        self.w.ncols()
    }
}

/// `X X' / trace(X X')` for a `c x t` trial.
pub fn trial_covariance(trial: ArrayView2<f64>) -> Result<SpatialCovariance> {
    if trial.ncols() < 2 {
        return Err(Error::param("trial needs at least 2 samples"));
    }
    let mut cov = trial.dot(&trial.t());
    let trace = cov.diag().sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::Degenerate("trial has zero (or non-finite) power".into()));
    }
    cov /= trace;
    Ok(SpatialCovariance { matrix: cov, n_trials_averaged: 1 })
}

fn mean_covariance<'a>(trials: impl Iterator<Item = ArrayView2<'a, f64>>, c: usize) -> Result<SpatialCovariance> {
    let mut acc = Array2::<f64>::zeros((c, c));
    let mut n = 0;
    for t in trials {
        acc += &trial_covariance(t)?.matrix;
        n += 1;
    }
    if n == 0 {
        return Err(Error::validation("no trials to average"));
    }
    acc /= n as f64;
    Ok(SpatialCovariance { matrix: acc, n_trials_averaged: n })
}

/// Mean of the per-trial covariances of all trials labeled `class`.
pub fn class_mean_covariance(epochs: &EpochSet, class: usize) -> Result<SpatialCovariance> {
    if class >= epochs.n_classes() {
        return Err(Error::param(format!("class {class} out of range")));
    }
    mean_covariance(epochs.trials.iter().filter(|t| t.label == class).map(|t| t.data.view()), epochs.n_channels())
        .map_err(|e| match e {
            Error::Validation(_) => Error::validation(format!("class {} has no trials", epochs.class_names[class])),
            other => other,
        })
}

/// Mean covariance of every trial not labeled `class`.
pub fn rest_mean_covariance(epochs: &EpochSet, class: usize) -> Result<SpatialCovariance> {
    mean_covariance(epochs.trials.iter().filter(|t| t.label != class).map(|t| t.data.view()), epochs.n_channels())
}

/// Default ridge `1e-6 * trace(C2) / c`.
pub fn default_ridge(c2: &SpatialCovariance) -> f64 {
    1e-6 * c2.trace() / c2.dim() as f64
}

/// Sorted generalized eigenpairs of `c1 w = lambda (c2 + ridge I) w`, each
/// vector normalized to unit `(c2 + ridge I)`-norm with its largest-magnitude
/// entry positive. Eigenvalues descend.
fn generalized_eigen(c1: &Array2<f64>, c2: &Array2<f64>, ridge: f64) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = c1.nrows();
    let b = c2 + &(Array2::<f64>::eye(n) * ridge);
    let l = cholesky(&b)?;
    let l_inv = lower_inverse(&l);
    let whitened = l_inv.dot(c1).dot(&l_inv.t());
    let (values, vectors) = symmetric_eigen(&whitened);
    let mut w = l_inv.t().dot(&vectors);
    for mut col in w.columns_mut() {
        let norm = col.dot(&b.dot(&col)).sqrt();
        col /= norm;
        fix_sign(&mut col);
    }
    Ok((values.to_vec(), w))
}

/// Makes the largest-magnitude component positive; ties go to the lowest index.
fn fix_sign(col: &mut ndarray::ArrayViewMut1<f64>) {
    let mut best = 0;
    for i in 1..col.len() {
        if col[i].abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        col.mapv_inplace(|v| -v);
    }
}

fn check_pair(c1: &SpatialCovariance, c2: &SpatialCovariance) -> Result<usize> {
    let c = c1.dim();
    if c1.matrix.dim() != (c, c) || c2.matrix.dim() != (c, c) {
        return Err(Error::param("covariances must be square and of equal size"));
    }
    Ok(c)
}

/// Binary CSP: the `f/2` filters with largest and the `f/2` with smallest
/// generalized eigenvalues, ordered by descending eigenvalue.
pub fn solve_csp(c1: &SpatialCovariance, c2: &SpatialCovariance, f: usize, ridge: f64) -> Result<CspModel> {
    let c = check_pair(c1, c2)?;
    if f == 0 || f % 2 != 0 {
        return Err(Error::param(format!("binary CSP needs an even, positive filter count, got {f}")));
    }
    if f > c {
        return Err(Error::param(format!("cannot keep {f} filters from {c} channels")));
    }
    if !(ridge >= 0.0) {
        return Err(Error::param("ridge must be nonnegative"));
    }
    let (values, vectors) = generalized_eigen(&c1.matrix, &c2.matrix, ridge)?;
    let keep: Vec<usize> = (0..f / 2).chain(c - f / 2..c).collect();
    Ok(CspModel {
        w: vectors.select(Axis(1), &keep),
        eigenvalues: keep.iter().map(|&i| values[i]).collect(),
        scheme: CspScheme::Binary,
        class_blocks: (0..f).map(|i| usize::from(i >= f / 2)).collect(),
    })
}

/// One-versus-rest CSP: for each class, the `f/K` filters with largest
/// eigenvalue of (class, rest); columns grouped by class. Two-class input
/// takes the binary path.
pub fn solve_csp_multiclass(epochs: &EpochSet, f: usize, ridge: Option<f64>) -> Result<CspModel> {
    let k = epochs.n_classes();
    if k < 2 {
        return Err(Error::validation("CSP needs at least two classes"));
    }
    if k == 2 {
        let c1 = class_mean_covariance(epochs, 0)?;
        let c2 = class_mean_covariance(epochs, 1)?;
        let r = ridge.unwrap_or_else(|| default_ridge(&c2));
        return solve_csp(&c1, &c2, f, r);
    }
    if f == 0 || f % k != 0 {
        return Err(Error::param(format!("{f} filters cannot be split evenly over {k} classes")));
    }
    let c = epochs.n_channels();
    if f > c {
        return Err(Error::param(format!("cannot keep {f} filters from {c} channels")));
    }
    let per_class = f / k;
    let mut w = Array2::<f64>::zeros((c, f));
    let mut eigenvalues = Vec::with_capacity(f);
    let mut class_blocks = Vec::with_capacity(f);
    for class in 0..k {
        let c1 = class_mean_covariance(epochs, class)?;
        let c2 = rest_mean_covariance(epochs, class)?;
        let r = ridge.unwrap_or_else(|| default_ridge(&c2));
        let (values, vectors) = generalized_eigen(&c1.matrix, &c2.matrix, r)?;
        for j in 0..per_class {
            let col = class * per_class + j;
            w.column_mut(col).assign(&vectors.column(j));
            eigenvalues.push(values[j]);
            class_blocks.push(class);
        }
    }
    Ok(CspModel { w, eigenvalues, scheme: CspScheme::OneVsRest { n_classes: k }, class_blocks })
}

/// Designs CSP on a training set: binary for two classes, one-vs-rest otherwise.
pub fn design_csp(train: &EpochSet, f: usize, ridge: Option<f64>) -> Result<CspModel> {
    solve_csp_multiclass(train, f, ridge)
}

/// `W' X`: the `f x t` filtered trial.
pub fn apply_filters(model: &CspModel, trial: ArrayView2<f64>) -> Result<Array2<f64>> {
    if trial.nrows() != model.n_channels() {
        return Err(Error::param(format!(
            "trial has {} channels, filters expect {}",
            trial.nrows(),
            model.n_channels()
        )));
    }
    Ok(model.w.t().dot(&trial))
}

/// Per row: `ln(population variance + 1e-10)`.
pub fn logvar_features(filtered: ArrayView2<f64>) -> Array1<f64> {
    let t = filtered.ncols() as f64;
    filtered
        .rows()
        .into_iter()
        .map(|row| {
            let mean = row.sum() / t;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
            (var + LOGVAR_EPS).ln()
        })
        .collect()
}

/// Per-column Rayleigh quotient `w' C1 w / w' C2 w`.
pub fn csp_objective(w: &Array2<f64>, c1: &SpatialCovariance, c2: &SpatialCovariance) -> Result<Vec<f64>> {
    let c = check_pair(c1, c2)?;
    if w.nrows() != c {
        return Err(Error::param(format!("filters have {} rows, covariances are {c}x{c}", w.nrows())));
    }
    w.columns()
        .into_iter()
        .map(|col| {
            let num = col.dot(&c1.matrix.dot(&col));
            let den = col.dot(&c2.matrix.dot(&col));
            if den == 0.0 {
                Err(Error::Degenerate("filter has zero variance under C2".into()))
            } else {
                Ok(num / den)
            }
        })
        .collect()
}
