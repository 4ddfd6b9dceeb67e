#![allow(dead_code)]

use cspnet_core::csp::SpatialCovariance;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// `A A' / m + 0.1 I` normalized to unit trace.
pub fn random_spd(rng: &mut ChaCha8Rng, c: usize) -> SpatialCovariance {
    let a = normal_matrix(rng, c, c + 3);
    let mut m = a.dot(&a.t()) / (c + 3) as f64 + Array2::<f64>::eye(c) * 0.1;
    let tr = m.diag().sum();
    m /= tr;
    SpatialCovariance { matrix: m, n_trials_averaged: 1 }
}

pub fn to_na(a: &Array2<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigenvalues of `(C2 + ridge I)^-1 C1` from nalgebra's general
/// (non-symmetric) Schur-based solver, sorted descending.
pub fn oracle_pencil_eigenvalues(c1: &Array2<f64>, c2: &Array2<f64>, ridge: f64) -> Vec<f64> {
    let n = c1.nrows();
    let b = to_na(c2) + nalgebra::DMatrix::<f64>::identity(n, n) * ridge;
    let m = b.try_inverse().expect("invertible") * to_na(c1);
    let mut ev: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .map(|z| {
            assert!(z.im.abs() < 1e-9, "pencil of SPD matrices has real spectrum");
            z.re
        })
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
