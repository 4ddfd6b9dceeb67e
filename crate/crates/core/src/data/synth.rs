use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use super::{default_channel_names, EpochSet, Trial};
use crate::csp::linalg::cholesky;
use crate::rng::rng_for;
use crate::{Error, Result};

/// Recipe for a synthetic dataset whose classes differ only in spatial
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_channels: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    /// One SPD `c x c` covariance per class.
    pub class_covariances: Vec<Array2<f64>>,
    pub trials_per_class: usize,
    pub noise_scale: f64,
    pub fs: f64,
}

impl SynthSpec {
    /// Class covariances `R + contrast * a_k a_k'` over a shared exponentially
    /// decaying correlation `R = rho^|i-j|`. The class-`k` source pattern
    /// `a_k` is a unit-norm Gaussian bump (width one channel) centred at
    /// channel position `(k + 1/2) c / K - 1/2`, so each class boosts a
    /// spatially spread group of neighbouring channels rather than one channel.
    pub fn contrast(
        n_channels: usize,
        n_samples: usize,
        n_classes: usize,
        trials_per_class: usize,
        contrast: f64,
    ) -> Self {
        let rho: f64 = 0.3;
        let class_covariances = (0..n_classes)
            .map(|k| {
                let centre = (k as f64 + 0.5) * n_channels as f64 / n_classes.max(1) as f64 - 0.5;
                let mut a: Vec<f64> = (0..n_channels).map(|i| (-(i as f64 - centre).powi(2) / 2.0).exp()).collect();
                let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                a.iter_mut().for_each(|v| *v /= norm);
                Array2::from_shape_fn((n_channels, n_channels), |(i, j)| {
                    rho.powi((i as i32 - j as i32).abs()) + contrast * a[i] * a[j]
                })
            })
            .collect();
        SynthSpec { n_channels, n_samples, n_classes, class_covariances, trials_per_class, noise_scale: 0.1, fs: 128.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 2 || self.n_samples < 2 {
            return Err(Error::param("synthetic trials need at least 2 channels and 2 samples"));
        }
        if self.n_classes < 1 || self.trials_per_class < 1 {
            return Err(Error::param("need at least one class and one trial per class"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::param(format!("noise scale must be >= 0, got {}", self.noise_scale)));
        }
        if !(self.fs > 0.0) {
            return Err(Error::param("sampling rate must be positive"));
        }
        if self.class_covariances.len() != self.n_classes {
            return Err(Error::param(format!(
                "{} covariances for {} classes",
                self.class_covariances.len(),
                self.n_classes
            )));
        }
        for (k, cov) in self.class_covariances.iter().enumerate() {
            if cov.dim() != (self.n_channels, self.n_channels) {
                return Err(Error::param(format!("covariance {k} has shape {:?}", cov.dim())));
            }
            cholesky(cov)
                .map_err(|_| Error::param(format!("covariance of class {k} is not symmetric positive definite")))?;
        }
        Ok(())
    }
}

/// One subject's worth of synthetic trials, tagged with subject `S1`.
pub fn synthesize_dataset(spec: &SynthSpec, seed: u64) -> Result<EpochSet> {
    synthesize_subject(spec, seed, "S1")
}

/// `n_subjects` independent draws from the same recipe, subjects `S1..Sn`.
pub fn synthesize_subjects(spec: &SynthSpec, n_subjects: usize, seed: u64) -> Result<Vec<EpochSet>> {
    (1..=n_subjects)
        .map(|s| synthesize_subject(spec, crate::rng::substream(seed, "subject", s as u64), &format!("S{s}")))
        .collect()
}

fn synthesize_subject(spec: &SynthSpec, seed: u64, subject: &str) -> Result<EpochSet> {
    spec.validate()?;
    let factors = spec.class_covariances.iter().map(cholesky).collect::<Result<Vec<_>>>()?;
    let (c, t) = (spec.n_channels, spec.n_samples);
    let mut rng = rng_for(seed, "synth", 0);
    let mut trials = Vec::with_capacity(spec.n_classes * spec.trials_per_class);
    for _ in 0..spec.trials_per_class {
        for (label, l) in factors.iter().enumerate() {
            let g = Array2::from_shape_simple_fn((c, t), || StandardNormal.sample(&mut rng));
            let mut data = l.dot(&g);
            if spec.noise_scale > 0.0 {
                for v in data.iter_mut() {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    *v += spec.noise_scale * n;
                }
            }
            trials.push(Trial { data, label, subject: subject.to_string() });
        }
    }
    EpochSet::new(trials, spec.fs, default_channel_names(c), (0..spec.n_classes).map(|k| format!("class{k}")).collect())
}
