//! Zero-phase Butterworth band-pass filtering.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use super::EpochSet;
use crate::{Error, Result};

/// Order of the low-pass prototype; the band-pass has twice as many poles.
pub const BUTTER_ORDER: usize = 4;

/// One second-order section, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }
}

/// Designs a digital Butterworth band-pass as cascaded biquads: analog
/// prototype, low-pass to band-pass transform on prewarped edges, bilinear
/// transform, conjugate pole pairing.
pub fn butter_bandpass(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Result<Vec<Biquad>> {
    if order == 0 || order % 2 != 0 {
        return Err(Error::param(format!("band-pass prototype order must be even, got {order}")));
    }
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(Error::param(format!("band {low_hz}-{high_hz} Hz is outside (0, {}) Hz", fs / 2.0)));
    }
    let fs2 = 2.0 * fs;
    let wl = fs2 * (PI * low_hz / fs).tan();
    let wh = fs2 * (PI * high_hz / fs).tan();
    let bw = wh - wl;
    let w0_sq = wl * wh;

    let n = order as f64;
    let mut analog = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2.0 * k as f64 + 1.0 + n) / (2.0 * n);
        let a = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let d = (a * a - w0_sq).sqrt();
        analog.push(a + d);
        analog.push(a - d);
    }
    // N zeros at the origin map to z = 1, the N at infinity to z = -1; both
    // are absorbed into b = [1, 0, -1] per section.
    let analog_prod = analog.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * (fs2 - p));
    let gain = ((bw * fs2).powi(order as i32) / analog_prod).re;
    let poles = analog.iter().map(|p| (fs2 + p) / (fs2 - p));

    let mut upper: Vec<Complex64> = poles.filter(|p| p.im > 0.0).collect();
    if upper.len() != order {
        return Err(Error::Numerical("band-pass design produced real poles".into()));
    }
    upper.sort_by(|x, y| x.arg().total_cmp(&y.arg()));
    let mut sections: Vec<Biquad> =
        upper.iter().map(|p| Biquad { b: [1.0, 0.0, -1.0], a: [1.0, -2.0 * p.re, p.norm_sqr()] }).collect();
    for b in sections[0].b.iter_mut() {
        *b *= gain;
    }
    Ok(sections)
}

/// Steady-state transposed-direct-form-II states for a unit step input.
fn sos_initial_states(sos: &[Biquad]) -> Vec<[f64; 2]> {
    let mut level = 1.0;
    sos.iter()
        .map(|s| {
            let y = level * s.dc_gain();
            let z2 = s.b[2] * level - s.a[2] * y;
            let z1 = s.b[1] * level - s.a[1] * y + z2;
            level = y;
            [z1, z2]
        })
        .collect()
}

fn sos_filter(sos: &[Biquad], x: &mut [f64], zi: &[[f64; 2]], scale: f64) {
    for (s, z0) in sos.iter().zip(zi) {
        let (mut z1, mut z2) = (z0[0] * scale, z0[1] * scale);
        for v in x.iter_mut() {
            let xin = *v;
            let y = s.b[0] * xin + z1;
            z1 = s.b[1] * xin - s.a[1] * y + z2;
            z2 = s.b[2] * xin - s.a[2] * y;
            *v = y;
        }
    }
}

/// Forward-backward filtering with odd-reflection padding of
/// `3 * (2 * order + 1)` samples (shortened for very short signals).
pub fn filtfilt(sos: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    // Each section contributes two poles.
    let padlen = (3 * (2 * sos.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * padlen);
    for i in (1..=padlen).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=padlen {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let zi = sos_initial_states(sos);
    let x0 = ext[0];
    sos_filter(sos, &mut ext, &zi, x0);
    ext.reverse();
    let y0 = ext[0];
    sos_filter(sos, &mut ext, &zi, y0);
    ext.reverse();
    ext[padlen..padlen + n].to_vec()
}

/// Band-passes every channel of every trial; returns a new set.
pub fn bandpass_filter(epochs: &EpochSet, low_hz: f64, high_hz: f64) -> Result<EpochSet> {
    let sos = butter_bandpass(BUTTER_ORDER, low_hz, high_hz, epochs.fs)?;
    let mut out = epochs.clone();
    for trial in &mut out.trials {
        let (c, t) = trial.data.dim();
        let mut filtered = Array2::zeros((c, t));
        for (src, mut dst) in trial.data.rows().into_iter().zip(filtered.rows_mut()) {
            let row: Vec<f64> = src.iter().copied().collect();
            for (d, v) in dst.iter_mut().zip(filtfilt(&sos, &row)) {
                *d = v;
            }
        }
        trial.data = filtered;
    }
    Ok(out)
}
