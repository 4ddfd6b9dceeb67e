//! Layer kinds, shape inference, and the per-kind forward/backward kernels.

use std::fmt;

use rand::Rng as _;

use super::graph::Parameter;
use super::tensor::Tensor4;
use super::Mode;
use crate::rng::rng_for;
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const SAFELOG_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding on the time axis so the output width equals the input's.
    SameWidth,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    Conv2d,
    BatchNorm,
    Elu,
    Square,
    SafeLog,
    AvgPool,
    MaxPool,
    Dropout,
    Flatten,
    Dense,
}

impl LayerKind {
    pub const ALL: [LayerKind; 10] = [
        LayerKind::Conv2d,
        LayerKind::BatchNorm,
        LayerKind::Elu,
        LayerKind::Square,
        LayerKind::SafeLog,
        LayerKind::AvgPool,
        LayerKind::MaxPool,
        LayerKind::Dropout,
        LayerKind::Flatten,
        LayerKind::Dense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Elu => "elu",
            LayerKind::Square => "square",
            LayerKind::SafeLog => "safelog",
            LayerKind::AvgPool => "avgpool",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Dropout => "dropout",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense => "dense",
        }
    }

    pub fn from_name(s: &str) -> Option<LayerKind> {
        LayerKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Cross-correlation, stride 1. Kernel height always runs in valid mode.
    /// With `fold_maps` the `(maps, 1, W)` output is read as `(1, maps, W)`,
    /// i.e. output maps become the channel axis of the next layer.
    Conv2d {
        out_maps: usize,
        kernel: (usize, usize),
        groups: usize,
        padding: Padding,
        bias: bool,
        fold_maps: bool,
    },
    BatchNorm,
    Elu,
    Square,
    SafeLog,
    AvgPool {
        window: (usize, usize),
        stride: (usize, usize),
    },
    MaxPool {
        window: (usize, usize),
        stride: (usize, usize),
    },
    Dropout {
        p: f64,
    },
    Flatten,
    Dense {
        units: usize,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv2d { .. } => LayerKind::Conv2d,
            LayerSpec::BatchNorm => LayerKind::BatchNorm,
            LayerSpec::Elu => LayerKind::Elu,
            LayerSpec::Square => LayerKind::Square,
            LayerSpec::SafeLog => LayerKind::SafeLog,
            LayerSpec::AvgPool { .. } => LayerKind::AvgPool,
            LayerSpec::MaxPool { .. } => LayerKind::MaxPool,
            LayerSpec::Dropout { .. } => LayerKind::Dropout,
            LayerSpec::Flatten => LayerKind::Flatten,
            LayerSpec::Dense { .. } => LayerKind::Dense,
        }
    }

    /// Output `(maps, height, width)` for a given input, or a shape error.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        match *self {
            LayerSpec::Conv2d { out_maps, kernel: (kh, kw), groups, padding, fold_maps, .. } => {
                if groups == 0 || c % groups != 0 || out_maps % groups != 0 {
                    return Err(Error::shape(format!(
                        "conv2d groups {groups} must divide input maps {c} and output maps {out_maps}"
                    )));
                }
                if kh == 0 || kw == 0 || kh > h {
                    return Err(Error::shape(format!("conv2d kernel ({kh},{kw}) does not fit height {h}")));
                }
                let wo = match padding {
                    Padding::SameWidth => w,
                    Padding::Valid if kw <= w => w - kw + 1,
                    Padding::Valid => {
                        return Err(Error::shape(format!("conv2d kernel width {kw} exceeds input width {w}")))
                    }
                };
                let ho = h - kh + 1;
                if fold_maps {
                    if ho != 1 {
                        return Err(Error::shape("folding conv output needs output height 1"));
                    }
                    Ok([1, out_maps, wo])
                } else {
                    Ok([out_maps, ho, wo])
                }
            }
            LayerSpec::AvgPool { window: (ph, pw), stride: (sh, sw) }
            | LayerSpec::MaxPool { window: (ph, pw), stride: (sh, sw) } => {
                if ph == 0 || pw == 0 || sh == 0 || sw == 0 {
                    return Err(Error::shape("pool window and stride must be >= 1"));
                }
                if ph > h || pw > w {
                    return Err(Error::shape(format!("pool window ({ph},{pw}) exceeds input ({h},{w})")));
                }
                Ok([c, (h - ph) / sh + 1, (w - pw) / sw + 1])
            }
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => {
                Err(Error::shape(format!("dropout probability {p} outside [0, 1)")))
            }
            LayerSpec::Flatten => Ok([c * h * w, 1, 1]),
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err(Error::shape("dense layer needs at least one unit"));
                }
                Ok([units, 1, 1])
            }
            _ => Ok(input),
        }
    }

    /// Shapes of the parameters this layer owns, in order.
    pub(crate) fn param_shapes(&self, input: [usize; 3]) -> Vec<(&'static str, Vec<usize>)> {
        let [c, h, w] = input;
        match *self {
            LayerSpec::Conv2d { out_maps, kernel: (kh, kw), groups, bias, .. } => {
                let mut v = vec![("weight", vec![out_maps, c / groups, kh, kw])];
                if bias {
                    v.push(("bias", vec![out_maps]));
                }
                v
            }
            LayerSpec::BatchNorm => vec![("gamma", vec![c]), ("beta", vec![c])],
            LayerSpec::Dense { units } => vec![("weight", vec![units, c * h * w]), ("bias", vec![units])],
            _ => Vec::new(),
        }
    }
}

/// Per-layer data saved during a recorded forward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    None,
    BatchNorm { xhat: Vec<f64>, inv_std: Vec<f64>, mean: Vec<f64>, var: Vec<f64>, batch_stats: bool },
    MaxPool { argmax: Vec<usize> },
    Dropout { mask: Vec<f64> },
}

/// Running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub spec: LayerSpec,
    pub in_shape: [usize; 3],
    pub out_shape: [usize; 3],
    /// Indices into the graph's parameter list.
    pub params: Vec<usize>,
    pub running: Option<RunningStats>,
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    ho: usize,
    wo: usize,
    kh: usize,
    kw: usize,
    cin_g: usize,
    cout_g: usize,
    pad: isize,
}

impl ConvGeom {
    /// Output column range `[lo, hi)` valid for kernel column `j`, and the
    /// input offset for that column.
    #[inline]
    fn span(&self, j: usize) -> (usize, usize, isize) {
        let off = j as isize - self.pad;
        let lo = (-off).max(0) as usize;
        let hi = ((self.w as isize - off).min(self.wo as isize)).max(0) as usize;
        (lo, hi.max(lo), off)
    }
}

impl Layer {
    fn conv_geom(&self) -> ConvGeom {
        let LayerSpec::Conv2d { out_maps, kernel: (kh, kw), groups, padding, .. } = self.spec else {
            unreachable!("conv geometry of a non-conv layer")
        };
        let [cin, h, w] = self.in_shape;
        let ho = h - kh + 1;
        let wo = match padding {
            Padding::SameWidth => w,
            Padding::Valid => w - kw + 1,
        };
        let pad = match padding {
            Padding::SameWidth => ((kw - 1) / 2) as isize,
            Padding::Valid => 0,
        };
        ConvGeom { cin, h, w, cout: out_maps, ho, wo, kh, kw, cin_g: cin / groups, cout_g: out_maps / groups, pad }
    }

    pub(crate) fn forward(
        &self,
        params: &[Parameter],
        x: &Tensor4,
        mode: Mode,
        dropout_seed: u64,
        layer_index: usize,
    ) -> (Tensor4, Cache) {
        let n = x.batch();
        let [oc, oh, ow] = self.out_shape;
        match self.spec {
            LayerSpec::Conv2d { bias, .. } => {
                let g = self.conv_geom();
                let weight = &params[self.params[0]].value;
                let mut out = vec![0.0; n * g.cout * g.ho * g.wo];
                let xd = x.data();
                for b in 0..n {
                    for co in 0..g.cout {
                        let grp = co / g.cout_g;
                        let out_plane = &mut out[(b * g.cout + co) * g.ho * g.wo..][..g.ho * g.wo];
                        if bias {
                            let bv = params[self.params[1]].value[co];
                            out_plane.iter_mut().for_each(|v| *v = bv);
                        }
                        for cl in 0..g.cin_g {
                            let ci = grp * g.cin_g + cl;
                            for i in 0..g.kh {
                                for j in 0..g.kw {
                                    let wv = weight[((co * g.cin_g + cl) * g.kh + i) * g.kw + j];
                                    let (lo, hi, off) = g.span(j);
                                    for r in 0..g.ho {
                                        let src = &xd[((b * g.cin + ci) * g.h + r + i) * g.w..][..g.w];
                                        let dst = &mut out_plane[r * g.wo..(r + 1) * g.wo];
                                        let s0 = (lo as isize + off) as usize;
                                        axpy(wv, &src[s0..s0 + (hi - lo)], &mut dst[lo..hi]);
                                    }
                                }
                            }
                        }
                    }
                }
                (Tensor4::from_vec([n, oc, oh, ow], out).expect("conv output shape"), Cache::None)
            }
            LayerSpec::BatchNorm => self.batchnorm_forward(params, x, mode),
            LayerSpec::Elu => (map(x, |v| if v > 0.0 { v } else { v.exp() - 1.0 }), Cache::None),
            LayerSpec::Square => (map(x, |v| v * v), Cache::None),
            LayerSpec::SafeLog => (map(x, |v| v.max(SAFELOG_FLOOR).ln()), Cache::None),
            LayerSpec::AvgPool { window, stride } => {
                let mut out = Tensor4::zeros([n, oc, oh, ow]);
                let scale = 1.0 / (window.0 * window.1) as f64;
                pool_loop(x, &mut out, window, stride, |vals| vals.sum::<f64>() * scale);
                (out, Cache::None)
            }
            LayerSpec::MaxPool { window, stride } => {
                let mut out = Tensor4::zeros([n, oc, oh, ow]);
                let mut argmax = Vec::with_capacity(out.len());
                let [_, c, h, w] = x.shape();
                let xd = x.data();
                let od = out.data_mut();
                let mut k = 0;
                for b in 0..n {
                    for ch in 0..c {
                        for r in 0..oh {
                            for q in 0..ow {
                                let mut best = usize::MAX;
                                let mut best_v = f64::NEG_INFINITY;
                                for i in 0..window.0 {
                                    for j in 0..window.1 {
                                        let idx = ((b * c + ch) * h + r * stride.0 + i) * w + q * stride.1 + j;
                                        if best == usize::MAX || xd[idx] > best_v {
                                            best = idx;
                                            best_v = xd[idx];
                                        }
                                    }
                                }
                                od[k] = best_v;
                                argmax.push(best);
                                k += 1;
                            }
                        }
                    }
                }
                (out, Cache::MaxPool { argmax })
            }
            LayerSpec::Dropout { p } => {
                if mode == Mode::Eval || p == 0.0 {
                    return (x.clone(), Cache::None);
                }
                let mut rng = rng_for(dropout_seed, "dropout", layer_index as u64);
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..x.len()).map(|_| if rng.gen::<f64>() >= p { keep } else { 0.0 }).collect();
                let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                (Tensor4::from_vec(x.shape(), data).unwrap(), Cache::Dropout { mask })
            }
            LayerSpec::Flatten => (x.clone().reshaped([n, oc, 1, 1]), Cache::None),
            LayerSpec::Dense { units } => {
                let weight = &params[self.params[0]].value;
                let bias = &params[self.params[1]].value;
                let d = x.sample_len();
                let mut out = vec![0.0; n * units];
                for b in 0..n {
                    let xb = &x.data()[b * d..(b + 1) * d];
                    for u in 0..units {
                        out[b * units + u] = bias[u] + dot(&weight[u * d..(u + 1) * d], xb);
                    }
                }
                (Tensor4::from_vec([n, units, 1, 1], out).unwrap(), Cache::None)
            }
        }
    }

    fn batchnorm_forward(&self, params: &[Parameter], x: &Tensor4, mode: Mode) -> (Tensor4, Cache) {
        let [n, c, h, w] = x.shape();
        let plane = h * w;
        let m = (n * plane) as f64;
        let gamma = &params[self.params[0]].value;
        let beta = &params[self.params[1]].value;
        let xd = x.data();
        let mut out = vec![0.0; x.len()];
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for b in 0..n {
                        s += xd[(b * c + ch) * plane..][..plane].iter().sum::<f64>();
                    }
                    let mu = s / m;
                    let mut ss = 0.0;
                    for b in 0..n {
                        ss += xd[(b * c + ch) * plane..][..plane].iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
                    }
                    mean[ch] = mu;
                    var[ch] = ss / m;
                }
                (mean, var)
            }
            Mode::Eval => {
                let rs = self.running.as_ref().expect("batchnorm has running stats");
                (rs.mean.clone(), rs.var.clone())
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; x.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                for k in base..base + plane {
                    let xh = (xd[k] - mean[ch]) * inv_std[ch];
                    xhat[k] = xh;
                    out[k] = gamma[ch] * xh + beta[ch];
                }
            }
        }
        (
            Tensor4::from_vec(x.shape(), out).unwrap(),
            Cache::BatchNorm { xhat, inv_std, mean, var, batch_stats: mode == Mode::Train },
        )
    }

    /// Accumulates parameter gradients (trainable parameters only) and
    /// returns the input gradient when `need_input_grad`.
    pub(crate) fn backward(
        &self,
        params: &mut [Parameter],
        cache: &Cache,
        x: &Tensor4,
        gy: &Tensor4,
        need_input_grad: bool,
    ) -> Option<Tensor4> {
        let n = x.batch();
        match self.spec {
            LayerSpec::Conv2d { bias, .. } => {
                let g = self.conv_geom();
                let xd = x.data();
                let gd = gy.data();
                let plane = g.ho * g.wo;
                let w_idx = self.params[0];
                if params[w_idx].trainable {
                    let mut gw = std::mem::take(&mut params[w_idx].grad);
                    for b in 0..n {
                        for co in 0..g.cout {
                            let grp = co / g.cout_g;
                            let gplane = &gd[(b * g.cout + co) * plane..][..plane];
                            for cl in 0..g.cin_g {
                                let ci = grp * g.cin_g + cl;
                                for i in 0..g.kh {
                                    for j in 0..g.kw {
                                        let (lo, hi, off) = g.span(j);
                                        let s0 = (lo as isize + off) as usize;
                                        let mut acc = 0.0;
                                        for r in 0..g.ho {
                                            let src = &xd[((b * g.cin + ci) * g.h + r + i) * g.w..][..g.w];
                                            acc += dot(&src[s0..s0 + (hi - lo)], &gplane[r * g.wo + lo..r * g.wo + hi]);
                                        }
                                        gw[((co * g.cin_g + cl) * g.kh + i) * g.kw + j] += acc;
                                    }
                                }
                            }
                        }
                    }
                    params[w_idx].grad = gw;
                }
                if bias && params[self.params[1]].trainable {
                    let gb = &mut params[self.params[1]].grad;
                    for b in 0..n {
                        for co in 0..g.cout {
                            gb[co] += gd[(b * g.cout + co) * plane..][..plane].iter().sum::<f64>();
                        }
                    }
                }
                if !need_input_grad {
                    return None;
                }
                let weight = &params[w_idx].value;
                let mut gx = vec![0.0; x.len()];
                for b in 0..n {
                    for co in 0..g.cout {
                        let grp = co / g.cout_g;
                        let gplane = &gd[(b * g.cout + co) * plane..][..plane];
                        for cl in 0..g.cin_g {
                            let ci = grp * g.cin_g + cl;
                            for i in 0..g.kh {
                                for j in 0..g.kw {
                                    let wv = weight[((co * g.cin_g + cl) * g.kh + i) * g.kw + j];
                                    let (lo, hi, off) = g.span(j);
                                    let s0 = (lo as isize + off) as usize;
                                    for r in 0..g.ho {
                                        let dst = &mut gx[((b * g.cin + ci) * g.h + r + i) * g.w..][..g.w];
                                        axpy(wv, &gplane[r * g.wo + lo..r * g.wo + hi], &mut dst[s0..s0 + (hi - lo)]);
                                    }
                                }
                            }
                        }
                    }
                }
                Some(Tensor4::from_vec(x.shape(), gx).unwrap())
            }
            LayerSpec::BatchNorm => {
                let Cache::BatchNorm { xhat, inv_std, batch_stats, .. } = cache else { unreachable!() };
                let [_, c, h, w] = x.shape();
                let plane = h * w;
                let m = (n * plane) as f64;
                let gd = gy.data();
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * plane;
                        for k in base..base + plane {
                            sum_g[ch] += gd[k];
                            sum_gx[ch] += gd[k] * xhat[k];
                        }
                    }
                }
                let (gi, bi) = (self.params[0], self.params[1]);
                if params[gi].trainable {
                    params[gi].grad.iter_mut().zip(&sum_gx).for_each(|(g, s)| *g += s);
                }
                if params[bi].trainable {
                    params[bi].grad.iter_mut().zip(&sum_g).for_each(|(g, s)| *g += s);
                }
                if !need_input_grad {
                    return None;
                }
                let gamma = &params[gi].value;
                let mut gx = vec![0.0; x.len()];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * plane;
                        for k in base..base + plane {
                            gx[k] = if *batch_stats {
                                gamma[ch] * inv_std[ch] / m * (m * gd[k] - sum_g[ch] - xhat[k] * sum_gx[ch])
                            } else {
                                gamma[ch] * inv_std[ch] * gd[k]
                            };
                        }
                    }
                }
                Some(Tensor4::from_vec(x.shape(), gx).unwrap())
            }
            LayerSpec::Elu => need_input_grad.then(|| zip_map(x, gy, |v, g| if v > 0.0 { g } else { g * v.exp() })),
            LayerSpec::Square => need_input_grad.then(|| zip_map(x, gy, |v, g| 2.0 * v * g)),
            LayerSpec::SafeLog => {
                need_input_grad.then(|| zip_map(x, gy, |v, g| if v > SAFELOG_FLOOR { g / v } else { 0.0 }))
            }
            LayerSpec::AvgPool { window, stride } => {
                if !need_input_grad {
                    return None;
                }
                let [_, c, h, w] = x.shape();
                let [_, _, oh, ow] = gy.shape();
                let scale = 1.0 / (window.0 * window.1) as f64;
                let mut gx = vec![0.0; x.len()];
                let gd = gy.data();
                let mut k = 0;
                for b in 0..n {
                    for ch in 0..c {
                        for r in 0..oh {
                            for q in 0..ow {
                                let g = gd[k] * scale;
                                k += 1;
                                for i in 0..window.0 {
                                    let row = ((b * c + ch) * h + r * stride.0 + i) * w + q * stride.1;
                                    gx[row..row + window.1].iter_mut().for_each(|v| *v += g);
                                }
                            }
                        }
                    }
                }
                Some(Tensor4::from_vec(x.shape(), gx).unwrap())
            }
            LayerSpec::MaxPool { .. } => {
                let Cache::MaxPool { argmax } = cache else { unreachable!() };
                need_input_grad.then(|| {
                    let mut gx = vec![0.0; x.len()];
                    for (&idx, &g) in argmax.iter().zip(gy.data()) {
                        gx[idx] += g;
                    }
                    Tensor4::from_vec(x.shape(), gx).unwrap()
                })
            }
            LayerSpec::Dropout { .. } => need_input_grad.then(|| match cache {
                Cache::Dropout { mask } => {
                    let data = gy.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                    Tensor4::from_vec(x.shape(), data).unwrap()
                }
                _ => gy.clone(),
            }),
            LayerSpec::Flatten => need_input_grad.then(|| gy.clone().reshaped(x.shape())),
            LayerSpec::Dense { units } => {
                let d = x.sample_len();
                let xd = x.data();
                let gd = gy.data();
                let (wi, bi) = (self.params[0], self.params[1]);
                if params[wi].trainable {
                    let gw = &mut params[wi].grad;
                    for b in 0..n {
                        let xb = &xd[b * d..(b + 1) * d];
                        for u in 0..units {
                            axpy(gd[b * units + u], xb, &mut gw[u * d..(u + 1) * d]);
                        }
                    }
                }
                if params[bi].trainable {
                    let gb = &mut params[bi].grad;
                    for b in 0..n {
                        for u in 0..units {
                            gb[u] += gd[b * units + u];
                        }
                    }
                }
                if !need_input_grad {
                    return None;
                }
                let weight = &params[wi].value;
                let mut gx = vec![0.0; x.len()];
                for b in 0..n {
                    let dst = &mut gx[b * d..(b + 1) * d];
                    for u in 0..units {
                        axpy(gd[b * units + u], &weight[u * d..(u + 1) * d], dst);
                    }
                }
                Some(Tensor4::from_vec(x.shape(), gx).unwrap())
            }
        }
    }

    /// Folds one batch's statistics into the running averages.
    pub(crate) fn update_running(&mut self, cache: &Cache) {
        if let (Some(rs), Cache::BatchNorm { mean, var, batch_stats: true, .. }) = (self.running.as_mut(), cache) {
            for (r, b) in rs.mean.iter_mut().zip(mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
            for (r, b) in rs.var.iter_mut().zip(var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
        }
    }
}

fn map(x: &Tensor4, f: impl Fn(f64) -> f64) -> Tensor4 {
    Tensor4::from_vec(x.shape(), x.data().iter().map(|&v| f(v)).collect()).unwrap()
}

fn zip_map(x: &Tensor4, g: &Tensor4, f: impl Fn(f64, f64) -> f64) -> Tensor4 {
    Tensor4::from_vec(x.shape(), x.data().iter().zip(g.data()).map(|(&v, &gv)| f(v, gv)).collect()).unwrap()
}

fn pool_loop(
    x: &Tensor4,
    out: &mut Tensor4,
    window: (usize, usize),
    stride: (usize, usize),
    reduce: impl Fn(&mut dyn Iterator<Item = f64>) -> f64,
) {
    let [n, c, h, w] = x.shape();
    let [_, _, oh, ow] = out.shape();
    let xd = x.data();
    let od = out.data_mut();
    let mut k = 0;
    for b in 0..n {
        for ch in 0..c {
            for r in 0..oh {
                for q in 0..ow {
                    let mut it = (0..window.0).flat_map(|i| {
                        let row = ((b * c + ch) * h + r * stride.0 + i) * w + q * stride.1;
                        xd[row..row + window.1].iter().copied()
                    });
                    od[k] = reduce(&mut it);
                    k += 1;
                }
            }
        }
    }
}
