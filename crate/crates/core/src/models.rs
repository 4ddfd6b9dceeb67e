//! The three CNN backbones. Each exposes one parameter named
//! [`SPATIAL_FILTER`] holding its channel-spanning `(c, 1)` kernels.

use std::fmt;
use std::str::FromStr;

use crate::nn::{GraphBuilder, LayerSpec, ModelGraph, Padding};
use crate::{Error, Result};

/// Name of every backbone's spatial convolution (and its weight).
pub const SPATIAL_FILTER: &str = "spatial_filter";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BackboneKind {
    EegNet,
    ShallowCnn,
    DeepCnn,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 3] = [BackboneKind::EegNet, BackboneKind::ShallowCnn, BackboneKind::DeepCnn];

    pub fn name(self) -> &'static str {
        match self {
            BackboneKind::EegNet => "eegnet",
            BackboneKind::ShallowCnn => "shallowcnn",
            BackboneKind::DeepCnn => "deepcnn",
        }
    }

    /// Number of kernels in the spatial layer.
    pub fn spatial_kernels(self) -> usize {
        match self {
            BackboneKind::EegNet => 8,
            BackboneKind::ShallowCnn => 40,
            BackboneKind::DeepCnn => 25,
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BackboneKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::param(format!("unknown backbone {s:?} (expected eegnet, shallowcnn or deepcnn)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    pub n_channels: usize,
    pub n_samples: usize,
    pub fs: f64,
    pub n_classes: usize,
    pub dropout: f64,
}

impl BackboneSpec {
    pub fn new(kind: BackboneKind, n_channels: usize, n_samples: usize, fs: f64, n_classes: usize) -> Self {
        BackboneSpec { kind, n_channels, n_samples, fs, n_classes, dropout: 0.25 }
    }

    fn validate(&self) -> Result<()> {
        if self.n_channels == 0 || self.n_samples == 0 {
            return Err(Error::param("backbone needs at least one channel and one sample"));
        }
        if self.n_classes < 2 {
            return Err(Error::param("backbone needs at least two classes"));
        }
        if !(self.fs.is_finite() && self.fs >= 2.0) {
            return Err(Error::param(format!("sampling rate {} too low", self.fs)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

fn conv(out_maps: usize, kernel: (usize, usize), groups: usize, padding: Padding, bias: bool) -> LayerSpec {
    LayerSpec::Conv2d { out_maps, kernel, groups, padding, bias, fold_maps: false }
}

fn eegnet_layers(spec: &BackboneSpec, b: &mut GraphBuilder) -> Result<()> {
    let c = spec.n_channels;
    let kt = ((spec.fs / 2.0).round() as usize).max(1);
    let p = spec.dropout;
    b.push("temporal", conv(4, (1, kt), 1, Padding::SameWidth, false))?
        .push("temporal_bn", LayerSpec::BatchNorm)?
        .push(SPATIAL_FILTER, conv(8, (c, 1), 4, Padding::Valid, false))?
        .push("spatial_bn", LayerSpec::BatchNorm)?
        .push("spatial_elu", LayerSpec::Elu)?
        .push("pool1", LayerSpec::AvgPool { window: (1, 4), stride: (1, 4) })?
        .push("drop1", LayerSpec::Dropout { p })?
        .push("separable_depthwise", conv(8, (1, 16), 8, Padding::SameWidth, false))?
        .push("separable_pointwise", conv(8, (1, 1), 1, Padding::Valid, false))?
        .push("separable_bn", LayerSpec::BatchNorm)?
        .push("separable_elu", LayerSpec::Elu)?
        .push("pool2", LayerSpec::AvgPool { window: (1, 8), stride: (1, 8) })?
        .push("drop2", LayerSpec::Dropout { p })?
        .push("flatten", LayerSpec::Flatten)?
        .push("classifier", LayerSpec::Dense { units: spec.n_classes })?;
    Ok(())
}

fn shallowcnn_layers(spec: &BackboneSpec, b: &mut GraphBuilder) -> Result<()> {
    let c = spec.n_channels;
    b.push("temporal", conv(40, (1, 13), 1, Padding::Valid, true))?
        .push(SPATIAL_FILTER, conv(40, (c, 1), 40, Padding::Valid, false))?
        .push("spatial_bn", LayerSpec::BatchNorm)?
        .push("square", LayerSpec::Square)?
        .push("pool", LayerSpec::AvgPool { window: (1, 35), stride: (1, 7) })?
        .push("log", LayerSpec::SafeLog)?
        .push("drop", LayerSpec::Dropout { p: spec.dropout })?
        .push("flatten", LayerSpec::Flatten)?
        .push("classifier", LayerSpec::Dense { units: spec.n_classes })?;
    Ok(())
}

fn deepcnn_layers(spec: &BackboneSpec, b: &mut GraphBuilder) -> Result<()> {
    let c = spec.n_channels;
    let p = spec.dropout;
    let pool = LayerSpec::MaxPool { window: (1, 2), stride: (1, 2) };
    b.push("temporal", conv(25, (1, 5), 1, Padding::Valid, true))?
        .push(SPATIAL_FILTER, conv(25, (c, 1), 25, Padding::Valid, false))?
        .push("spatial_bn", LayerSpec::BatchNorm)?
        .push("spatial_elu", LayerSpec::Elu)?
        .push("pool1", pool.clone())?
        .push("drop1", LayerSpec::Dropout { p })?;
    for (i, maps) in [(2, 50), (3, 100)] {
        b.push(&format!("conv{i}"), conv(maps, (1, 5), 1, Padding::Valid, false))?
            .push(&format!("bn{i}"), LayerSpec::BatchNorm)?
            .push(&format!("elu{i}"), LayerSpec::Elu)?
            .push(&format!("pool{i}"), pool.clone())?
            .push(&format!("drop{i}"), LayerSpec::Dropout { p })?;
    }
    b.push("flatten", LayerSpec::Flatten)?.push("classifier", LayerSpec::Dense { units: spec.n_classes })?;
    Ok(())
}

/// Appends the backbone's layers to `builder`, whose current shape must be
/// `(1, n_channels, n_samples)`.
pub fn push_backbone(spec: &BackboneSpec, builder: &mut GraphBuilder) -> Result<()> {
    spec.validate()?;
    let expected = [1, spec.n_channels, spec.n_samples];
    if builder.current_shape() != expected {
        return Err(Error::shape(format!(
            "backbone expects input {expected:?}, builder is at {:?}",
            builder.current_shape()
        )));
    }
    let result = match spec.kind {
        BackboneKind::EegNet => eegnet_layers(spec, builder),
        BackboneKind::ShallowCnn => shallowcnn_layers(spec, builder),
        BackboneKind::DeepCnn => deepcnn_layers(spec, builder),
    };
    result.map_err(|e| match e {
        Error::Shape(msg) => Error::Shape(format!(
            "{} cannot be built for {} channels x {} samples: {msg}",
            spec.kind, spec.n_channels, spec.n_samples
        )),
        other => other,
    })
}

/// Builds a standalone backbone with parameters initialized from `seed`.
pub fn build_backbone(spec: &BackboneSpec, seed: u64) -> Result<ModelGraph> {
    let mut builder = GraphBuilder::new([1, spec.n_channels, spec.n_samples], seed);
    push_backbone(spec, &mut builder)?;
    Ok(builder.build())
}

pub fn build_eegnet(spec: &BackboneSpec, seed: u64) -> Result<ModelGraph> {
    build_backbone(&BackboneSpec { kind: BackboneKind::EegNet, ..spec.clone() }, seed)
}

pub fn build_shallowcnn(spec: &BackboneSpec, seed: u64) -> Result<ModelGraph> {
    build_backbone(&BackboneSpec { kind: BackboneKind::ShallowCnn, ..spec.clone() }, seed)
}

pub fn build_deepcnn(spec: &BackboneSpec, seed: u64) -> Result<ModelGraph> {
    build_backbone(&BackboneSpec { kind: BackboneKind::DeepCnn, ..spec.clone() }, seed)
}
