//! The finite-difference gradient-check suite: one probe network per layer
//! kind plus miniature versions of the three backbones.

use rand_distr::{Distribution, StandardNormal};

use crate::models::{build_backbone, BackboneKind, BackboneSpec};
use crate::nn::{grad_check, GradCheckConfig, GraphBuilder, LayerKind, LayerSpec, ModelGraph, Padding, Tensor4};
use crate::rng::rng_for;
use crate::Result;

/// Pass threshold for single-layer probes.
pub const LAYER_TOLERANCE: f64 = 1e-4;
/// Pass threshold for full backbones.
pub const MODEL_TOLERANCE: f64 = 1e-3;
/// Entries checked per parameter in full backbones.
pub const MODEL_ENTRIES_PER_PARAM: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

fn conv(out_maps: usize, kernel: (usize, usize), groups: usize, padding: Padding, bias: bool) -> LayerSpec {
    LayerSpec::Conv2d { out_maps, kernel, groups, padding, bias, fold_maps: false }
}

/// A small network exercising `kind`, fed `(maps=1, 3, 12)` inputs.
pub fn layer_probe(kind: LayerKind, seed: u64) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new([1, 3, 12], seed);
    b.push("conv_in", conv(4, (1, 3), 1, Padding::SameWidth, true))?;
    match kind {
        LayerKind::Conv2d => {
            b.push("grouped", conv(4, (2, 3), 2, Padding::Valid, false))?;
            b.push(
                "fold",
                LayerSpec::Conv2d {
                    out_maps: 3,
                    kernel: (2, 1),
                    groups: 1,
                    padding: Padding::Valid,
                    bias: true,
                    fold_maps: true,
                },
            )?;
            b.push("even_same", conv(2, (3, 4), 1, Padding::SameWidth, false))?;
        }
        LayerKind::BatchNorm => {
            b.push("bn", LayerSpec::BatchNorm)?;
        }
        LayerKind::Elu => {
            b.push("elu", LayerSpec::Elu)?;
        }
        LayerKind::Square => {
            b.push("square", LayerSpec::Square)?;
        }
        LayerKind::SafeLog => {
            b.push("square", LayerSpec::Square)?.push("log", LayerSpec::SafeLog)?;
        }
        LayerKind::AvgPool => {
            b.push("avg", LayerSpec::AvgPool { window: (2, 3), stride: (1, 2) })?;
        }
        LayerKind::MaxPool => {
            b.push("max", LayerSpec::MaxPool { window: (2, 2), stride: (1, 2) })?;
        }
        LayerKind::Dropout => {
            b.push("drop", LayerSpec::Dropout { p: 0.5 })?;
        }
        LayerKind::Flatten => {
            b.push("flatten_early", LayerSpec::Flatten)?;
        }
        LayerKind::Dense => {
            b.push("flatten_early", LayerSpec::Flatten)?.push("hidden", LayerSpec::Dense { units: 5 })?;
        }
    }
    b.push("flatten", LayerSpec::Flatten)?.push("out", LayerSpec::Dense { units: 3 })?;
    Ok(b.build())
}

/// Standard-normal inputs with balanced labels.
pub fn random_batch(shape: [usize; 4], n_classes: usize, seed: u64) -> (Tensor4, Vec<usize>) {
    let mut rng = rng_for(seed, "gradcheck_batch", 0);
    let data = (0..shape.iter().product::<usize>()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let labels = (0..shape[0]).map(|i| i % n_classes).collect();
    (Tensor4::from_vec(shape, data).expect("batch shape"), labels)
}

/// Miniature backbone used by the suite: 4 channels, 64 samples, 2 classes.
pub fn miniature_spec(kind: BackboneKind) -> BackboneSpec {
    BackboneSpec::new(kind, 4, 64, 64.0, 2)
}

fn check(model: &mut ModelGraph, n_classes: usize, seed: u64, max_entries: Option<usize>) -> Result<f64> {
    let [c, h, w] = model.input_shape;
    let (x, y) = random_batch([6, c, h, w], n_classes, seed);
    let cfg = GradCheckConfig { max_entries_per_param: max_entries, sample_seed: seed, ..GradCheckConfig::default() };
    Ok(grad_check(model, &x, &y, &cfg)?.max_rel_error)
}

/// Worst relative error per layer kind over `seeds`. `fault` corrupts the
/// backward pass of one kind.
pub fn check_layer_kinds(seeds: &[u64], fault: Option<LayerKind>) -> Result<Vec<SuiteResult>> {
    LayerKind::ALL
        .iter()
        .map(|&kind| {
            let mut worst = 0.0f64;
            for &seed in seeds {
                let mut model = layer_probe(kind, seed)?;
                model.fault = fault;
                worst = worst.max(check(&mut model, 3, seed, None)?);
            }
            Ok(SuiteResult { name: kind.name().to_string(), max_rel_error: worst, tolerance: LAYER_TOLERANCE })
        })
        .collect()
}

/// Worst relative error per miniature backbone over `seeds`.
pub fn check_backbones(seeds: &[u64], fault: Option<LayerKind>) -> Result<Vec<SuiteResult>> {
    BackboneKind::ALL
        .iter()
        .map(|&kind| {
            let mut worst = 0.0f64;
            for &seed in seeds {
                let mut model = build_backbone(&miniature_spec(kind), seed)?;
                model.fault = fault;
                worst = worst.max(check(&mut model, 2, seed, Some(MODEL_ENTRIES_PER_PARAM))?);
            }
            Ok(SuiteResult { name: kind.name().to_string(), max_rel_error: worst, tolerance: MODEL_TOLERANCE })
        })
        .collect()
}
