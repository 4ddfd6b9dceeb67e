//! CSP-Net-1 (a CSP projection in front of a backbone) and CSP-Net-2 (CSP
//! filters written into a backbone's spatial convolution).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index::sample;

use crate::csp::{write_weights_csv, CspModel};
use crate::models::{push_backbone, BackboneKind, BackboneSpec, SPATIAL_FILTER};
use crate::nn::{glorot, GraphBuilder, LayerSpec, ModelGraph, Padding};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Name of the CSP-Net-1 projection layer (and its weight).
pub const CSP_PROJECTION: &str = "csp_projection";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CspVariant {
    /// CSP weights, frozen.
    Fix,
    /// CSP weights, trained with the rest of the network.
    Upd,
    /// Random weights of the same shape (ablation).
    Rad,
}

impl CspVariant {
    pub fn name(self) -> &'static str {
        match self {
            CspVariant::Fix => "fix",
            CspVariant::Upd => "upd",
            CspVariant::Rad => "rad",
        }
    }
}

impl fmt::Display for CspVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CspVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fix" => Ok(CspVariant::Fix),
            "upd" => Ok(CspVariant::Upd),
            "rad" => Ok(CspVariant::Rad),
            _ => Err(Error::param(format!("unknown CSP layer variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CspLayerMode {
    pub variant: CspVariant,
    /// Seeds the random weights of `Rad` and the extra replicated columns of
    /// CSP-Net-2.
    pub seed: u64,
    /// Whether a `Rad` layer is trained. It mirrors the variant it is compared
    /// against; the default compares with `Fix`.
    pub rad_trainable: bool,
}

impl CspLayerMode {
    pub fn new(variant: CspVariant, seed: u64) -> Self {
        CspLayerMode { variant, seed, rad_trainable: false }
    }

    pub fn trainable(&self) -> bool {
        match self.variant {
            CspVariant::Fix => false,
            CspVariant::Upd => true,
            CspVariant::Rad => self.rad_trainable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CspNetFamily {
    CspNet1,
    CspNet2,
}

impl CspNetFamily {
    pub fn name(self) -> &'static str {
        match self {
            CspNetFamily::CspNet1 => "cspnet1",
            CspNetFamily::CspNet2 => "cspnet2",
        }
    }

    /// Name of the parameter holding the CSP layer.
    pub fn layer_param(self) -> &'static str {
        match self {
            CspNetFamily::CspNet1 => CSP_PROJECTION,
            CspNetFamily::CspNet2 => SPATIAL_FILTER,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CspNetModel {
    pub graph: ModelGraph,
    pub family: CspNetFamily,
    pub backbone: BackboneKind,
    pub csp: CspModel,
    pub mode: CspLayerMode,
}

fn check_channels(backbone: &BackboneSpec, csp: &CspModel) -> Result<()> {
    if csp.n_channels() != backbone.n_channels {
        return Err(Error::param(format!(
            "CSP filters span {} channels, backbone expects {}",
            csp.n_channels(),
            backbone.n_channels
        )));
    }
    Ok(())
}

/// Kernel-major layout of `(n, 1, c, 1)` conv weights: kernel `k` is `w[:, cols[k]]`.
fn kernels_from_columns(w: &Array2<f64>, cols: &[usize]) -> Vec<f64> {
    cols.iter().flat_map(|&j| w.column(j).to_vec()).collect()
}

fn random_kernels(seed: u64, c: usize, n: usize) -> Vec<f64> {
    let mut rng = rng_for(seed, "csp_rad", 0);
    glorot(&mut rng, c * n, c, n * c)
}

/// Column order for `n` replicated slots: `floor(n/f)` in-order copies of all
/// `f` columns, then `n mod f` distinct columns drawn with `seed`.
pub fn replication_slots(f: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if f == 0 {
        return Err(Error::param("no CSP filters to replicate"));
    }
    if n < f {
        return Err(Error::param(format!("cannot place {f} CSP filters into {n} spatial kernels")));
    }
    let mut slots: Vec<usize> = (0..n / f).flat_map(|_| 0..f).collect();
    let mut rng = rng_for(seed, "replicate", 0);
    slots.extend(sample(&mut rng, f, n % f));
    Ok(slots)
}

/// A CSP projection layer computing `W' X`, followed by `backbone` built on
/// the `f` projected signals.
pub fn make_cspnet1(
    backbone: &BackboneSpec,
    csp: &CspModel,
    mode: CspLayerMode,
    init_seed: u64,
) -> Result<CspNetModel> {
    check_channels(backbone, csp)?;
    let (c, f) = (csp.n_channels(), csp.n_filters());
    let mut builder = GraphBuilder::new([1, c, backbone.n_samples], init_seed);
    builder.push(
        CSP_PROJECTION,
        LayerSpec::Conv2d {
            out_maps: f,
            kernel: (c, 1),
            groups: 1,
            padding: Padding::Valid,
            bias: false,
            fold_maps: true,
        },
    )?;
    push_backbone(&BackboneSpec { n_channels: f, ..backbone.clone() }, &mut builder)?;
    let mut graph = builder.build();
    let values = match mode.variant {
        CspVariant::Rad => random_kernels(mode.seed, c, f),
        _ => kernels_from_columns(&csp.w, &(0..f).collect::<Vec<_>>()),
    };
    let p = graph.param_mut(CSP_PROJECTION).expect("projection parameter");
    p.value = values;
    p.trainable = mode.trainable();
    Ok(CspNetModel { graph, family: CspNetFamily::CspNet1, backbone: backbone.kind, csp: csp.clone(), mode })
}

/// `backbone` with its spatial kernels overwritten by replicated CSP columns.
pub fn make_cspnet2(
    backbone: &BackboneSpec,
    csp: &CspModel,
    mode: CspLayerMode,
    init_seed: u64,
) -> Result<CspNetModel> {
    check_channels(backbone, csp)?;
    let (c, f) = (csp.n_channels(), csp.n_filters());
    let n = backbone.kind.spatial_kernels();
    let slots = replication_slots(f, n, mode.seed)?;
    let mut builder = GraphBuilder::new([1, c, backbone.n_samples], init_seed);
    push_backbone(backbone, &mut builder)?;
    let mut graph = builder.build();
    let values = match mode.variant {
        CspVariant::Rad => random_kernels(mode.seed, c, n),
        _ => kernels_from_columns(&csp.w, &slots),
    };
    let p = graph.param_mut(SPATIAL_FILTER).expect("backbone spatial filter");
    debug_assert_eq!(p.shape, vec![n, 1, c, 1]);
    p.value = values;
    p.trainable = mode.trainable();
    Ok(CspNetModel { graph, family: CspNetFamily::CspNet2, backbone: backbone.kind, csp: csp.clone(), mode })
}

/// Current CSP-layer kernels as a `c x n` matrix, one kernel per column.
pub fn csp_layer_weights(model: &CspNetModel) -> Array2<f64> {
    let p = model.graph.param(model.family.layer_param()).expect("CSP layer parameter");
    let (n, c) = (p.shape[0], p.shape[2]);
    Array2::from_shape_fn((c, n), |(i, k)| p.value[k * c + i])
}

/// Writes the CSP-layer kernels as CSV (rows = channels, columns = filters).
pub fn export_csp_layer_csv(model: &CspNetModel, channel_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    write_weights_csv(&csp_layer_weights(model), channel_names, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_follow_the_replication_rule() {
        assert_eq!(replication_slots(8, 8, 3).unwrap(), (0..8).collect::<Vec<_>>());
        let s = replication_slots(8, 40, 3).unwrap();
        assert_eq!(&s[..8], &s[8..16]);
        let s = replication_slots(8, 25, 3).unwrap();
        assert_eq!(s.len(), 25);
        assert!(s[24] < 8);
        assert!(replication_slots(8, 4, 0).is_err());
    }

    #[test]
    fn extras_are_distinct() {
        let s = replication_slots(8, 8 * 2 + 7, 11).unwrap();
        let mut extra = s[16..].to_vec();
        extra.sort_unstable();
        extra.dedup();
        assert_eq!(extra.len(), 7);
    }

    #[test]
    fn variant_names_parse() {
        for v in [CspVariant::Fix, CspVariant::Upd, CspVariant::Rad] {
            assert_eq!(v.name().parse::<CspVariant>().unwrap(), v);
        }
    }
}
