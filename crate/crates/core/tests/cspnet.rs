use std::collections::HashMap;

use cspnet_core::csp::{apply_filters, design_csp};
use cspnet_core::cspnet::{csp_layer_weights, make_cspnet1, make_cspnet2, CSP_PROJECTION};
use cspnet_core::data::synthesize_dataset;
use cspnet_core::harness::{epochs_to_tensor, train_model};
use cspnet_core::models::{build_backbone, SPATIAL_FILTER};
use cspnet_core::nn::Mode;
use cspnet_core::{
    BackboneKind, BackboneSpec, CspLayerMode, CspModel, CspVariant, EpochSet, Error, SynthSpec, TrainConfig,
};

fn dataset(c: usize, t: usize, seed: u64) -> EpochSet {
    synthesize_dataset(&SynthSpec::contrast(c, t, 2, 20, 1.0), seed).unwrap()
}

fn fitted(set: &EpochSet, f: usize) -> CspModel {
    design_csp(set, f, None).unwrap()
}

fn spec(kind: BackboneKind, set: &EpochSet) -> BackboneSpec {
    BackboneSpec::new(kind, set.n_channels(), set.n_samples(), set.fs, set.n_classes())
}

/// Multiplicity of each CSP column among the layer's kernels, matched bitwise.
fn column_multiplicities(layer: &ndarray::Array2<f64>, csp: &CspModel) -> Vec<usize> {
    let mut counts = vec![0; csp.n_filters()];
    for k in layer.columns() {
        let j = (0..csp.n_filters())
            .find(|&j| csp.w.column(j).iter().zip(k.iter()).all(|(a, b)| a.to_bits() == b.to_bits()))
            .expect("every kernel is a CSP column");
        counts[j] += 1;
    }
    counts
}

#[test]
fn projection_layer_reproduces_apply_filters() {
    let set = dataset(6, 128, 1);
    let csp = fitted(&set, 4);
    let net = make_cspnet1(&spec(BackboneKind::EegNet, &set), &csp, CspLayerMode::new(CspVariant::Fix, 0), 0).unwrap();
    let x = epochs_to_tensor(&set, &[0, 1, 2]);
    let tape = net.graph.forward(&x, Mode::Eval, 0).unwrap();
    let projected = tape.layer_input(1);
    assert_eq!(projected.shape(), [3, 1, 4, 128]);
    for (b, trial) in set.trials[..3].iter().enumerate() {
        let reference = apply_filters(&csp, trial.data.view()).unwrap();
        for ((i, j), r) in reference.indexed_iter() {
            assert!((projected.get(b, 0, i, j) - r).abs() < 1e-12);
        }
    }
}

#[test]
fn cspnet2_replicates_columns_per_backbone() {
    let set = dataset(8, 256, 2);
    let csp8 = fitted(&set, 8);
    let csp4 = fitted(&set, 4);
    let mode = CspLayerMode::new(CspVariant::Fix, 5);
    let layer = |kind, csp: &CspModel| csp_layer_weights(&make_cspnet2(&spec(kind, &set), csp, mode, 0).unwrap());

    let eeg = layer(BackboneKind::EegNet, &csp8);
    assert_eq!(eeg, csp8.w, "eight kernels hold the columns in order");
    assert_eq!(column_multiplicities(&layer(BackboneKind::ShallowCnn, &csp8), &csp8), vec![5; 8]);
    assert_eq!(column_multiplicities(&layer(BackboneKind::ShallowCnn, &csp4), &csp4), vec![10; 4]);

    let mut deep = column_multiplicities(&layer(BackboneKind::DeepCnn, &csp8), &csp8);
    deep.sort_unstable();
    assert_eq!(deep, vec![3, 3, 3, 3, 3, 3, 3, 4]);
    // the first 24 kernels are three in-order passes
    let w = layer(BackboneKind::DeepCnn, &csp8);
    for k in 0..24 {
        assert_eq!(w.column(k), csp8.w.column(k % 8));
    }
}

#[test]
fn fix_stays_frozen_and_upd_moves() {
    let set = dataset(6, 128, 3);
    let csp = fitted(&set, 4);
    let cfg = TrainConfig { max_epochs: 3, batch_size: 16, lr: 0.01, ..TrainConfig::default() };
    type Maker = fn(&BackboneSpec, &CspModel, CspLayerMode, u64) -> cspnet_core::Result<cspnet_core::CspNetModel>;
    let makers: [(Maker, &str); 2] = [(make_cspnet1, CSP_PROJECTION), (make_cspnet2, SPATIAL_FILTER)];
    for (family_builder, param) in makers {
        for variant in [CspVariant::Fix, CspVariant::Upd, CspVariant::Rad] {
            let net =
                family_builder(&spec(BackboneKind::EegNet, &set), &csp, CspLayerMode::new(variant, 1), 0).unwrap();
            let mut graph = net.graph;
            let before = graph.param(param).unwrap().value.clone();
            train_model(&mut graph, &set, &set, &cfg).unwrap();
            let after = &graph.param(param).unwrap().value;
            let unchanged = before.iter().zip(after).all(|(a, b)| a.to_bits() == b.to_bits());
            assert_eq!(unchanged, variant != CspVariant::Upd, "{param} {variant}");
        }
    }
}

#[test]
fn cspnet1_adds_exactly_the_projection_weights() {
    let set = dataset(6, 256, 4);
    let csp = fitted(&set, 4);
    for kind in BackboneKind::ALL {
        let net = make_cspnet1(&spec(kind, &set), &csp, CspLayerMode::new(CspVariant::Fix, 0), 0).unwrap();
        let mut on_f = spec(kind, &set);
        on_f.n_channels = 4;
        let base = build_backbone(&on_f, 0).unwrap();
        assert_eq!(net.graph.n_weights(), base.n_weights() + 6 * 4, "{kind}");
        assert_eq!(net.graph.n_trainable(), base.n_trainable(), "{kind}");
        let plain = build_backbone(&spec(kind, &set), 0).unwrap();
        let net2 = make_cspnet2(&spec(kind, &set), &csp, CspLayerMode::new(CspVariant::Upd, 0), 0).unwrap();
        assert_eq!(net2.graph.n_weights(), plain.n_weights());
    }
}

#[test]
fn rad_weights_depend_only_on_the_mode_seed() {
    let set = dataset(6, 128, 5);
    let csp = fitted(&set, 4);
    let s = spec(BackboneKind::ShallowCnn, &set);
    let rad = |seed, init| {
        csp_layer_weights(&make_cspnet2(&s, &csp, CspLayerMode::new(CspVariant::Rad, seed), init).unwrap())
    };
    assert_eq!(rad(3, 0), rad(3, 99));
    assert_ne!(rad(3, 0), rad(4, 0));
    let limit = (6.0f64 / (6.0 + 40.0 * 6.0)).sqrt();
    assert!(rad(3, 0).iter().all(|v| v.abs() <= limit));
    let r1 = csp_layer_weights(&make_cspnet1(&s, &csp, CspLayerMode::new(CspVariant::Rad, 3), 0).unwrap());
    assert_eq!(r1.dim(), (6, 4));
}

#[test]
fn channel_mismatch_is_rejected() {
    let set = dataset(6, 128, 6);
    let csp = fitted(&set, 4);
    let mut wrong = spec(BackboneKind::EegNet, &set);
    wrong.n_channels = 7;
    let mode = CspLayerMode::new(CspVariant::Fix, 0);
    assert!(matches!(make_cspnet1(&wrong, &csp, mode, 0), Err(Error::Parameter(_))));
    assert!(matches!(make_cspnet2(&wrong, &csp, mode, 0), Err(Error::Parameter(_))));
}

#[test]
fn too_many_filters_for_the_spatial_layer() {
    let set = dataset(10, 128, 7);
    let csp = fitted(&set, 10);
    let err = make_cspnet2(&spec(BackboneKind::EegNet, &set), &csp, CspLayerMode::new(CspVariant::Fix, 0), 0);
    assert!(matches!(err, Err(Error::Parameter(_))));
}

#[test]
fn layer_weights_are_exported_per_channel() {
    let set = dataset(6, 128, 8);
    let csp = fitted(&set, 4);
    let net = make_cspnet1(&spec(BackboneKind::EegNet, &set), &csp, CspLayerMode::new(CspVariant::Fix, 0), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    cspnet_core::cspnet::export_csp_layer_csv(&net, &set.channel_names, &path).unwrap();
    let mut rows = csv::Reader::from_path(&path).unwrap();
    let header = rows.headers().unwrap().clone();
    assert_eq!(header.len(), 5);
    let rows: Vec<csv::StringRecord> = rows.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    let mut by_channel = HashMap::new();
    for r in &rows {
        by_channel.insert(r[0].to_string(), r[1].parse::<f64>().unwrap());
    }
    assert_eq!(by_channel[&set.channel_names[2]], csp.w[(2, 0)]);
}
