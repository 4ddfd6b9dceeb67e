//! Acceptance suite: one PASS/FAIL line per criterion. Criterion 9 needs a
//! real motor-imagery export in the dataset format; point
//! `CSPNET_ACCEPTANCE_DATASET` at its directory to enable it.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use cspnet_core::csp::{csp_objective, design_csp, solve_csp, SpatialCovariance};
use cspnet_core::cspnet::{csp_layer_weights, make_cspnet1, make_cspnet2};
use cspnet_core::data::{load_epochset, synthesize_dataset};
use cspnet_core::gradsuite::{check_backbones, check_layer_kinds, LAYER_TOLERANCE, MODEL_TOLERANCE};
use cspnet_core::harness::{bh_adjust, paired_ttest, run_within_subject, train_model, ProtocolOptions};
use cspnet_core::{
    Approach, BackboneKind, BackboneSpec, CspLayerMode, CspModel, CspNetModel, CspVariant, EpochSet, SynthSpec,
    TrainConfig,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("{s:.1} s of {limit_s:.0} s"))
}

fn random_spd(rng: &mut ChaCha8Rng, c: usize) -> SpatialCovariance {
    let a = Array2::from_shape_simple_fn((c, c + 3), || StandardNormal.sample(rng));
    let mut m: Array2<f64> = a.dot(&a.t()) / (c + 3) as f64 + Array2::<f64>::eye(c) * 0.1;
    m /= m.diag().sum();
    SpatialCovariance { matrix: m, n_trials_averaged: 1 }
}

fn to_na(a: &Array2<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Sorted (descending) eigenvalues of `(C2 + ridge I)^-1 C1` from nalgebra's
/// general dense solver.
fn oracle_eigenvalues(c1: &Array2<f64>, c2: &Array2<f64>, ridge: f64) -> Vec<f64> {
    let n = c1.nrows();
    let b = to_na(c2) + nalgebra::DMatrix::<f64>::identity(n, n) * ridge;
    let m = b.try_inverse().expect("invertible") * to_na(c1);
    let mut ev: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.re).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn eigensolver() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_res, mut worst_gram, mut worst_eig) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..100 {
        let c = 2 + i % 7;
        let f = 2 * (c / 2);
        let ridge = if i % 2 == 0 { 0.0 } else { 1e-6 };
        let (c1, c2) = (random_spd(&mut rng, c), random_spd(&mut rng, c));
        let m = match solve_csp(&c1, &c2, f, ridge) {
            Ok(m) => m,
            Err(e) => return Verdict::Fail(format!("instance {i}: {e}")),
        };
        let b = &c2.matrix + &(Array2::<f64>::eye(c) * ridge);
        for (j, &lambda) in m.eigenvalues.iter().enumerate() {
            let w = m.w.column(j);
            let lhs = c1.matrix.dot(&w);
            let res = &lhs - &(b.dot(&w) * lambda);
            worst_res = worst_res.max(res.dot(&res).sqrt() / lhs.dot(&lhs).sqrt());
        }
        let gram = m.w.t().dot(&b).dot(&m.w);
        for ((r, s), v) in gram.indexed_iter() {
            worst_gram = worst_gram.max((v - if r == s { 1.0 } else { 0.0 }).abs());
        }
        let oracle = oracle_eigenvalues(&c1.matrix, &c2.matrix, ridge);
        let expected: Vec<f64> = oracle[..f / 2].iter().chain(&oracle[c - f / 2..]).copied().collect();
        let mut got = m.eigenvalues.clone();
        let mut want = expected;
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (a, e) in got.iter().zip(&want) {
            worst_eig = worst_eig.max((a - e).abs() / a.abs().max(e.abs()));
        }
    }
    let (fast, time) = within(start.elapsed(), 5.0);
    verdict(
        worst_res <= 1e-8 && worst_gram <= 1e-8 && worst_eig <= 1e-8 && fast,
        format!("residual {worst_res:.1e}, gram {worst_gram:.1e}, eigenvalues {worst_eig:.1e} on 100 pairs; {time}"),
    )
}

fn scale_invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let c = 3 + i % 6;
        let (c1, c2) = (random_spd(&mut rng, c), random_spd(&mut rng, c));
        let w = Array2::from_shape_simple_fn((c, 2), || StandardNormal.sample(&mut rng));
        let base = csp_objective(&w, &c1, &c2).expect("nonzero filters");
        for k in [-3.0, 0.5, 7.0] {
            let scaled = csp_objective(&(&w * k), &c1, &c2).expect("nonzero filters");
            for (a, b) in base.iter().zip(&scaled) {
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
            }
        }
    }
    verdict(worst <= 1e-12, format!("max relative change {worst:.1e} over 20 instances x 3 scales"))
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let seeds = [0, 1, 2, 3, 4];
    let layers = check_layer_kinds(&seeds, None).expect("layer suite runs");
    let models = check_backbones(&seeds, None).expect("backbone suite runs");
    let worst_layer = layers.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let worst_model = models.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let (fast, time) = within(start.elapsed(), 120.0);
    verdict(
        worst_layer < LAYER_TOLERANCE && worst_model < MODEL_TOLERANCE && fast,
        format!(
            "{} layer kinds worst {worst_layer:.1e}, 3 backbones worst {worst_model:.1e}, 5 seeds; {time}",
            layers.len()
        ),
    )
}

fn freeze_contract() -> Verdict {
    let start = Instant::now();
    let set = synthesize_dataset(&SynthSpec::contrast(8, 128, 2, 40, 1.0), 3).expect("synthetic set");
    let spec = BackboneSpec::new(BackboneKind::EegNet, 8, 128, set.fs, 2);
    let csp = design_csp(&set, 8, None).expect("csp");
    let cfg = TrainConfig { max_epochs: 50, batch_size: 16, eval_every: 50, ..TrainConfig::default() };
    let mut notes = Vec::new();
    let mut ok = true;
    type Maker = fn(&BackboneSpec, &CspModel, CspLayerMode, u64) -> cspnet_core::Result<CspNetModel>;
    let makers: [(&str, Maker); 2] = [("cspnet1", make_cspnet1), ("cspnet2", make_cspnet2)];
    for (family, make) in makers {
        for variant in [CspVariant::Fix, CspVariant::Upd] {
            let mut net = make(&spec, &csp, CspLayerMode::new(variant, 0), 0).expect("model builds");
            let before = csp_layer_weights(&net);
            train_model(&mut net.graph, &set, &set, &cfg).expect("training runs");
            let after = csp_layer_weights(&net);
            let identical = before.iter().zip(after.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
            let expected = variant == CspVariant::Fix;
            ok &= identical == expected;
            notes.push(format!("{family}-{variant} {}", if identical { "unchanged" } else { "moved" }));
        }
    }
    let (fast, time) = within(start.elapsed(), 120.0);
    verdict(ok && fast, format!("{} after 50 epochs; {time}", notes.join(", ")))
}

fn multiplicities(model: &CspNetModel, csp: &CspModel) -> Option<Vec<usize>> {
    let w = csp_layer_weights(model);
    let mut counts = vec![0; csp.n_filters()];
    for k in w.columns() {
        let j = (0..csp.n_filters()).find(|&j| csp.w.column(j) == k)?;
        counts[j] += 1;
    }
    Some(counts)
}

fn replication() -> Verdict {
    let set = synthesize_dataset(&SynthSpec::contrast(8, 256, 2, 20, 1.0), 5).expect("synthetic set");
    let csp = design_csp(&set, 8, None).expect("csp");
    let build = |kind| {
        let spec = BackboneSpec::new(kind, 8, 256, set.fs, 2);
        make_cspnet2(&spec, &csp, CspLayerMode::new(CspVariant::Fix, 7), 0).expect("model builds")
    };
    let shallow = multiplicities(&build(BackboneKind::ShallowCnn), &csp);
    let mut deep = multiplicities(&build(BackboneKind::DeepCnn), &csp);
    if let Some(d) = deep.as_mut() {
        d.sort_unstable();
    }
    let eeg = csp_layer_weights(&build(BackboneKind::EegNet)) == csp.w;
    let ok = shallow == Some(vec![5; 8]) && deep == Some(vec![3, 3, 3, 3, 3, 3, 3, 4]) && eeg;
    verdict(ok, format!("shallowcnn {shallow:?}, deepcnn sorted {deep:?}, eegnet in order: {eeg}"))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean test accuracy of `approach` over synthetic seeds 0-4 (200 train /
/// 100 test trials each) at the given training ratio.
fn synthetic_accuracy(name: &str, ratio: f64) -> Vec<f64> {
    let spec = SynthSpec::contrast(8, 256, 2, 150, 1.0);
    let approach = Approach::parse(name, BackboneKind::EegNet).expect("known approach");
    (0..5)
        .map(|seed| {
            let set = synthesize_dataset(&spec, seed).expect("synthetic set");
            let mut opts = ProtocolOptions {
                repeats: 1,
                base_seed: seed,
                train_split: 2.0 / 3.0,
                train_ratio: ratio,
                ..Default::default()
            };
            opts.fit.n_filters = 4;
            opts.fit.train.max_epochs = 100;
            opts.fit.train.eval_every = 100;
            run_within_subject(&[set], approach, &opts).expect("run succeeds")[0].accuracy
        })
        .collect()
}

fn end_to_end() -> Verdict {
    let start = Instant::now();
    let lr = synthetic_accuracy("csp-lr", 1.0);
    let standard = synthetic_accuracy("standard", 1.0);
    let fix = synthetic_accuracy("cspnet1-fix", 1.0);
    let standard_small = synthetic_accuracy("standard", 0.1);
    let fix_small = synthetic_accuracy("cspnet1-fix", 0.1);
    let lr_min = lr.iter().copied().fold(1.0, f64::min);
    let (ms, mf, mss, mfs) = (mean(&standard), mean(&fix), mean(&standard_small), mean(&fix_small));
    let (fast, time) = within(start.elapsed(), 900.0);
    verdict(
        lr_min >= 0.95 && ms >= 0.80 && mf >= ms - 0.02 && mfs - mss >= 0.03 && fast,
        format!(
            "csp-lr min {lr_min:.3}; full data standard {ms:.3} vs cspnet1-fix {mf:.3}; \
             10% data standard {mss:.3} vs cspnet1-fix {mfs:.3}; {time}"
        ),
    )
}

fn statistics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..25);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x - rng.gen_range(-0.1..0.15)).collect();
        let (t, p) = paired_ttest(&a, &b).expect("valid input");
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let m = mean(&d);
        let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let t_ref = m / (sd / (n as f64).sqrt());
        let p_ref = 2.0 * StudentsT::new(0.0, 1.0, n as f64 - 1.0).expect("df > 0").cdf(-t_ref.abs());
        worst = worst.max((t - t_ref).abs() / t_ref.abs().max(1.0)).max((p - p_ref).abs());
    }
    let adj = bh_adjust(&[0.005, 0.011, 0.02, 0.04]).expect("valid p-values");
    let bh_err = adj.iter().zip([0.02, 0.022, 0.0267, 0.04]).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
    verdict(
        worst <= 1e-8 && bh_err <= 1e-4,
        format!("t-test max deviation {worst:.1e} on 100 instances; BH example off by {bh_err:.1e}"),
    )
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("output directory") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = fs::read(&path).expect("readable");
                out.push((path.strip_prefix(dir).expect("inside").to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut trees = Vec::new();
    for name in ["first", "second"] {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_cspnet"))
            .args(["run", "--synth", "--subjects", "2", "--trials", "40", "--samples", "128", "--seed", "42"])
            .args(["--approach", "csp-lr,standard,cspnet1-fix,cspnet2-upd", "--filters", "4", "--epochs", "4"])
            .args(["--repeats", "2", "--batch-size", "16", "--eval-every", "2", "--jobs", "1", "--out"])
            .arg(&out)
            .output()
            .expect("binary runs");
        if !status.status.success() {
            return Verdict::Fail(format!("run exited with {:?}", status.status.code()));
        }
        trees.push(read_tree(&out));
    }
    let n = trees[0].len();
    verdict(trees[0] == trees[1] && n > 3, format!("{n} report files compared byte for byte"))
}

fn real_data() -> Verdict {
    let Some(dir) = std::env::var_os("CSPNET_ACCEPTANCE_DATASET") else {
        return Verdict::Skip("no dataset export provided (set CSPNET_ACCEPTANCE_DATASET)".into());
    };
    let start = Instant::now();
    let set: EpochSet = match load_epochset(&dir) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(format!("cannot load dataset: {e}")),
    };
    let subjects = set.split_by_subject();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let average = |name: &str| -> Result<f64, String> {
        let approach = Approach::parse(name, BackboneKind::EegNet).map_err(|e| e.to_string())?;
        let opts = ProtocolOptions { jobs, ..ProtocolOptions::default() };
        let recs = run_within_subject(&subjects, approach, &opts).map_err(|e| e.to_string())?;
        Ok(mean(&recs.iter().map(|r| r.accuracy).collect::<Vec<_>>()))
    };
    let (lr, fix, standard) = match (average("csp-lr"), average("cspnet1-fix"), average("standard")) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (a, b, c) => return Verdict::Fail(format!("runs failed: {a:?} {b:?} {c:?}")),
    };
    let (fast, time) = within(start.elapsed(), 7200.0);
    verdict(
        (lr * 100.0 - 75.72).abs() <= 8.0 && (fix * 100.0 - 81.69).abs() <= 8.0 && fix > standard && fast,
        format!(
            "csp-lr {:.2}%, cspnet1-fix {:.2}%, standard {:.2}%; {time}",
            100.0 * lr,
            100.0 * fix,
            100.0 * standard
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 9] = [
        ("eigensolver correctness", eigensolver),
        ("objective scale invariance", scale_invariance),
        ("gradient correctness", gradients),
        ("freeze contract", freeze_contract),
        ("replication rule", replication),
        ("synthetic end-to-end", end_to_end),
        ("statistics", statistics),
        ("determinism", determinism),
        ("real-data accuracy", real_data),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let line = match check() {
            Verdict::Pass(d) => format!("PASS  criterion {} {name}: {d}", i + 1),
            Verdict::Fail(d) => {
                failed += 1;
                format!("FAIL  criterion {} {name}: {d}", i + 1)
            }
            Verdict::Skip(d) => format!("SKIP  criterion {} {name}: {d}", i + 1),
        };
        println!("{line}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
