use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cspnet_core::csp::read_csp_model;
use cspnet_core::data::load_epochset;
use cspnet_core::CspScheme;

fn cspnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cspnet")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", p(dir), "--seed", "0"];
    args.extend_from_slice(extra);
    let o = cspnet(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().display().to_string(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_a_loadable_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let o = cspnet(&["synth", "--channels", "8", "--classes", "2", "--trials", "200", "--seed", "0", "--out", p(&d)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("200 trials"));
    let set = load_epochset(&d).unwrap();
    assert_eq!((set.len(), set.n_channels(), set.n_classes()), (200, 8, 2));
    assert_eq!(set.class_counts(), vec![100, 100]);
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        synth(&tmp.path().join(name), &["--trials", "20", "--subjects", "2"]);
    }
    assert_eq!(dir_bytes(&tmp.path().join("a")), dir_bytes(&tmp.path().join("b")));
}

#[test]
fn invalid_synth_specs_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(code(&cspnet(&["synth", "--trials", "-5", "--out", p(&out)])), 2);
    assert_eq!(code(&cspnet(&["synth", "--trials", "7", "--classes", "2", "--out", p(&out)])), 2);
    assert_eq!(code(&cspnet(&["synth", "--channels", "0", "--out", p(&out)])), 2);
    assert_eq!(code(&cspnet(&["synth", "--trials", "20"])), 2, "--out is required");
}

#[test]
fn csp_files_follow_the_class_scheme() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("bin");
    let multi = tmp.path().join("multi");
    synth(&bin, &["--channels", "10", "--trials", "60"]);
    synth(&multi, &["--channels", "10", "--classes", "4", "--trials", "80"]);

    let out = tmp.path().join("csp2");
    let o = cspnet(&["csp", "--data", p(&bin), "--filters", "8", "--export-weights", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let model = read_csp_model(out.join("csp_model.txt")).unwrap();
    assert_eq!((model.n_filters(), model.scheme), (8, CspScheme::Binary));
    let weights = fs::read_to_string(out.join("csp_weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 11);

    let out = tmp.path().join("csp4");
    let o = cspnet(&["csp", "--data", p(&multi), "--filters", "8", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let model = read_csp_model(out.join("csp_model.txt")).unwrap();
    assert_eq!((model.n_filters(), model.scheme), (8, CspScheme::OneVsRest { n_classes: 4 }));
    assert_eq!(model.class_blocks, vec![0, 0, 1, 1, 2, 2, 3, 3]);

    assert_eq!(code(&cspnet(&["csp", "--data", p(&bin), "--filters", "9", "--out", p(&out)])), 2);
    assert_eq!(code(&cspnet(&["csp", "--data", p(&multi), "--filters", "6", "--out", p(&out)])), 2);
    let missing = tmp.path().join("missing");
    assert_eq!(code(&cspnet(&["csp", "--data", p(&missing), "--out", p(&out)])), 1);
}

#[test]
fn run_writes_one_summary_row_per_approach() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    synth(&d, &["--trials", "40", "--subjects", "2", "--samples", "128"]);
    let out = tmp.path().join("r");
    let o = cspnet(&[
        "run",
        "--data",
        p(&d),
        "--scenario",
        "within",
        "--approach",
        "standard,cspnet1-fix",
        "--backbone",
        "eegnet",
        "--filters",
        "4",
        "--epochs",
        "3",
        "--repeats",
        "2",
        "--batch-size",
        "16",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("eegnet/standard,"));
    assert!(lines[2].starts_with("eegnet/cspnet1-fix,"));
    assert_eq!(fs::read_to_string(out.join("runs.csv")).unwrap().lines().count(), 1 + 2 * 2 * 2);
    assert_eq!(fs::read_dir(out.join("curves")).unwrap().count(), 8);

    let again = tmp.path().join("report");
    let o = cspnet(&["report", "--runs", p(&out.join("runs.csv")), "--out", p(&again)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // rows come back in runs.csv order, values are identical
    let sorted = |text: &str| {
        let mut l: Vec<String> = text.lines().map(String::from).collect();
        l.sort();
        l
    };
    assert_eq!(sorted(&fs::read_to_string(again.join("summary.csv")).unwrap()), sorted(&summary));
    assert!(stdout(&o).contains("eegnet/cspnet1-fix"));
}

#[test]
fn cross_subject_runs_hold_out_each_subject() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let o = cspnet(&[
        "run",
        "--synth",
        "--trials",
        "20",
        "--subjects",
        "3",
        "--scenario",
        "cross",
        "--approach",
        "csp-lr",
        "--filters",
        "2",
        "--repeats",
        "1",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 4);
}

#[test]
fn ratio_sweep_has_one_column_per_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = cspnet(&[
        "run",
        "--synth",
        "--trials",
        "40",
        "--samples",
        "128",
        "--approach",
        "csp-lr,standard",
        "--filters",
        "2",
        "--epochs",
        "2",
        "--repeats",
        "1",
        "--sweep",
        "ratio=0.1,0.3,0.5,0.7,1.0",
        "--sweep",
        "f=2,4,5,22",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sweep = fs::read_to_string(out.join("sweep_ratio.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "ratio,0.1,0.3,0.5,0.7,1");
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 6 && !l.contains(",,")));
    let cells = fs::read_to_string(out.join("sweep_f_cells.csv")).unwrap();
    assert_eq!(cells.lines().filter(|l| l.contains(",skipped,")).count(), 2 * 2, "f=5 and f=22 per approach");
}

#[test]
fn unknown_approach_fails_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let missing = tmp.path().join("no-data");
    let o = cspnet(&["run", "--data", p(&missing), "--approach", "standard,cspnet3-fix", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cspnet3-fix"));
    assert!(!out.exists());
    assert_eq!(code(&cspnet(&["run", "--synth", "--backbone", "resnet", "--out", p(&out)])), 2);
    assert_eq!(code(&cspnet(&["run", "--synth", "--scenario", "sideways", "--out", p(&out)])), 2);
    assert_eq!(code(&cspnet(&["run", "--synth", "--approach", "cspnet2-rad", "--out", p(&out)])), 2);
    assert!(!out.exists());
}

#[test]
fn data_source_must_be_unique() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    assert_eq!(code(&cspnet(&["run", "--out", p(&out)])), 2);
    assert_eq!(code(&cspnet(&["run", "--synth", "--data", p(tmp.path()), "--out", p(&out)])), 2);
}

#[test]
fn failed_runs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    // 16 samples are too short for EEGNet's pooling stages
    let o = cspnet(&["run", "--synth", "--trials", "20", "--samples", "16", "--repeats", "1", "--out", p(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("eegnet"), "{}", stderr(&o));
}

#[test]
fn config_file_values_yield_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    let out = tmp.path().join("d");
    fs::write(&cfg, format!("# synthetic set\nchannels = 6\ntrials = 30\nclasses = 3\nout = {}\n", p(&out))).unwrap();
    let o = cspnet(&["synth", "--config", p(&cfg), "--channels", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let set = load_epochset(&out).unwrap();
    assert_eq!((set.n_channels(), set.len(), set.n_classes()), (5, 30, 3));

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(code(&cspnet(&["synth", "--config", p(&cfg), "--out", p(&out)])), 2);
    let missing = tmp.path().join("missing.cfg");
    assert_eq!(code(&cspnet(&["synth", "--config", p(&missing), "--out", p(&out)])), 2);
}

#[test]
fn gradcheck_reports_every_layer_kind() {
    let o = cspnet(&["gradcheck", "--seeds", "1"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    for kind in ["conv2d", "batchnorm", "elu", "square", "safelog", "avgpool", "maxpool", "dropout", "flatten", "dense"]
    {
        assert!(text.lines().any(|l| l.starts_with(kind) && l.ends_with("ok")), "{kind} missing:\n{text}");
    }
    for model in ["eegnet", "shallowcnn", "deepcnn"] {
        assert!(text.lines().any(|l| l.starts_with(model)), "{model} missing");
    }
}

#[test]
fn gradcheck_catches_a_corrupted_backward() {
    let o = cspnet(&["gradcheck", "--seeds", "1", "--inject-fault", "elu"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).lines().any(|l| l.starts_with("elu") && l.ends_with("FAIL")));
    assert_eq!(code(&cspnet(&["gradcheck", "--inject-fault", "lstm"])), 2);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&cspnet(&["--help"])), 0);
    assert_eq!(code(&cspnet(&["--version"])), 0);
    assert_eq!(code(&cspnet(&["frobnicate"])), 2);
}
