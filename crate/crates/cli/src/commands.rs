use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use cspnet_core::csp::{design_csp, write_csp_model, write_weights_csv};
use cspnet_core::data::{bandpass_filter, load_epochset, save_epochset, split_within_subject, synthesize_subjects};
use cspnet_core::gradsuite::{check_backbones, check_layer_kinds, SuiteResult};
use cspnet_core::harness::{
    export_report, export_sweep, export_tables, read_runs_csv, run_cross_subject, run_within_subject,
    significance_stars, sweep_filter_count, sweep_training_ratio, CellStatus, ExperimentReport, FitSettings,
    ProtocolOptions, Scenario,
};
use cspnet_core::nn::LayerKind;
use cspnet_core::{Approach, BackboneKind, CspNetFamily, EpochSet, Error, RunRecord, SynthSpec, TrainConfig};

use crate::config::Config;
use crate::{usage, Cli, CliResult, Command, CspArgs, DataArgs, GradcheckArgs, ReportArgs, RunArgs, SynthArgs};

pub const CSP_MODEL_FILE: &str = "csp_model.txt";
pub const CSP_WEIGHTS_FILE: &str = "csp_weights.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.csv";

struct Globals {
    cfg: Config,
    seed: u64,
    out: Option<PathBuf>,
    jobs: usize,
}

impl Globals {
    fn out_dir(&self) -> CliResult<&Path> {
        let dir = self.out.as_deref().ok_or_else(|| usage("--out is required for this command"))?;
        fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

pub(crate) fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let jobs = cfg.get("jobs", cli.jobs, 1)?;
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let g = Globals { seed: cfg.get("seed", cli.seed, 0)?, out: cfg.pick("out", cli.out)?, jobs, cfg };
    match cli.command {
        Command::Synth(a) => cmd_synth(&g, &a, out),
        Command::Csp(a) => cmd_csp(&g, &a, out),
        Command::Run(a) => cmd_run(&g, &a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&g, &a, out),
        Command::Report(a) => cmd_report(&g, &a, out),
    }
}

/// Core errors caused by caller-supplied values are usage errors.
fn classify(e: Error) -> anyhow::Error {
    match e {
        Error::Parameter(msg) => usage(msg),
        other => anyhow!(other),
    }
}

fn synth_spec(cfg: &Config, a: &SynthArgs) -> CliResult<(SynthSpec, usize)> {
    let c = cfg.get("channels", a.channels, 8)?;
    let t = cfg.get("samples", a.samples, 256)?;
    let k = cfg.get("classes", a.classes, 2)?;
    let trials = cfg.get("trials", a.trials, 200)?;
    let n_subjects = cfg.get("subjects", a.subjects, 1)?;
    if k == 0 || trials == 0 || trials % k != 0 {
        return Err(usage(format!("--trials {trials} must be a positive multiple of --classes {k}")));
    }
    if n_subjects == 0 {
        return Err(usage("--subjects must be at least 1"));
    }
    let mut spec = SynthSpec::contrast(c, t, k, trials / k, cfg.get("contrast", a.contrast, 1.0)?);
    spec.noise_scale = cfg.get("noise", a.noise, spec.noise_scale)?;
    spec.fs = cfg.get("fs", a.fs, spec.fs)?;
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok((spec, n_subjects))
}

fn synthesize(spec: &SynthSpec, n_subjects: usize, seed: u64) -> CliResult<EpochSet> {
    let subjects = synthesize_subjects(spec, n_subjects, seed)?;
    Ok(EpochSet::concat(&subjects.iter().collect::<Vec<_>>())?)
}

fn cmd_synth(g: &Globals, a: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let (spec, n_subjects) = synth_spec(&g.cfg, a)?;
    let dir = g.out_dir()?;
    let set = synthesize(&spec, n_subjects, g.seed)?;
    save_epochset(&set, dir)?;
    writeln!(
        out,
        "wrote {} trials ({} subject(s), {} channels x {} samples, {} classes) to {}",
        set.len(),
        n_subjects,
        set.n_channels(),
        set.n_samples(),
        set.n_classes(),
        dir.display()
    )?;
    Ok(())
}

fn parse_band(text: &str) -> CliResult<(f64, f64)> {
    let bad = || usage(format!("--band expects LOW,HIGH in Hz, got {text:?}"));
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

fn band_pass(cfg: &Config, a: &DataArgs, set: EpochSet) -> CliResult<EpochSet> {
    match cfg.pick::<String>("band", a.band.clone())? {
        None => Ok(set),
        Some(text) => {
            let (lo, hi) = parse_band(&text)?;
            bandpass_filter(&set, lo, hi).map_err(classify)
        }
    }
}

fn load_data(cfg: &Config, a: &DataArgs) -> CliResult<EpochSet> {
    let dir: PathBuf = cfg.pick("data", a.data.clone())?.ok_or_else(|| usage("--data is required"))?;
    let set = load_epochset(&dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    band_pass(cfg, a, set)
}

/// Checks that `f` filters can be designed for `k` classes on `c` channels.
fn check_filter_count(f: usize, c: usize, k: usize) -> CliResult<()> {
    let problem = if f == 0 {
        Some("at least one filter is needed".to_string())
    } else if f > c {
        Some(format!("{f} filters exceed {c} channels"))
    } else if k == 2 && f % 2 != 0 {
        Some(format!("{f} filters cannot be split evenly between the two classes"))
    } else if k > 2 && f % k != 0 {
        Some(format!("{f} filters are not divisible by {k} classes"))
    } else {
        None
    };
    problem.map_or(Ok(()), |p| Err(usage(format!("--filters: {p}"))))
}

fn cmd_csp(g: &Globals, a: &CspArgs, out: &mut dyn Write) -> CliResult<()> {
    let f = g.cfg.get("filters", a.filters, 8)?;
    let ridge = g.cfg.pick("ridge", a.ridge)?;
    let split = g.cfg.get("train-split", a.train_split, 0.8)?;
    if !(split > 0.0 && split <= 1.0) {
        return Err(usage(format!("--train-split {split} outside (0, 1]")));
    }
    let export = g.cfg.get("export-weights", a.export_weights, false)?;
    let set = load_data(&g.cfg, &a.data)?;
    check_filter_count(f, set.n_channels(), set.n_classes())?;
    let dir = g.out_dir()?;
    let train = if split < 1.0 { split_within_subject(&set, split, g.seed)?.apply(&set)?.0 } else { set };
    let model = design_csp(&train, f, ridge)?;
    write_csp_model(&model, dir.join(CSP_MODEL_FILE))?;
    if export {
        write_weights_csv(&model.w, &train.channel_names, dir.join(CSP_WEIGHTS_FILE))?;
    }
    let eig: Vec<String> = model.eigenvalues.iter().map(|v| format!("{v:.4}")).collect();
    writeln!(
        out,
        "fitted {:?} CSP: {} filters over {} channels from {} training trials",
        model.scheme,
        model.n_filters(),
        model.n_channels(),
        train.len()
    )?;
    writeln!(out, "eigenvalues: {}", eig.join(" "))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum Sweep {
    Ratio(Vec<f64>),
    Filters(Vec<usize>),
}

fn parse_sweep(text: &str) -> CliResult<Sweep> {
    let bad = |why: &str| usage(format!("--sweep {text:?}: {why}"));
    let (name, values) = text.split_once('=').ok_or_else(|| bad("expected NAME=V1,V2,.."))?;
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(bad("no values"));
    }
    match name.trim() {
        "ratio" => values
            .iter()
            .map(|v| v.parse().map_err(|_| bad("ratios must be numbers")))
            .collect::<CliResult<_>>()
            .map(Sweep::Ratio),
        "f" | "filters" => values
            .iter()
            .map(|v| v.parse().map_err(|_| bad("filter counts must be integers")))
            .collect::<CliResult<_>>()
            .map(Sweep::Filters),
        _ => Err(bad("the sweep name must be ratio or f")),
    }
}

fn train_config(cfg: &Config, a: &RunArgs, seed: u64) -> CliResult<TrainConfig> {
    let d = TrainConfig::default();
    let train = TrainConfig {
        batch_size: cfg.get("batch-size", a.batch_size, d.batch_size)?,
        lr: cfg.get("lr", a.lr, d.lr)?,
        weight_decay: cfg.get("weight-decay", a.weight_decay, d.weight_decay)?,
        max_epochs: cfg.get("epochs", a.epochs, d.max_epochs)?,
        seed,
        dropout: cfg.get("dropout", a.dropout, d.dropout)?,
        eval_every: cfg.get("eval-every", a.eval_every, d.eval_every)?,
        balanced_accuracy: cfg.get("balanced-accuracy", a.balanced_accuracy, false)?,
    };
    train.validate().map_err(|e| usage(e.to_string()))?;
    Ok(train)
}

fn run_data(g: &Globals, a: &RunArgs) -> CliResult<EpochSet> {
    let synth = g.cfg.get("synth", a.synth, false)?;
    let has_dir = a.data.data.is_some() || g.cfg.raw("data").is_some();
    match (synth, has_dir) {
        (true, true) => Err(usage("give either --data or --synth, not both")),
        (false, false) => Err(usage("a data source is required: --data DIR or --synth")),
        (true, false) => {
            let (spec, n) = synth_spec(&g.cfg, &a.synth_spec)?;
            band_pass(&g.cfg, &a.data, synthesize(&spec, n, g.seed)?)
        }
        (false, true) => load_data(&g.cfg, &a.data),
    }
}

fn print_report(report: &ExperimentReport, out: &mut dyn Write) -> CliResult<()> {
    let width = report.rows.iter().map(|r| r.approach.len()).max().unwrap_or(0).max(8);
    writeln!(out, "{:<width$}  {:>16}  p_adjusted", "approach", "accuracy (%)")?;
    for row in &report.rows {
        let cell = format!("{:.2}±{:.2}", 100.0 * row.average_mean, 100.0 * row.average_std);
        let p = report
            .comparison(&row.approach)
            .map_or(String::from("-"), |c| format!("{:.4}{}", c.p_adjusted, significance_stars(c.p_adjusted)));
        writeln!(out, "{:<width$}  {:>16}  {p}", row.approach, cell)?;
    }
    Ok(())
}

fn cmd_run(g: &Globals, a: &RunArgs, out: &mut dyn Write) -> CliResult<()> {
    let backbone: BackboneKind =
        g.cfg.get("backbone", a.backbone.clone(), "eegnet".into())?.parse().map_err(|e: Error| usage(e.to_string()))?;
    let names: String = g.cfg.get("approach", a.approach.clone(), "standard".into())?;
    let mut approaches = Vec::new();
    for name in names.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let approach = Approach::parse(name, backbone).map_err(|e| usage(e.to_string()))?;
        if !approaches.contains(&approach) {
            approaches.push(approach);
        }
    }
    if approaches.is_empty() {
        return Err(usage("--approach lists no approaches"));
    }
    let scenario: Scenario =
        g.cfg.get("scenario", a.scenario.clone(), "within".into())?.parse().map_err(|e: Error| usage(e.to_string()))?;
    let mut sweep_specs = a.sweep.clone();
    if sweep_specs.is_empty() {
        if let Some(v) = g.cfg.raw("sweep") {
            sweep_specs = v.split(';').map(String::from).collect();
        }
    }
    let sweeps = sweep_specs.iter().map(|s| parse_sweep(s)).collect::<CliResult<Vec<_>>>()?;
    if scenario == Scenario::Cross && sweeps.iter().any(|s| matches!(s, Sweep::Ratio(_))) {
        return Err(usage("the training-ratio sweep uses the within-subject protocol"));
    }
    let fit = FitSettings {
        train: train_config(&g.cfg, a, g.seed)?,
        n_filters: g.cfg.get("filters", a.filters, 8)?,
        ridge: g.cfg.pick("ridge", a.ridge)?,
        rad_trainable: g.cfg.get("rad-trainable", a.rad_trainable, false)?,
        observer: None,
    };
    let opts = ProtocolOptions {
        repeats: g.cfg.get("repeats", a.repeats, 5)?,
        base_seed: g.seed,
        jobs: g.jobs,
        train_split: g.cfg.get("train-split", a.train_split, 0.8)?,
        train_ratio: g.cfg.get("train-ratio", a.train_ratio, 1.0)?,
        fit,
    };
    if opts.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    if !(opts.train_split > 0.0 && opts.train_split < 1.0) {
        return Err(usage(format!("--train-split {} outside (0, 1)", opts.train_split)));
    }
    if !(opts.train_ratio > 0.0 && opts.train_ratio <= 1.0) {
        return Err(usage(format!("--train-ratio {} outside (0, 1]", opts.train_ratio)));
    }

    let data = run_data(g, a)?;
    let subjects = data.split_by_subject();
    let sweeps_filters = sweeps.iter().any(|s| matches!(s, Sweep::Filters(_)));
    if approaches.iter().any(Approach::uses_csp) && !sweeps_filters {
        check_filter_count(opts.fit.n_filters, data.n_channels(), data.n_classes())?;
        for approach in &approaches {
            if let Approach::CspNet { family: CspNetFamily::CspNet2, backbone, .. } = approach {
                if backbone.spatial_kernels() < opts.fit.n_filters {
                    return Err(usage(format!(
                        "{} has {} spatial kernels, fewer than {} CSP filters",
                        backbone,
                        backbone.spatial_kernels(),
                        opts.fit.n_filters
                    )));
                }
            }
        }
    }
    let dir = g.out_dir()?.to_path_buf();

    if sweeps.is_empty() {
        let mut records: Vec<RunRecord> = Vec::new();
        let mut failures = Vec::new();
        for &approach in &approaches {
            let result = match scenario {
                Scenario::Within => run_within_subject(&subjects, approach, &opts),
                Scenario::Cross => run_cross_subject(&subjects, approach, &opts),
            };
            match result {
                Ok(recs) => records.extend(recs),
                Err(e) => failures.push(format!("{}: {e}", approach.label())),
            }
        }
        if !records.is_empty() {
            let report = export_report(&records, &dir)?;
            print_report(&report, out)?;
            writeln!(out, "wrote {} runs to {}", records.len(), dir.display())?;
        }
        if !failures.is_empty() {
            return Err(anyhow!("{} approach(es) failed:\n  {}", failures.len(), failures.join("\n  ")));
        }
        return Ok(());
    }

    let mut failed = Vec::new();
    for sweep in &sweeps {
        let mut cells = Vec::new();
        let name = match sweep {
            Sweep::Ratio(_) => "ratio",
            Sweep::Filters(_) => "f",
        };
        for &approach in &approaches {
            let batch = match sweep {
                Sweep::Ratio(r) => sweep_training_ratio(&subjects, approach, r, &opts).map_err(classify)?,
                Sweep::Filters(f) => sweep_filter_count(&subjects, approach, f, scenario, &opts).map_err(classify)?,
            };
            cells.extend(batch);
        }
        for c in &cells {
            let shown = match &c.status {
                CellStatus::Done(_) => format!("{:.4}", c.mean_accuracy().unwrap_or(f64::NAN)),
                CellStatus::Skipped(why) => format!("skipped ({why})"),
                CellStatus::Failed(why) => {
                    failed.push(format!("{} {name}={}: {why}", c.approach, c.value));
                    "failed".to_string()
                }
            };
            writeln!(out, "{} {name}={} {shown}", c.approach, c.value)?;
        }
        export_sweep(&cells, name, &dir)?;
    }
    writeln!(out, "wrote sweep tables to {}", dir.display())?;
    if !failed.is_empty() {
        return Err(anyhow!("{} sweep cell(s) failed:\n  {}", failed.len(), failed.join("\n  ")));
    }
    Ok(())
}

fn cmd_gradcheck(g: &Globals, a: &GradcheckArgs, out: &mut dyn Write) -> CliResult<()> {
    let n = g.cfg.get("seeds", a.seeds, 5)?;
    if n == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let fault = match &a.inject_fault {
        None => None,
        Some(name) => Some(LayerKind::from_name(name).ok_or_else(|| usage(format!("unknown layer kind {name:?}")))?),
    };
    let seeds: Vec<u64> = (0..n as u64).map(|i| g.seed.wrapping_add(i)).collect();
    let mut results: Vec<SuiteResult> = check_layer_kinds(&seeds, fault)?;
    results.extend(check_backbones(&seeds, fault)?);

    writeln!(out, "{:<12} {:>15} {:>10}  result", "check", "max_rel_error", "tolerance")?;
    for r in &results {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        writeln!(out, "{:<12} {:>15.3e} {:>10.0e}  {verdict}", r.name, r.max_rel_error, r.tolerance)?;
    }
    if let Some(dir) = &g.out {
        fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        let mut text = String::from("check,max_rel_error,tolerance,passed\n");
        for r in &results {
            text.push_str(&format!("{},{},{},{}\n", r.name, r.max_rel_error, r.tolerance, r.passed()));
        }
        let path = dir.join(GRADCHECK_FILE);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        writeln!(out, "all {} checks passed over {} seed(s)", results.len(), n)?;
        Ok(())
    } else {
        Err(anyhow!("gradient check failed for {}", failed.join(", ")))
    }
}

fn cmd_report(g: &Globals, a: &ReportArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut paths = a.runs.clone();
    if paths.is_empty() {
        if let Some(v) = g.cfg.raw("runs") {
            paths = v.split(',').map(|p| PathBuf::from(p.trim())).collect();
        }
    }
    if paths.is_empty() {
        return Err(usage("--runs FILE is required"));
    }
    let mut records = Vec::new();
    for p in &paths {
        records.extend(read_runs_csv(p)?);
    }
    let dir = g.out_dir()?;
    let report = export_tables(&records, dir)?;
    print_report(&report, out)?;
    Ok(())
}
