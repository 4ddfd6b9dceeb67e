use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::protocol::{CellStatus, SweepCell};
use super::stats::{bh_adjust, paired_ttest};
use super::{Approach, RunRecord};
use crate::{Error, Result};

/// One summary row: accuracy mean and spread per subject and overall.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachRow {
    pub approach: String,
    /// Mean over repeats, one entry per report subject (`NaN` if absent).
    pub subject_mean: Vec<f64>,
    /// Sample standard deviation over repeats (0 for a single repeat).
    pub subject_std: Vec<f64>,
    /// Mean over all of this approach's runs.
    pub average_mean: f64,
    /// Standard deviation over repeats of the per-repeat subject average.
    pub average_std: f64,
}

/// A paired t-test of an approach against its backbone's standard variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub approach: String,
    pub reference: String,
    pub t: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub subjects: Vec<String>,
    pub rows: Vec<ApproachRow>,
    pub comparisons: Vec<Comparison>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// `*`, `**`, `***` for adjusted p below 0.05, 0.01, 0.001.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

impl ExperimentReport {
    pub fn from_records(records: &[RunRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::param("no run records to report"));
        }
        let mut approaches: Vec<String> = Vec::new();
        for r in records {
            if !approaches.contains(&r.approach) {
                approaches.push(r.approach.clone());
            }
        }
        let mut subjects: Vec<String> = records.iter().map(|r| r.subject.clone()).collect();
        subjects.sort();
        subjects.dedup();

        let mut rows = Vec::new();
        let mut keyed: BTreeMap<&str, BTreeMap<(&str, usize), f64>> = BTreeMap::new();
        for a in &approaches {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| &r.approach == a).collect();
            let (mut subject_mean, mut subject_std) = (Vec::new(), Vec::new());
            for s in &subjects {
                let accs: Vec<f64> = mine.iter().filter(|r| &r.subject == s).map(|r| r.accuracy).collect();
                if accs.is_empty() {
                    subject_mean.push(f64::NAN);
                    subject_std.push(f64::NAN);
                } else {
                    subject_mean.push(mean(&accs));
                    subject_std.push(sample_std(&accs));
                }
            }
            let mut by_repeat: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for r in &mine {
                by_repeat.entry(r.repeat).or_default().push(r.accuracy);
            }
            let repeat_avgs: Vec<f64> = by_repeat.values().map(|v| mean(v)).collect();
            let all: Vec<f64> = mine.iter().map(|r| r.accuracy).collect();
            rows.push(ApproachRow {
                approach: a.clone(),
                subject_mean,
                subject_std,
                average_mean: mean(&all),
                average_std: sample_std(&repeat_avgs),
            });
            keyed.insert(a, mine.iter().map(|r| ((r.subject.as_str(), r.repeat), r.accuracy)).collect());
        }

        let mut comparisons = Vec::new();
        for a in &approaches {
            let Ok(parsed) = a.parse::<Approach>() else { continue };
            let Some(backbone) = parsed.backbone() else { continue };
            if matches!(parsed, Approach::Standard(_)) {
                continue;
            }
            let reference = Approach::Standard(backbone).label();
            let Some(ref_runs) = keyed.get(reference.as_str()) else { continue };
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for (key, acc) in &keyed[a.as_str()] {
                if let Some(r) = ref_runs.get(key) {
                    x.push(*acc);
                    y.push(*r);
                }
            }
            if x.len() < 2 {
                continue;
            }
            let (t, p) = paired_ttest(&x, &y)?;
            comparisons.push(Comparison { approach: a.clone(), reference, t, p_raw: p, p_adjusted: p });
        }
        let adjusted = bh_adjust(&comparisons.iter().map(|c| c.p_raw).collect::<Vec<_>>())?;
        for (c, p) in comparisons.iter_mut().zip(adjusted) {
            c.p_adjusted = p;
        }
        Ok(ExperimentReport { subjects, rows, comparisons })
    }

    pub fn comparison(&self, approach: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.approach == approach)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|source| Error::Write { path: path.to_path_buf(), source })?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Write { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) }
}

fn write_rows(path: &Path, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Write { path: path.to_path_buf(), source })
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn sorted_records(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.approach, &a.subject, a.repeat).cmp(&(&b.approach, &b.subject, b.repeat)));
    sorted
}

/// Writes `runs.csv`, `summary.csv` and `table.csv` (see [`export_report`]).
pub fn export_tables(records: &[RunRecord], dir: &Path) -> Result<ExperimentReport> {
    let report = ExperimentReport::from_records(records)?;
    fs::create_dir_all(dir).map_err(|source| Error::Write { path: dir.to_path_buf(), source })?;
    let sorted = sorted_records(records);
    let header = ["approach", "subject", "repeat", "accuracy"].map(String::from).to_vec();
    write_rows(
        &dir.join("runs.csv"),
        std::iter::once(header).chain(
            sorted.iter().map(|r| vec![r.approach.clone(), r.subject.clone(), r.repeat.to_string(), num(r.accuracy)]),
        ),
    )?;

    let mut header = vec!["approach".to_string()];
    for s in &report.subjects {
        header.push(format!("{s}_mean"));
        header.push(format!("{s}_std"));
    }
    header.extend(["average_mean", "average_std", "t", "p_raw", "p_adjusted", "stars"].map(String::from));
    let summary = report.rows.iter().map(|row| {
        let mut cells = vec![row.approach.clone()];
        for (m, s) in row.subject_mean.iter().zip(&row.subject_std) {
            cells.push(num(*m));
            cells.push(num(*s));
        }
        cells.push(num(row.average_mean));
        cells.push(num(row.average_std));
        match report.comparison(&row.approach) {
            Some(c) => {
                cells.extend([num(c.t), num(c.p_raw), num(c.p_adjusted), significance_stars(c.p_adjusted).to_string()])
            }
            None => cells.extend(std::iter::repeat_n(String::new(), 4)),
        }
        cells
    });
    write_rows(&dir.join("summary.csv"), std::iter::once(header).chain(summary))?;

    let mut header = vec!["approach".to_string()];
    header.extend(report.subjects.iter().cloned());
    header.push("average".into());
    let table = report.rows.iter().map(|row| {
        let cell =
            |m: f64, s: f64| if m.is_nan() { String::new() } else { format!("{:.2}±{:.2}", 100.0 * m, 100.0 * s) };
        let mut cells = vec![row.approach.clone()];
        cells.extend(row.subject_mean.iter().zip(&row.subject_std).map(|(m, s)| cell(*m, *s)));
        let stars = report.comparison(&row.approach).map_or("", |c| significance_stars(c.p_adjusted));
        cells.push(format!("{}{stars}", cell(row.average_mean, row.average_std)));
        cells
    });
    write_rows(&dir.join("table.csv"), std::iter::once(header).chain(table))?;
    Ok(report)
}

/// Writes `runs.csv` (one row per run), `summary.csv` (numeric means,
/// standard deviations and test statistics), `table.csv` (formatted
/// `mean±std` cells in percent with significance stars) and one curve CSV per
/// run under `curves/`.
pub fn export_report(records: &[RunRecord], dir: &Path) -> Result<ExperimentReport> {
    let report = export_tables(records, dir)?;
    let curves = dir.join("curves");
    fs::create_dir_all(&curves).map_err(|source| Error::Write { path: curves.clone(), source })?;
    for r in sorted_records(records) {
        let path = curves.join(format!("{}_{}_r{}.csv", file_stem(&r.approach), file_stem(&r.subject), r.repeat));
        let header = ["epoch", "train_acc", "test_acc"].map(String::from).to_vec();
        let rows = r
            .epochs
            .iter()
            .zip(r.train_curve.iter().zip(&r.test_curve))
            .map(|(e, (tr, te))| vec![e.to_string(), num(*tr), num(*te)]);
        write_rows(&path, std::iter::once(header).chain(rows))?;
    }
    Ok(report)
}

/// Reads the `runs.csv` written by [`export_report`]. Curves and wall times
/// are not stored there, so the returned records have none.
pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let format = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Read { path: path.to_path_buf(), source },
        other => format(format!("{other:?}")),
    })?;
    let header = reader.headers().map_err(|e| format(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["approach", "subject", "repeat", "accuracy"] {
        return Err(format(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| format(e.to_string()))?;
        let bad = |what: &str| format(format!("row {}: bad {what}", line + 2));
        let accuracy: f64 = row[3].parse().map_err(|_| bad("accuracy"))?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(bad("accuracy"));
        }
        records.push(RunRecord {
            approach: row[0].to_string(),
            subject: row[1].to_string(),
            repeat: row[2].parse().map_err(|_| bad("repeat"))?,
            accuracy,
            epochs: Vec::new(),
            train_curve: Vec::new(),
            test_curve: Vec::new(),
            wall_time_s: 0.0,
        });
    }
    Ok(records)
}

/// Writes `sweep_<name>.csv` (approach rows, one mean-accuracy column per
/// swept value; failed or skipped cells are empty) and
/// `sweep_<name>_cells.csv` (one row per cell with its status and reason).
pub fn export_sweep(cells: &[SweepCell], name: &str, dir: &Path) -> Result<()> {
    if cells.is_empty() {
        return Err(Error::param("no sweep cells to export"));
    }
    fs::create_dir_all(dir).map_err(|source| Error::Write { path: dir.to_path_buf(), source })?;
    let mut values: Vec<f64> = Vec::new();
    let mut approaches: Vec<&str> = Vec::new();
    for c in cells {
        if !values.contains(&c.value) {
            values.push(c.value);
        }
        if !approaches.contains(&c.approach.as_str()) {
            approaches.push(&c.approach);
        }
    }
    let mut header = vec![name.to_string()];
    header.extend(values.iter().map(|v| num(*v)));
    let rows = approaches.iter().map(|a| {
        let mut row = vec![a.to_string()];
        for v in &values {
            let cell = cells.iter().find(|c| c.approach == *a && c.value == *v);
            row.push(cell.and_then(SweepCell::mean_accuracy).map_or(String::new(), num));
        }
        row
    });
    write_rows(&dir.join(format!("sweep_{name}.csv")), std::iter::once(header).chain(rows))?;

    let header =
        ["approach", name, "status", "mean_accuracy", "std_accuracy", "n_runs", "reason"].map(String::from).to_vec();
    let rows = cells.iter().map(|c| {
        let (status, reason, accs): (&str, &str, Vec<f64>) = match &c.status {
            CellStatus::Done(recs) => ("done", "", recs.iter().map(|r| r.accuracy).collect()),
            CellStatus::Failed(why) => ("failed", why, Vec::new()),
            CellStatus::Skipped(why) => ("skipped", why, Vec::new()),
        };
        let (m, s) =
            if accs.is_empty() { (String::new(), String::new()) } else { (num(mean(&accs)), num(sample_std(&accs))) };
        vec![c.approach.clone(), num(c.value), status.into(), m, s, accs.len().to_string(), reason.into()]
    });
    write_rows(&dir.join(format!("sweep_{name}_cells.csv")), std::iter::once(header).chain(rows))
}
