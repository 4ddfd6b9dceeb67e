//! Plain-text CSP model files:
//!
//! ```text
//! csp v1 <c> <f> <binary|ovr-K>
//! <f eigenvalues>
//! <column 1: c values>
//! ...
//! <column f: c values>
//! ```
//!
//! Values are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{CspModel, CspScheme};
use crate::{Error, Result};

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn model_to_text(model: &CspModel) -> String {
    let scheme = match model.scheme {
        CspScheme::Binary => "binary".to_string(),
        CspScheme::OneVsRest { n_classes } => format!("ovr-{n_classes}"),
    };
    let mut out = format!("csp v1 {} {} {scheme}\n", model.n_channels(), model.n_filters());
    let line = |vals: &mut dyn Iterator<Item = f64>| vals.map(fmt17).collect::<Vec<_>>().join(" ");
    writeln!(out, "{}", line(&mut model.eigenvalues.iter().copied())).unwrap();
    for col in model.w.columns() {
        writeln!(out, "{}", line(&mut col.iter().copied())).unwrap();
    }
    out
}

pub fn model_from_text(text: &str, path: &Path) -> Result<CspModel> {
    let bad = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    if header.len() != 5 || header[0] != "csp" || header[1] != "v1" {
        return Err(bad(format!("bad header {header:?}")));
    }
    let c: usize = header[2].parse().map_err(|_| bad("bad channel count".into()))?;
    let f: usize = header[3].parse().map_err(|_| bad("bad filter count".into()))?;
    let scheme = match header[4] {
        "binary" => CspScheme::Binary,
        s => match s.strip_prefix("ovr-").and_then(|k| k.parse().ok()) {
            Some(n_classes) if n_classes >= 2 && f % n_classes == 0 => CspScheme::OneVsRest { n_classes },
            _ => return Err(bad(format!("unknown scheme {s:?}"))),
        },
    };
    let parse_line = |line: Option<&str>, n: usize, what: &str| -> Result<Vec<f64>> {
        let vals = line
            .ok_or_else(|| bad(format!("missing {what}")))?
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?} in {what}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != n {
            return Err(bad(format!("{what} has {} values, expected {n}", vals.len())));
        }
        Ok(vals)
    };
    let eigenvalues = parse_line(lines.next(), f, "eigenvalues")?;
    let mut w = Array2::<f64>::zeros((c, f));
    for j in 0..f {
        let col = parse_line(lines.next(), c, &format!("column {}", j + 1))?;
        for (i, v) in col.into_iter().enumerate() {
            w[[i, j]] = v;
        }
    }
    let class_blocks = match scheme {
        CspScheme::Binary => (0..f).map(|i| usize::from(i >= f / 2)).collect(),
        CspScheme::OneVsRest { n_classes } => (0..f).map(|i| i / (f / n_classes)).collect(),
    };
    Ok(CspModel { w, eigenvalues, scheme, class_blocks })
}

pub fn write_csp_model(model: &CspModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_text(model)).map_err(|source| Error::Write { path: path.to_path_buf(), source })
}

pub fn read_csp_model(path: impl AsRef<Path>) -> Result<CspModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Read { path: path.to_path_buf(), source })?;
    model_from_text(&text, path)
}

/// Filter weights as CSV: one row per channel, one column per filter.
pub fn write_weights_csv(w: &Array2<f64>, channel_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("channel");
    for j in 0..w.ncols() {
        write!(out, ",filter{}", j + 1).unwrap();
    }
    out.push('\n');
    for (i, row) in w.rows().into_iter().enumerate() {
        let name = channel_names.get(i).cloned().unwrap_or_else(|| format!("ch{}", i + 1));
        out.push_str(&name);
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Error::Write { path: path.to_path_buf(), source })
}
