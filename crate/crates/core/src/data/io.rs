//! Dataset directory format.
//!
//! ```text
//! dataset/
//!   manifest.json   {fs, n_samples, channel_names, class_names,
//!                    subjects: [{id, n_trials, file, labels}]}
//!   <subject>.bin   f32 little-endian, row-major [trial][channel][sample]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{default_channel_names, EpochSet, Trial};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    fs: f64,
    n_samples: usize,
    channel_names: Vec<String>,
    class_names: Vec<String>,
    subjects: Vec<SubjectEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SubjectEntry {
    id: String,
    n_trials: usize,
    file: String,
    labels: Vec<usize>,
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), msg: msg.into() }
}

fn corrupt(path: &Path, msg: impl Into<String>) -> Error {
    Error::Corruption { path: path.to_path_buf(), msg: msg.into() }
}

pub fn load_epochset(dir: impl AsRef<Path>) -> Result<EpochSet> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| format_err(&manifest_path, format!("cannot read manifest: {e}")))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| format_err(&manifest_path, e.to_string()))?;

    let c = manifest.channel_names.len();
    let t = manifest.n_samples;
    let k = manifest.class_names.len();
    let mut trials = Vec::new();
    for subject in &manifest.subjects {
        if subject.labels.len() != subject.n_trials {
            return Err(format_err(
                &manifest_path,
                format!("subject {} lists {} labels for {} trials", subject.id, subject.labels.len(), subject.n_trials),
            ));
        }
        if let Some(&bad) = subject.labels.iter().find(|&&l| l >= k) {
            return Err(Error::validation(format!("subject {} has label {bad} but only {k} classes", subject.id)));
        }
        let path = dir.join(&subject.file);
        let bytes = fs::read(&path).map_err(|source| Error::Read { path: path.clone(), source })?;
        let expected = subject.n_trials * c * t * 4;
        if bytes.len() != expected {
            return Err(corrupt(&path, format!("payload is {} bytes, manifest implies {expected}", bytes.len())));
        }
        let mut values = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
        for &label in &subject.labels {
            let data = Array2::from_shape_simple_fn((c, t), || values.next().unwrap());
            trials.push(Trial { data, label, subject: subject.id.clone() });
        }
    }
    EpochSet::new(trials, manifest.fs, manifest.channel_names, manifest.class_names)
}

fn subject_file_name(id: &str) -> String {
    let clean: String =
        id.chars().map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' || ch == '_' { ch } else { '_' }).collect();
    format!("{clean}.bin")
}

/// Writes `epochs` grouped by subject (first-appearance order). Samples are
/// stored as f32, so only f32-representable values round-trip exactly.
pub fn save_epochset(epochs: &EpochSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    epochs.validate()?;
    for (i, trial) in epochs.trials.iter().enumerate() {
        if trial.data.iter().any(|v| !(*v as f32).is_finite()) {
            return Err(Error::validation(format!("trial {i} has a non-finite sample")));
        }
    }
    let write_err = |path: PathBuf| move |source| Error::Write { path, source };
    fs::create_dir_all(dir).map_err(write_err(dir.to_path_buf()))?;

    let mut entries = Vec::new();
    for part in epochs.split_by_subject() {
        let id = part.trials[0].subject.clone();
        let file = subject_file_name(&id);
        let mut bytes = Vec::with_capacity(part.len() * epochs.n_channels() * epochs.n_samples() * 4);
        for trial in &part.trials {
            for v in trial.data.iter() {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(write_err(path.clone()))?;
        entries.push(SubjectEntry { id, n_trials: part.len(), file, labels: part.labels() });
    }
    let manifest = Manifest {
        fs: epochs.fs,
        n_samples: epochs.n_samples(),
        channel_names: epochs.channel_names.clone(),
        class_names: epochs.class_names.clone(),
        subjects: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(write_err(path.clone()))?;
    Ok(())
}

/// Imports hand-written CSV trials. `dir/trials.csv` has a header
/// `file,label,subject`; each listed file holds one trial with one row per
/// channel.
pub fn import_csv(dir: impl AsRef<Path>, fs: f64, class_names: Vec<String>) -> Result<EpochSet> {
    #[derive(Deserialize)]
    struct Row {
        file: String,
        label: usize,
        subject: String,
    }
    let dir = dir.as_ref();
    let index = dir.join("trials.csv");
    let mut reader = csv::Reader::from_path(&index).map_err(|e| format_err(&index, e.to_string()))?;
    let mut trials = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| format_err(&index, e.to_string()))?;
        let path = dir.join(&row.file);
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(&path)
            .map_err(|e| format_err(&path, e.to_string()))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| format_err(&path, e.to_string()))?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| format_err(&path, format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(vals);
        }
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(format_err(&path, "rows have different lengths"));
        }
        let data =
            Array2::from_shape_vec((rows.len(), t), rows.concat()).map_err(|e| format_err(&path, e.to_string()))?;
        trials.push(Trial { data, label: row.label, subject: row.subject });
    }
    let c = trials.first().map_or(0, |t| t.data.nrows());
    EpochSet::new(trials, fs, default_channel_names(c), class_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_util::toy;

    #[test]
    fn round_trip_small_set() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy(2, 2, 3, 8, "S1");
        save_epochset(&set, dir.path()).unwrap();
        let back = load_epochset(dir.path()).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back.trials[0].data.dim(), (3, 8));
        assert_eq!(back, set);
    }

    #[test]
    fn truncated_payload_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy(2, 2, 3, 8, "S1");
        save_epochset(&set, dir.path()).unwrap();
        let bin = dir.path().join("S1.bin");
        let mut bytes = fs::read(&bin).unwrap();
        bytes.truncate(bytes.len() - 4 * 3 * 4); // one sample short per trial
        fs::write(&bin, bytes).unwrap();
        assert!(matches!(load_epochset(dir.path()), Err(Error::Corruption { .. })));
    }

    #[test]
    fn missing_manifest_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_epochset(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn empty_trial_list_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = r#"{"fs":100,"n_samples":8,"channel_names":["a","b"],"class_names":["x","y"],"subjects":[]}"#;
        fs::write(dir.path().join(MANIFEST_FILE), m).unwrap();
        assert!(matches!(load_epochset(dir.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_label_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let set = toy(1, 2, 2, 2, "S1");
        save_epochset(&set, dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        v["subjects"][0]["labels"][0] = serde_json::json!(5);
        fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(load_epochset(dir.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn nan_is_rejected_on_save() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = toy(1, 2, 2, 4, "S1");
        set.trials[0].data[[0, 0]] = f64::NAN;
        assert!(matches!(save_epochset(&set, dir.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn unwritable_target_is_write_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let set = toy(1, 2, 2, 4, "S1");
        assert!(matches!(save_epochset(&set, blocker.join("sub")), Err(Error::Write { .. })));
    }

    #[test]
    fn csv_import() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("trials.csv"), "file,label,subject\na.csv,0,S1\nb.csv,1,S1\n").unwrap();
        fs::write(dir.path().join("a.csv"), "1,2,3\n4,5,6\n").unwrap();
        fs::write(dir.path().join("b.csv"), "0, 0, 1\n1, 0, 0\n").unwrap();
        let set = import_csv(dir.path(), 250.0, vec!["left".into(), "right".into()]).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.trials[0].data, ndarray::arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]));
        assert_eq!(set.labels(), vec![0, 1]);
    }
}
