//! `key = value` configuration files. Blank lines and lines starting with `#`
//! are ignored; keys use the long flag names, with `_` accepted for `-`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::{usage, CliResult};

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out",
    "jobs",
    "data",
    "synth",
    "band",
    "channels",
    "samples",
    "classes",
    "trials",
    "subjects",
    "contrast",
    "noise",
    "fs",
    "filters",
    "ridge",
    "train-split",
    "export-weights",
    "scenario",
    "approach",
    "backbone",
    "epochs",
    "batch-size",
    "lr",
    "weight-decay",
    "dropout",
    "eval-every",
    "repeats",
    "train-ratio",
    "sweep",
    "balanced-accuracy",
    "rad-trainable",
    "seeds",
    "runs",
];

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Config> {
        let text =
            fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Config, String> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key {key:?}", i + 1));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(format!("line {}: duplicate key {key:?}", i + 1));
            }
        }
        Ok(Config { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The flag value if given, else the parsed config value, else `None`.
    pub fn pick<T: FromStr>(&self, key: &str, flag: Option<T>) -> CliResult<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| usage(format!("config value {key} = {v:?} is not valid"))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> CliResult<T> {
        Ok(self.pick(key, flag)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let c = Config::parse("# run\nbatch_size = 32\n\nlr=0.5\n").unwrap();
        assert_eq!(c.get::<usize>("batch-size", None, 1).unwrap(), 32);
        assert_eq!(c.get("lr", Some(0.1), 1.0).unwrap(), 0.1);
        assert_eq!(c.get("epochs", None, 7usize).unwrap(), 7);
    }

    #[test]
    fn rejects_unknown_and_malformed_lines() {
        assert!(Config::parse("colour = red").unwrap_err().contains("unknown key"));
        assert!(Config::parse("lr").unwrap_err().contains("line 1"));
        assert!(Config::parse("lr=1\nlr=2").unwrap_err().contains("duplicate"));
        let c = Config::parse("epochs = many").unwrap();
        assert!(c.get::<usize>("epochs", None, 1).is_err());
    }
}
