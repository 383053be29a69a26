//! Flat `key = value` configuration with command-line overrides.
//!
//! Blank lines and `#` comments are skipped. Keys use underscores; the
//! matching flags use dashes (`n_labeled` ↔ `--n-labeled`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vatlab::Error;

pub const KEYS: &[&str] = &[
    "task",
    "reg",
    "epsilon",
    "xi",
    "ip",
    "lambda",
    "keep",
    "adv_mode",
    "updates",
    "eval_every",
    "hidden",
    "batch",
    "reg_batch",
    "seed",
    "data_seed",
    "labeled",
    "n_labeled",
    "n_validation",
    "mnist_dir",
    "methods",
    "values",
    "selection_reps",
    "final_reps",
    "threads",
    "resolution",
    "lds_epsilon",
];

#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    origin: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, Error> {
        let mut s = Settings::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("{source}:{}: expected key = value", n + 1)))?;
            s.insert(k.trim(), v.trim(), &format!("{source}:{}", n + 1))?;
        }
        Ok(s)
    }

    fn insert(&mut self, key: &str, value: &str, origin: &str) -> Result<(), Error> {
        let key = key.replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(config_err(format!("{origin}: unknown key `{key}`")));
        }
        self.values.insert(key.clone(), value.to_string());
        self.origin.insert(key, origin.to_string());
        Ok(())
    }

    /// Applies flag values over whatever the file set.
    pub fn override_with(&mut self, flags: &[(&str, Option<String>)]) -> Result<(), Error> {
        for (key, value) in flags {
            if let Some(v) = value {
                self.insert(key, v, &format!("--{}", key.replace('_', "-")))?;
            }
        }
        Ok(())
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, Error> {
        self.str(key).ok_or_else(|| config_err(format!("`{key}` is required")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                config_err(format!("{}: cannot parse `{v}` for `{key}`", self.origin[key]))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, Error> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, Error> {
        let Some(v) = self.values.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse()
                    .map_err(|_| config_err(format!("{}: bad list item `{p}` in `{key}`", self.origin[key])))
            })
            .collect::<Result<Vec<T>, Error>>()
            .map(Some)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.str(key).map(PathBuf::from)
    }
}
