//! Flat key-value experiment configuration.
//!
//! Format: one `key = value` pair per line; blank lines and lines starting
//! with `#` are ignored. Keys are drawn from a fixed documented list;
//! unknown or duplicate keys are rejected so typos fail loudly.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Every key the toolkit understands.
///
/// - `experiment`: `lln | steer | multiscale | laplace` (sweeps)
/// - `model`: `quadratic | multiplicative1d | tracking`
/// - `model.d`, `model.c1`, `model.c2`: builtin parameters
/// - `target.atoms`, `target.weights`: steering target, e.g.
///   `target.atoms = -1; 1` (atoms split by `;`, coordinates by spaces or
///   commas) with `target.weights = 0.3, 0.7`
/// - `eps.list`: comma-separated noise levels, strictly decreasing
/// - `replicas` (default 512), `seed` (default 1), `out` (output path)
/// - `schedule`: `power | loginv` with `schedule.exponent` (default 0.25)
/// - `functional`: `mean_penalty | dbl_penalty | zero | constant` with
///   `functional.c` (center vector), `functional.cap`, `functional.value`
/// - `plan.file`: JSON plan path for multiscale runs
/// - `measure.file`: JSON measure path for rate evaluation
/// - `delta.exponent`: cell-width exponent `a` (default 1/3)
/// - `travel.duration`: steering travel-window length (default eps)
/// - `horizon`, `steps`: plain-simulation grid controls
pub const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "model",
    "model.d",
    "model.c1",
    "model.c2",
    "target.atoms",
    "target.weights",
    "eps.list",
    "replicas",
    "seed",
    "out",
    "schedule",
    "schedule.exponent",
    "functional",
    "functional.c",
    "functional.cap",
    "functional.value",
    "plan.file",
    "measure.file",
    "delta.exponent",
    "travel.duration",
    "horizon",
    "steps",
];

/// Parsed configuration: validated keys, raw string values.
#[derive(Clone, Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Config::default()
    }

    pub fn parse_str(text: &str) -> Result<Config> {
        let mut cfg = Config::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            if cfg.entries.contains_key(key) {
                return Err(Error::invalid(format!(
                    "config line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))?;
        Config::parse_str(&text)
    }

    /// Inserts or overrides a value; the key must be known.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::invalid(format!("unknown config key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::invalid(format!("missing config key '{key}'")))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("config key '{key}': bad number '{s}'")))
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|s| {
                s.parse::<u64>()
                    .map_err(|_| Error::invalid(format!("config key '{key}': bad integer '{s}'")))
            })
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }

    /// Comma-separated floats, e.g. `0.05, 0.02, 0.01`.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|s| {
                s.split(',')
                    .map(|tok| {
                        tok.trim().parse::<f64>().map_err(|_| {
                            Error::invalid(format!("config key '{key}': bad number '{tok}'"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .transpose()
    }

    /// Semicolon-separated vectors with space- or comma-separated
    /// coordinates, e.g. `-1 0; 1 0` or `-1; 1`.
    pub fn get_vectors(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        self.get(key)
            .map(|s| {
                s.split(';')
                    .map(|atom| {
                        let coords: Result<Vec<f64>> = atom
                            .split([',', ' '])
                            .filter(|t| !t.trim().is_empty())
                            .map(|tok| {
                                tok.trim().parse::<f64>().map_err(|_| {
                                    Error::invalid(format!(
                                        "config key '{key}': bad coordinate '{tok}'"
                                    ))
                                })
                            })
                            .collect();
                        let coords = coords?;
                        if coords.is_empty() {
                            return Err(Error::invalid(format!("config key '{key}': empty atom")));
                        }
                        Ok(coords)
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()
            })
            .transpose()
    }
}
