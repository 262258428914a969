use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CALIBRATION_SCHEMA: u32 = 1;

/// Constants fitted once per parameter set and frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    /// Pointwise Wolff bound constant.
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Composition constant.
    #[serde(default)]
    pub m: Option<f64>,
    /// Exponential integrability constant.
    #[serde(default)]
    pub exp_constant: Option<f64>,
    #[serde(default)]
    pub note: String,
}

impl CalibrationEntry {
    pub fn new(n: usize, p: f64) -> Self {
        CalibrationEntry {
            n,
            p,
            q: None,
            beta: None,
            kappa: None,
            m: None,
            exp_constant: None,
            note: String::new(),
        }
    }

    fn key_matches(&self, n: usize, p: f64, q: Option<f64>, beta: Option<f64>) -> bool {
        self.n == n && self.p == p && self.q == q && self.beta == beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub schema_version: u32,
    pub entries: Vec<CalibrationEntry>,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            schema_version: CALIBRATION_SCHEMA,
            entries: Vec::new(),
        }
    }
}

impl Calibration {
    pub fn load(path: &Path) -> Result<Self> {
        let c: Calibration = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if c.schema_version != CALIBRATION_SCHEMA {
            return Err(Error::Config(format!(
                "calibration schema {} (expected {CALIBRATION_SCHEMA})",
                c.schema_version
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn get(&self, n: usize, p: f64, q: Option<f64>, beta: Option<f64>) -> Option<&CalibrationEntry> {
        self.entries.iter().find(|e| e.key_matches(n, p, q, beta))
    }

    /// Replaces the entry with the same key or appends it.
    pub fn upsert(&mut self, entry: CalibrationEntry) {
        match self
            .entries
            .iter_mut()
            .find(|e| e.key_matches(entry.n, entry.p, entry.q, entry.beta))
        {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
    }
}
