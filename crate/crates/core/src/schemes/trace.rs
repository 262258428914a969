use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    BlowUp,
    SolverFailure(String),
    /// `K_n` left every bounded range.
    Diverging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub m: usize,
    pub sup: f64,
    pub l1: f64,
    /// Distance to the previous iterate (sup or `L^1`, per scheme).
    pub diff: f64,
    /// Largest ratio iterate / bound over the checked nodes.
    pub bound_ratio: f64,
    pub bound_ok: bool,
    pub k_n: Option<f64>,
    /// Fitted level-set decay constant and verdict, when checked.
    pub decay_constant: Option<f64>,
    pub decay_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub scheme: String,
    pub rows: Vec<IterationRow>,
    pub k_sequence: Vec<f64>,
    pub monotone: bool,
    /// Whether `passed` takes the monotone flag into account.
    pub monotone_required: bool,
    pub bound_respected: bool,
    pub first_violation: Option<usize>,
    pub converged: bool,
    pub stop: StopReason,
    pub flags: Vec<String>,
}

impl IterationTrace {
    pub fn new(scheme: &str) -> Self {
        IterationTrace {
            scheme: scheme.to_string(),
            rows: Vec::new(),
            k_sequence: Vec::new(),
            monotone: true,
            monotone_required: true,
            bound_respected: true,
            first_violation: None,
            converged: false,
            stop: StopReason::MaxIterations,
            flags: Vec::new(),
        }
    }

    pub fn push(&mut self, row: IterationRow) {
        if !row.bound_ok {
            self.bound_respected = false;
            self.first_violation.get_or_insert(row.m);
        }
        if let Some(k) = row.k_n {
            self.k_sequence.push(k);
        }
        self.rows.push(row);
    }

    /// Ratio of largest to smallest fitted decay constant.
    pub fn decay_spread(&self) -> Option<f64> {
        let cs: Vec<f64> = self.rows.iter().filter_map(|r| r.decay_constant).filter(|c| *c > 0.0).collect();
        if cs.is_empty() {
            return None;
        }
        let hi = cs.iter().cloned().fold(0.0, f64::max);
        let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(hi / lo)
    }

    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    /// Every recorded verdict passes.
    pub fn passed(&self) -> bool {
        (self.monotone || !self.monotone_required) && self.bound_respected && self.converged
    }

    /// `m,sup,l1,diff,bound_ratio,verdict` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "m,sup,l1,diff,bound_ratio,k_n,verdict")?;
        for r in &self.rows {
            writeln!(
                f,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
                r.m,
                r.sup,
                r.l1,
                r.diff,
                r.bound_ratio,
                r.k_n.map_or(String::new(), |k| format!("{k:.12e}")),
                if r.bound_ok { "pass" } else { "fail" }
            )?;
        }
        f.flush()?;
        Ok(())
    }
}
