//! Experiment configuration files (JSON). Every physical parameter and
//! tolerance appears explicitly; relative paths resolve against the
//! directory of the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::measures::{DiscreteMeasure, MeasureSpec};
use crate::potential::CapacitySet;
use crate::solver::{AbsorptionSpec, Grid, GridSpec, NewtonParams, OperatorSpec, SolveOptions};

pub const CONFIG_SCHEMA: u32 = 1;

/// Parsed config plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub config: T,
    pub base: PathBuf,
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let config = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        let d = NewtonParams::default();
        NewtonSettings {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

impl NewtonSettings {
    pub fn params(&self) -> NewtonParams {
        NewtonParams {
            tol: self.tol,
            max_iter: self.max_iter,
            ..NewtonParams::default()
        }
    }
}

/// Grid, operator, zero-order term, data and initial datum of one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub grid: GridSpec,
    pub operator: OperatorSpec,
    #[serde(default)]
    pub absorption: AbsorptionSpec,
    pub measure: MeasureSpec,
    /// Expression in `x`, `y`; zero when absent.
    #[serde(default)]
    pub u0: Option<String>,
    #[serde(default)]
    pub newton: NewtonSettings,
}

impl ProblemConfig {
    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::from_spec(&self.grid)?))
    }

    pub fn measure(&self, grid: &Arc<Grid>, base: &Path) -> Result<DiscreteMeasure> {
        self.measure.build(grid.clone(), base)
    }

    pub fn initial(&self, grid: &Grid) -> Result<Vec<f64>> {
        initial_datum(grid, self.u0.as_deref())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            newton: self.newton.params(),
            store_every: 1,
        }
    }
}

pub fn initial_datum(grid: &Grid, expr: Option<&str>) -> Result<Vec<f64>> {
    let Some(src) = expr else {
        return Ok(vec![0.0; grid.node_count()]);
    };
    let e = Expr::parse(src)?;
    (0..grid.node_count())
        .map(|k| {
            let x = grid.node(k);
            e.eval_xyt(x[0], x[1], 0.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsConfig {
    pub p: Vec<f64>,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuresConfig {
    pub grid: GridSpec,
    pub measure: MeasureSpec,
    pub p: f64,
    #[serde(default)]
    pub q: Option<f64>,
    pub eps: f64,
    pub n_max: usize,
    pub s_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    #[serde(flatten)]
    pub problem: ProblemConfig,
    /// Write every stored level as a snapshot.
    #[serde(default)]
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBands {
    pub ells: Vec<f64>,
    pub ks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    #[serde(flatten)]
    pub problem: ProblemConfig,
    /// Levels of `meas{|u| > k}`.
    #[serde(default)]
    pub value_levels: Option<Vec<f64>>,
    /// Levels of `meas{|grad u| > k}`.
    #[serde(default)]
    pub gradient_levels: Option<Vec<f64>>,
    #[serde(default)]
    pub energy: Option<EnergyBands>,
    /// Second datum (same grid) that must be dominated by the first.
    #[serde(default)]
    pub comparison: Option<MeasureSpec>,
    #[serde(default)]
    pub comparison_u0: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub x: [f64; 3],
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WolffRunConfig {
    pub p: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    pub atoms: Vec<AtomConfig>,
    pub points: Vec<[f64; 3]>,
    /// Also evaluates the fractional maximal function with this `eta`.
    #[serde(default)]
    pub eta: Option<f64>,
}

fn default_nodes() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapacityConfig {
    /// Condenser `(B_r, B_R)` in `R^N` on a radial grid.
    Radial {
        #[serde(rename = "N")]
        n: usize,
        p: f64,
        r: f64,
        #[serde(rename = "R")]
        big_r: f64,
        cells: usize,
        /// Relative tolerance against the closed form.
        tolerance: f64,
    },
    /// Set on a 1D or 2D grid with zero outer boundary values.
    Grid { grid: GridSpec, p: f64, set: CapacitySet },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Picard,
    Source,
    Exponential,
    Absorption,
}

/// Pointwise bound `factor kappa W[omega] + 2 |u_0|_inf`, with `omega` the
/// spatial atoms of the data and `factor` `2 beta_p` (source) or `c_p`
/// (exponential).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateConfig {
    pub scheme: SchemeKind,
    #[serde(flatten)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub l: Option<u32>,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default)]
    pub bound: Option<BoundConfig>,
}

fn default_m_max() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inflation {
    pub n: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    #[serde(flatten)]
    pub problem: ProblemConfig,
    pub eps: f64,
    pub n_max: usize,
    pub s_ref: f64,
    pub k_list: Vec<f64>,
    #[serde(default)]
    pub decay_levels: Option<Vec<f64>>,
    pub energy_k: f64,
    pub uniformity_ratio: f64,
    pub cauchy_factor: f64,
    /// Negative control: member `n` scaled by `factor`.
    #[serde(default)]
    pub inflate: Option<Inflation>,
}
