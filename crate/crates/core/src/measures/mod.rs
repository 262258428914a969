//! Bounded measures on `Omega` or `Q` realized on a grid: atoms, densities,
//! divergence and time-derivative parts.

pub mod decompose;
pub mod ops;
pub mod types;

use std::cell::RefCell;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use decompose::{
    approximation_schedule, decompose, reassembly_residual, same_action, Decomposition, Schedule,
    ScheduleEntry,
};
pub use ops::{
    classify_diffuse, inf_measure, mollifier_weights, mollify, mollify_nodal, mollify_sequence,
    nodal_density, tensor_product, AtomVerdict, Classification,
};
pub use types::{nodal_lq, vector_lq, Ambient, Atom, DiscreteMeasure, ElementSeries, NodalSeries, TimeProfile};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::solver::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub x: Vec<f64>,
    /// Time of a point mass in time; otherwise the atom carries `profile`.
    #[serde(default)]
    pub t: Option<f64>,
    pub w: f64,
    #[serde(default)]
    pub singular: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensitySource {
    Expr(String),
    /// Whitespace or comma separated nodal values.
    File { file: PathBuf },
}

/// Measure description file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub density: Option<DensitySource>,
    /// Expressions for the components of `g` in `-div g`.
    #[serde(default)]
    pub divergence: Option<Vec<String>>,
    /// Expression for `h` in `h_t`.
    #[serde(default)]
    pub time_derivative: Option<String>,
    /// Time profile of atoms without `t` and of the density.
    #[serde(default)]
    pub profile: Option<String>,
    /// Horizon; present for measures on `Q`.
    #[serde(rename = "T", default)]
    pub t_final: Option<f64>,
}

impl MeasureSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn ambient(&self) -> Ambient {
        if self.t_final.is_some() {
            Ambient::SpaceTime
        } else {
            Ambient::Space
        }
    }

    /// Realizes the description on `grid`; relative density files resolve
    /// against `base`.
    pub fn build(&self, grid: Arc<Grid>, base: &Path) -> Result<DiscreteMeasure> {
        let ambient = self.ambient();
        if let Some(t) = self.t_final {
            if (t - grid.t_final()).abs() > 1e-12 * t.abs().max(1.0) {
                return Err(Error::Config(format!("measure horizon {t} differs from grid horizon {}", grid.t_final())));
            }
        }
        let profile = match (&self.profile, ambient) {
            (Some(_), Ambient::Space) => {
                return Err(Error::Config("a time profile needs the horizon T".into()))
            }
            (Some(e), Ambient::SpaceTime) => Some(TimeProfile::Expr { expr: e.clone() }),
            (None, Ambient::SpaceTime) => Some(TimeProfile::Constant { value: 1.0 }),
            (None, Ambient::Space) => None,
        };
        let mut mu = DiscreteMeasure::zero(grid.clone(), ambient);
        for a in &self.atoms {
            if a.x.is_empty() || a.x.len() > 2 || a.x.len() != grid.dim() {
                return Err(Error::ShapeMismatch(format!("atom location {:?} in dimension {}", a.x, grid.dim())));
            }
            let x = [a.x[0], a.x.get(1).copied().unwrap_or(0.0)];
            let atom_profile = match (a.t, ambient) {
                (Some(_), Ambient::Space) => {
                    return Err(Error::Config("atom time given for a measure on Omega".into()))
                }
                (Some(t), Ambient::SpaceTime) => Some(TimeProfile::Instant { t }),
                (None, _) => profile.clone(),
            };
            mu.atoms.push(Atom {
                x,
                weight: a.w,
                profile: atom_profile,
                singular: a.singular.unwrap_or(true),
            });
        }
        let profile_expr = self.profile.as_deref().map(Expr::parse).transpose()?;
        let factor = |t: f64| -> Result<f64> {
            match &profile_expr {
                Some(e) => e.eval(&[("t", t)]),
                None => Ok(1.0),
            }
        };
        if let Some(src) = &self.density {
            let nodal: Option<Vec<f64>> = match src {
                DensitySource::Expr(_) => None,
                DensitySource::File { file } => Some(read_nodal(&base.join(file), grid.node_count())?),
            };
            let expr = match src {
                DensitySource::Expr(s) => Some(Expr::parse(s)?),
                DensitySource::File { .. } => None,
            };
            let err = RefCell::new(None);
            mu = mu.with_density(|x, t| {
                let base_value = match (&expr, &nodal) {
                    (Some(e), _) => e.eval_xyt(x[0], x[1], t),
                    (None, Some(v)) => Ok(v[grid_node_index(&grid, x)]),
                    _ => Ok(0.0),
                };
                match base_value.and_then(|v| Ok(v * factor(t)?)) {
                    Ok(v) => v,
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                }
            });
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
        }
        if let Some(gs) = &self.divergence {
            if gs.len() != grid.dim() {
                return Err(Error::ShapeMismatch("divergence part needs one expression per axis".into()));
            }
            let es: Vec<Expr> = gs.iter().map(|s| Expr::parse(s)).collect::<Result<_>>()?;
            let err = RefCell::new(None);
            mu = mu.with_divergence(|x, t| {
                let mut out = [0.0; 2];
                for (c, e) in es.iter().enumerate() {
                    match e.eval_xyt(x[0], x[1], t) {
                        Ok(v) => out[c] = v,
                        Err(e) => {
                            err.borrow_mut().get_or_insert(e);
                        }
                    }
                }
                out
            });
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
        }
        if let Some(h) = &self.time_derivative {
            let e = Expr::parse(h)?;
            let err = RefCell::new(None);
            mu = mu.with_time_derivative(|x, t| match e.eval_xyt(x[0], x[1], t) {
                Ok(v) => v,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            })?;
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
        }
        mu.validate()?;
        Ok(mu)
    }
}

fn grid_node_index(grid: &Grid, x: &[f64; 2]) -> usize {
    let lo = grid.lower();
    let i = ((x[0] - lo[0]) / grid.h()).round() as usize;
    let j = if grid.dim() == 2 { ((x[1] - lo[1]) / grid.h()).round() as usize } else { 0 };
    grid.index(i, j)
}

fn read_nodal(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let values: Vec<f64> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
        .collect::<Result<_>>()?;
    if values.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} holds {} values, grid has {n} nodes",
            path.display(),
            values.len()
        )));
    }
    Ok(values)
}
