use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::compute_exponents;
use crate::measures::types::{Ambient, Atom, DiscreteMeasure, ElementSeries, NodalSeries, TimeProfile};
use crate::solver::grid::{dist, Grid, Point};

/// `omega (x) F` on the space-time cylinder of the same grid.
pub fn tensor_product(omega: &DiscreteMeasure, profile: &TimeProfile) -> Result<DiscreteMeasure> {
    if omega.ambient != Ambient::Space {
        return Err(Error::invalid("tensor product needs a measure on Omega"));
    }
    let grid = omega.grid_arc().clone();
    profile.validate(grid.t_final())?;
    let mut out = DiscreteMeasure::zero(grid.clone(), Ambient::SpaceTime);
    for a in &omega.atoms {
        out.atoms.push(Atom {
            profile: Some(profile.clone()),
            ..a.clone()
        });
    }
    let instant = matches!(profile, TimeProfile::Instant { .. });
    if let Some(f) = &omega.density {
        if instant {
            // density concentrated at one time: lumped into nodal atoms
            let m = grid.node_weights();
            for (k, v) in f.levels[0].iter().enumerate() {
                if *v != 0.0 {
                    out.atoms.push(Atom {
                        x: grid.node(k),
                        weight: v * m[k],
                        profile: Some(profile.clone()),
                        singular: false,
                    });
                }
            }
        } else {
            let fs = profile_samples(profile, &grid)?;
            out.density = Some(NodalSeries {
                levels: fs
                    .iter()
                    .map(|c| f.levels[0].iter().map(|v| c * v).collect())
                    .collect(),
            });
        }
    }
    if let Some(g) = &omega.divergence {
        if instant {
            return Err(Error::UnsupportedRegime(
                "divergence part times a point mass in time".into(),
            ));
        }
        let fs = profile_samples(profile, &grid)?;
        out.divergence = Some(ElementSeries {
            levels: fs
                .iter()
                .map(|c| g.levels[0].iter().map(|v| [c * v[0], c * v[1]]).collect())
                .collect(),
        });
    }
    Ok(out)
}

/// Step averages of `F`.
fn profile_samples(profile: &TimeProfile, grid: &Grid) -> Result<Vec<f64>> {
    let dt = grid.dt();
    (1..=grid.steps())
        .map(|s| Ok(profile.integral((s - 1) as f64 * dt, s as f64 * dt)? / dt))
        .collect()
}

/// Atomwise and pointwise minimum of two nonnegative measures. Atoms meet
/// only atoms at the same point with the same time structure.
pub fn inf_measure(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    if !mu.is_nonnegative() || !nu.is_nonnegative() {
        return Err(Error::NegativeData("inf of measures needs nonnegative inputs".into()));
    }
    if mu.ambient != nu.ambient || mu.grid().node_count() != nu.grid().node_count() {
        return Err(Error::ShapeMismatch("measures live on different grids".into()));
    }
    let mut out = DiscreteMeasure::zero(mu.grid_arc().clone(), mu.ambient);
    for a in &mu.atoms {
        let shared = nu
            .atoms
            .iter()
            .filter(|b| dist(&a.x, &b.x, 2) <= 1e-12 && a.profile == b.profile)
            .map(|b| b.weight)
            .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |s| s + w)));
        if let Some(w) = shared {
            let m = a.weight.min(w);
            if m > 0.0 {
                out.atoms.push(Atom {
                    weight: m,
                    singular: a.singular && nu.atoms.iter().any(|b| b.singular),
                    ..a.clone()
                });
            }
        }
    }
    if let (Some(f), Some(g)) = (&mu.density, &nu.density) {
        let lv = f.levels.len().max(g.levels.len());
        out.density = Some(NodalSeries {
            levels: (0..lv)
                .map(|n| {
                    f.level(n)
                        .iter()
                        .zip(g.level(n))
                        .map(|(a, b)| a.min(*b))
                        .collect()
                })
                .collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomVerdict {
    pub x: Point,
    pub weight: f64,
    /// Points carry positive `p`-capacity (`p > N`).
    pub elliptic_diffuse: bool,
    /// Diffuse status of `delta_x (x) F` in the cylinder.
    pub parabolic_diffuse: bool,
    /// Does not charge the null sets of the Bessel capacity attached to `q`.
    pub admissible: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub p: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub q: Option<f64>,
    #[serde(with = "crate::serde_ext::extended_real")]
    pub pe: f64,
    /// `p q / (q + 1 - p)` when `q` is given.
    pub bessel_index: Option<f64>,
    pub density_diffuse: bool,
    pub atoms: Vec<AtomVerdict>,
    pub diffuse: bool,
    pub admissible: Option<bool>,
}

pub fn classify_diffuse(omega: &DiscreteMeasure, p: f64, n: usize, q: Option<f64>) -> Result<Classification> {
    let ex = compute_exponents(p, n)?;
    if let Some(q) = q {
        if q <= p - 1.0 {
            return Err(Error::invalid(format!("q = {q} must exceed p - 1 = {}", p - 1.0)));
        }
    }
    let point_capacity_positive = p > n as f64;
    let bessel_index = q.map(|q| p * q / (q + 1.0 - p));
    let atom_admissible = bessel_index.map(|b| point_capacity_positive || b > n as f64);
    let atoms: Vec<AtomVerdict> = omega
        .atoms
        .iter()
        .filter(|a| a.weight != 0.0)
        .map(|a| AtomVerdict {
            x: a.x,
            weight: a.weight,
            elliptic_diffuse: point_capacity_positive,
            parabolic_diffuse: point_capacity_positive
                && !matches!(a.profile, Some(TimeProfile::Instant { .. })),
            admissible: atom_admissible,
        })
        .collect();
    let diffuse = atoms.iter().all(|a| a.elliptic_diffuse);
    let admissible = q.map(|_| atoms.iter().all(|a| a.admissible == Some(true)));
    Ok(Classification {
        p,
        n,
        q,
        pe: ex.pe,
        bessel_index,
        density_diffuse: true,
        atoms,
        diffuse,
        admissible,
    })
}

/// Normalized cone-kernel weights `max(0, 1 - |x_k - x|/s)` over free nodes;
/// falls back to hat interpolation when no free node is closer than `s`.
pub fn mollifier_weights(grid: &Grid, x: &Point, s: f64) -> Result<Vec<(usize, f64)>> {
    if !(s > 0.0) {
        return Err(Error::invalid("mollifier scale must be positive"));
    }
    let bd = grid.boundary_distance(x);
    if s > bd + 1e-12 {
        return Err(Error::SupportViolation(format!(
            "scale {s} exceeds boundary distance {bd} of {x:?}"
        )));
    }
    let h = grid.h();
    let [nx, ny] = grid.nodes_per_axis();
    let lo = grid.lower();
    let range = |c: f64, l: f64, n: usize| {
        let a = ((c - s - l) / h).floor().max(0.0) as usize;
        let b = (((c + s - l) / h).ceil().max(0.0) as usize).min(n - 1);
        (a, b)
    };
    let (i0, i1) = range(x[0], lo[0], nx);
    let (j0, j1) = if grid.dim() == 2 { range(x[1], lo[1], ny) } else { (0, 0) };
    let mut out = Vec::new();
    let mut total = 0.0;
    for j in j0..=j1 {
        for i in i0..=i1 {
            let k = grid.index(i, j);
            if grid.is_dirichlet(k) {
                continue;
            }
            let w = 1.0 - dist(&grid.node(k), x, grid.dim()) / s;
            if w > 0.0 {
                total += w;
                out.push((k, w));
            }
        }
    }
    if out.len() < 2 || total == 0.0 {
        return Ok(grid.hat_weights(x));
    }
    out.iter_mut().for_each(|(_, w)| *w /= total);
    Ok(out)
}

/// Mass-preserving smoothing of nodal densities with the cone kernel.
pub fn mollify_nodal(grid: &Grid, f: &[f64], s: f64) -> Result<Vec<f64>> {
    let m = grid.node_weights();
    let mut out = vec![0.0; f.len()];
    for (k, v) in f.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let x = grid.node(k);
        let scale = s.min(grid.boundary_distance(&x));
        let ws = if scale < grid.h() || grid.is_dirichlet(k) {
            vec![(k, 1.0)]
        } else {
            mollifier_weights(grid, &x, scale)?
        };
        for (j, w) in ws {
            out[j] += v * m[k] * w;
        }
    }
    for (j, v) in out.iter_mut().enumerate() {
        *v /= m[j];
    }
    Ok(out)
}

/// Smooths every atom at scale `s` into nodal atoms carrying the same time
/// structure, and every density with the same kernel.
pub fn mollify(mu: &DiscreteMeasure, s: f64) -> Result<DiscreteMeasure> {
    let grid = mu.grid_arc().clone();
    let mut out = DiscreteMeasure::zero(grid.clone(), mu.ambient);
    out.divergence = mu.divergence.clone();
    out.time_derivative = mu.time_derivative.clone();
    for a in &mu.atoms {
        for (k, w) in mollifier_weights(&grid, &a.x, s)? {
            out.atoms.push(Atom {
                x: grid.node(k),
                weight: a.weight * w,
                profile: a.profile.clone(),
                singular: false,
            });
        }
    }
    if let Some(f) = &mu.density {
        out.density = Some(NodalSeries {
            levels: f
                .levels
                .iter()
                .map(|l| mollify_nodal(&grid, l, s))
                .collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// One mollified copy of `mu` per scale; scales must be positive and
/// decreasing.
pub fn mollify_sequence(mu: &DiscreteMeasure, scales: &[f64]) -> Result<Vec<DiscreteMeasure>> {
    if scales.iter().any(|s| !(*s > 0.0)) || scales.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("scales must be positive and decreasing"));
    }
    scales.iter().map(|&s| mollify(mu, s)).collect()
}

/// Density part at `level` plus every atom spread by hat weights and divided
/// by the lumped masses (time profiles are ignored).
pub fn nodal_density(mu: &DiscreteMeasure, level: usize) -> Vec<f64> {
    let grid = mu.grid();
    let m = grid.node_weights();
    let mut out = mu
        .density
        .as_ref()
        .map_or(vec![0.0; grid.node_count()], |f| f.level(level).to_vec());
    for a in &mu.atoms {
        for (k, w) in grid.hat_weights(&a.x) {
            out[k] += a.weight * w / m[k];
        }
    }
    out
}
