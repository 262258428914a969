use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{classify_diffuse, Ambient, Classification, DiscreteMeasure};
use crate::solver::field::l1_norm;
use crate::solver::radial::{solve_radial_elliptic, RadialGrid};
use crate::solver::{solve_elliptic, solve_parabolic, AbsorptionSpec, NewtonParams, OperatorSpec, SolveOptions, SpaceTimeField};

/// Relative slack allowed in the absorption budget.
pub const BUDGET_SLACK: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct AbsorptionRun {
    pub field: SpaceTimeField,
    /// `|G(u)|_1` over `Q` (or `Omega` for stationary data).
    pub g_l1: f64,
    /// `|mu| + |u_0|_1`.
    pub budget: f64,
    pub budget_ok: bool,
    pub classification: Option<Classification>,
    pub flags: Vec<String>,
}

fn power_exponent(g: &AbsorptionSpec) -> Option<f64> {
    match g {
        AbsorptionSpec::Power { q, .. } => Some(*q),
        _ => None,
    }
}

/// Solves with the absorption `G` treated implicitly and checks the `L^1`
/// budget. Measures on `Omega` give a stationary solve.
pub fn absorption_solve(
    mu: &DiscreteMeasure,
    u0: &[f64],
    g: &AbsorptionSpec,
    op: &OperatorSpec,
    opts: &SolveOptions,
) -> Result<AbsorptionRun> {
    if g.is_source() {
        return Err(Error::Precondition("absorption solve needs G(r) r >= 0".into()));
    }
    let grid = mu.grid_arc().clone();
    let mut flags = Vec::new();
    let classification = match power_exponent(g) {
        Some(q) if !mu.atoms.is_empty() && q > op.p - 1.0 => {
            let c = classify_diffuse(mu, op.p, grid.dim(), Some(q))?;
            if c.admissible == Some(false) {
                flags.push("atoms charge capacity-null sets: no solution expected in the limit".into());
            }
            Some(c)
        }
        _ => None,
    };
    let (field, g_l1, budget) = match mu.ambient {
        Ambient::Space => {
            let load = mu.elliptic_load()?;
            let (u, _) = solve_elliptic(&grid, &load, op, g, &opts.newton)?;
            let gu: Vec<f64> = u.iter().map(|v| g.value(*v).abs()).collect();
            let g_l1 = l1_norm(&grid, &gu);
            (SpaceTimeField::stationary(grid.clone(), u)?, g_l1, mu.total_variation()?)
        }
        Ambient::SpaceTime => {
            let (u, _) = solve_parabolic(grid.clone(), mu, u0, op, g, opts)?;
            let g_l1 = u.map(|v| g.value(v).abs()).lq_norm(1.0);
            (u, g_l1, mu.total_variation()? + l1_norm(&grid, u0))
        }
    };
    let budget_ok = g_l1 <= budget * (1.0 + BUDGET_SLACK) + 1e-12;
    if !budget_ok {
        flags.push(format!("absorption budget exceeded: {g_l1:.6e} > {budget:.6e}"));
    }
    Ok(AbsorptionRun {
        field,
        g_l1,
        budget,
        budget_ok,
        classification,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cells: usize,
    pub h: f64,
    pub u_center: f64,
    pub u_probe: f64,
    pub g_mass: f64,
    pub budget_ok: bool,
    /// Nodewise below the solution without absorption.
    pub below_green: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    #[serde(rename = "N")]
    pub n_dim: usize,
    pub mass: f64,
    pub probe: f64,
    pub rows: Vec<SweepRow>,
    /// Relative change of `u(probe)` between the last two levels.
    pub last_change: f64,
    pub converging: bool,
}

/// Radial Dirac problem `-div A(grad u) + G(u) = mass delta_0` in
/// `B(0, radius)` solved on a ladder of grids.
pub fn absorption_refinement_sweep(
    n_dim: usize,
    radius: f64,
    mass: f64,
    g: &AbsorptionSpec,
    op: &OperatorSpec,
    cells: &[usize],
    probe: f64,
) -> Result<SweepReport> {
    if g.is_source() {
        return Err(Error::Precondition("absorption sweep needs G(r) r >= 0".into()));
    }
    if cells.len() < 2 || !(probe > 0.0 && probe < radius) {
        return Err(Error::invalid("sweep needs two levels and a probe inside the ball"));
    }
    let params = NewtonParams {
        max_iter: 500,
        ..NewtonParams::default()
    };
    let mut rows = Vec::new();
    for &c in cells {
        let rg = RadialGrid::new(n_dim, radius, c)?;
        let load = rg.dirac_load(mass);
        let (u, _) = solve_radial_elliptic(&rg, &load, op, g, &params)?;
        let (green, _) = solve_radial_elliptic(&rg, &load, op, &AbsorptionSpec::None, &params)?;
        let g_mass: f64 = u.iter().zip(rg.masses()).map(|(v, m)| m * g.value(*v).abs()).sum();
        let i = ((probe / rg.h()).floor() as usize).min(rg.cells() - 1);
        let th = probe / rg.h() - i as f64;
        rows.push(SweepRow {
            cells: c,
            h: rg.h(),
            u_center: u[0],
            u_probe: (1.0 - th) * u[i] + th * u[i + 1],
            g_mass,
            budget_ok: g_mass <= mass * (1.0 + BUDGET_SLACK),
            below_green: u.iter().zip(&green).all(|(a, b)| *a <= b + 1e-9 * b.abs().max(1.0)),
        });
    }
    let (a, b) = (rows[rows.len() - 2].u_probe, rows[rows.len() - 1].u_probe);
    let last_change = (b - a).abs() / a.abs().max(f64::MIN_POSITIVE);
    Ok(SweepReport {
        n_dim,
        mass,
        probe,
        rows,
        last_change,
        converging: last_change < 0.05,
    })
}
