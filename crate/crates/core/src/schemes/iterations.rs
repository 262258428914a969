use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exponents::{compute_exponents, exp_remainder, subcritical_integral};
use crate::measures::DiscreteMeasure;
use crate::potential::{lift, wolff_potential, PotentialMeasure, WolffConfig};
use crate::schemes::trace::{IterationRow, IterationTrace, StopReason};
use crate::solver::step::FnLoad;
use crate::solver::{solve_parabolic, AbsorptionSpec, Grid, OperatorSpec, SliceLoad, SolveOptions, SpaceTimeField};
use crate::truncation::{levelset_decay, LevelTarget};

#[derive(Debug, Clone, PartialEq)]
pub struct IterationParams {
    pub m_max: usize,
    /// Stop once the `L^1(Q)` step falls below `rel_tol * |u_1|_1`.
    pub rel_tol: f64,
    pub monotone_tol: f64,
    /// Iterates with a larger sup count as blown up.
    pub blowup: f64,
    pub solve: SolveOptions,
    /// Levels for the per-iterate decay check (Picard only).
    pub decay_levels: Option<Vec<f64>>,
}

impl Default for IterationParams {
    fn default() -> Self {
        IterationParams {
            m_max: 50,
            rel_tol: 1e-6,
            monotone_tol: 1e-9,
            blowup: 1e8,
            solve: SolveOptions::default(),
            decay_levels: None,
        }
    }
}

/// Final iterate and the trace leading to it.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub trace: IterationTrace,
    pub field: Option<SpaceTimeField>,
}

/// Pointwise upper bound on the grid nodes (`inf` where unconstrained).
#[derive(Debug, Clone, PartialEq)]
pub struct NodalBound {
    pub values: Vec<f64>,
    pub tol: f64,
}

impl NodalBound {
    /// `factor W[omega](x) + offset` at every node.
    pub fn wolff(grid: &Grid, omega: &PotentialMeasure, cfg: &WolffConfig, factor: f64, offset: f64) -> Result<Self> {
        let values = (0..grid.node_count())
            .into_par_iter()
            .map(|k| wolff_potential(omega, &lift(&grid.node(k)), cfg).map(|w| factor * w + offset))
            .collect::<Result<Vec<f64>>>()?;
        Ok(NodalBound { values, tol: 1e-9 })
    }

    /// Largest ratio `sup_t u / bound` and whether `sup_t u <= bound` everywhere.
    pub fn check(&self, u: &SpaceTimeField) -> Result<(f64, bool)> {
        if self.values.len() != u.grid().node_count() {
            return Err(Error::ShapeMismatch("bound and field grids differ".into()));
        }
        let mut ratio: f64 = 0.0;
        let mut ok = true;
        for (k, b) in self.values.iter().enumerate() {
            let top = u.slices().iter().map(|s| s[k]).fold(f64::NEG_INFINITY, f64::max);
            if top > b + self.tol {
                ok = false;
            }
            if *b > 0.0 && b.is_finite() {
                ratio = ratio.max(top / b);
            } else if top > self.tol && *b <= 0.0 {
                ratio = f64::INFINITY;
            }
        }
        Ok((ratio, ok))
    }
}

fn nondecreasing(prev: &SpaceTimeField, next: &SpaceTimeField, tol: f64) -> bool {
    prev.slices()
        .iter()
        .zip(next.slices())
        .all(|(a, b)| a.iter().zip(b).all(|(x, y)| *y >= x - tol))
}

fn check_initial(grid: &Grid, u0: &[f64]) -> Result<()> {
    if u0.len() != grid.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "initial datum has {} values, grid has {} nodes",
            u0.len(),
            grid.node_count()
        )));
    }
    Ok(())
}

/// `u_1` solves with `mu`, `u_{m+1}` with `source(u_m) + mu`.
fn source_iteration(
    scheme: &str,
    mu: &DiscreteMeasure,
    u0: &[f64],
    source: &(dyn Fn(f64) -> f64 + Sync),
    op: &OperatorSpec,
    params: &IterationParams,
    bound: Option<&NodalBound>,
) -> Result<IterationOutcome> {
    let grid = mu.grid_arc().clone();
    check_initial(&grid, u0)?;
    let opts = SolveOptions {
        store_every: 1,
        ..params.solve
    };
    let masses = grid.node_weights().to_vec();
    let mut trace = IterationTrace::new(scheme);
    let mut prev: Option<SpaceTimeField> = None;
    let mut first_l1 = 0.0;
    for m in 1..=params.m_max.max(1) {
        let load = FnLoad(|step: usize, out: &mut [f64]| {
            mu.slice_load(&grid, step, out)?;
            if let Some(p) = &prev {
                for (k, v) in p.slice(step).iter().enumerate() {
                    if !grid.is_dirichlet(k) {
                        out[k] += masses[k] * source(v.max(0.0));
                    }
                }
            }
            Ok(())
        });
        let u = match solve_parabolic(grid.clone(), &load, u0, op, &AbsorptionSpec::None, &opts) {
            Ok((u, _)) => u,
            Err(e) => {
                trace.stop = StopReason::SolverFailure(e.to_string());
                break;
            }
        };
        let sup = u.max_abs();
        let l1 = u.lq_norm(1.0);
        let diff = match &prev {
            Some(p) => u.sub(p)?.lq_norm(1.0),
            None => l1,
        };
        if let Some(p) = &prev {
            if !nondecreasing(p, &u, params.monotone_tol) {
                trace.monotone = false;
            }
        } else {
            first_l1 = l1;
        }
        let (bound_ratio, bound_ok) = match bound {
            Some(b) => b.check(&u)?,
            None => (0.0, true),
        };
        trace.push(IterationRow {
            m,
            sup,
            l1,
            diff,
            bound_ratio,
            bound_ok,
            k_n: None,
            decay_constant: None,
            decay_ok: None,
        });
        if !sup.is_finite() || sup > params.blowup {
            trace.stop = StopReason::BlowUp;
            prev = Some(u);
            break;
        }
        let done = m > 1 && diff <= params.rel_tol * first_l1;
        prev = Some(u);
        if done {
            trace.converged = true;
            trace.stop = StopReason::Converged;
            break;
        }
    }
    if !trace.bound_respected {
        trace.flags.push(format!(
            "pointwise bound violated first at m = {}",
            trace.first_violation.unwrap_or(0)
        ));
    }
    if trace.stop == StopReason::BlowUp {
        trace.flags.push("iterates blew up".into());
    }
    Ok(IterationOutcome { trace, field: prev })
}

/// Monotone iteration for `u_t - div A(x, grad u) = u^q + mu`.
pub fn monotone_source_iteration(
    mu: &DiscreteMeasure,
    u0: &[f64],
    q: f64,
    op: &OperatorSpec,
    params: &IterationParams,
    bound: Option<&NodalBound>,
) -> Result<IterationOutcome> {
    if !(q > 0.0) {
        return Err(Error::invalid(format!("source exponent must be positive, got {q}")));
    }
    if !mu.is_nonnegative() || u0.iter().any(|v| *v < 0.0) {
        return Err(Error::NegativeData("monotone iteration needs nonnegative data".into()));
    }
    source_iteration("source", mu, u0, &|s| s.powf(q), op, params, bound)
}

/// Monotone iteration with source `E(tau u^beta) + mu`.
#[allow(clippy::too_many_arguments)]
pub fn exponential_iteration(
    mu: &DiscreteMeasure,
    u0: &[f64],
    tau: f64,
    beta: f64,
    l: u32,
    op: &OperatorSpec,
    params: &IterationParams,
    bound: Option<&NodalBound>,
) -> Result<IterationOutcome> {
    if !(tau > 0.0) || !(beta >= 1.0) {
        return Err(Error::invalid("exponential source needs tau > 0 and beta >= 1"));
    }
    if !(l as f64 * beta > op.p - 1.0) {
        return Err(Error::Precondition(format!(
            "l beta = {} must exceed p - 1 = {}",
            l as f64 * beta,
            op.p - 1.0
        )));
    }
    if !mu.is_nonnegative() || u0.iter().any(|v| *v < 0.0) {
        return Err(Error::NegativeData("monotone iteration needs nonnegative data".into()));
    }
    source_iteration(
        "exponential",
        mu,
        u0,
        &|s| exp_remainder(tau * s.powf(beta), l),
        op,
        params,
        bound,
    )
}

/// Picard iteration `u_{n+1}` solving with `mu - lambda G(u_n)` for a
/// subcritical source-type `G`.
pub fn picard_subcritical(
    mu: &DiscreteMeasure,
    u0: &[f64],
    lambda: f64,
    g: &AbsorptionSpec,
    op: &OperatorSpec,
    params: &IterationParams,
) -> Result<IterationOutcome> {
    let grid = mu.grid_arc().clone();
    check_initial(&grid, u0)?;
    if !g.is_source() {
        return Err(Error::Precondition("Picard scheme expects a source-type G".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be nonnegative"));
    }
    let exps = compute_exponents(op.p, grid.dim())?;
    if !subcritical_integral(&g.envelope(), exps.pc)?.is_finite() {
        return Err(Error::Precondition(format!(
            "G is not subcritical: its tail integral diverges at pc = {}",
            exps.pc
        )));
    }
    let opts = SolveOptions {
        store_every: 1,
        ..params.solve
    };
    let masses = grid.node_weights().to_vec();
    let u0_l1 = crate::solver::field::l1_norm(&grid, u0);
    let data = u0_l1 + mu.total_variation()?;
    let power = (op.p + grid.dim() as f64) / grid.dim() as f64;
    let mut trace = IterationTrace::new("picard");
    trace.monotone_required = false;
    let mut prev: Option<SpaceTimeField> = None;
    let mut first_l1 = 0.0;
    let m_max = if lambda == 0.0 { 1 } else { params.m_max.max(1) };
    for m in 1..=m_max {
        let load = FnLoad(|step: usize, out: &mut [f64]| {
            mu.slice_load(&grid, step, out)?;
            if let Some(p) = &prev {
                for (k, v) in p.slice(step).iter().enumerate() {
                    if !grid.is_dirichlet(k) {
                        out[k] -= lambda * masses[k] * g.value(*v);
                    }
                }
            }
            Ok(())
        });
        let u = match solve_parabolic(grid.clone(), &load, u0, op, &AbsorptionSpec::None, &opts) {
            Ok((u, _)) => u,
            Err(e) => {
                trace.stop = StopReason::SolverFailure(e.to_string());
                break;
            }
        };
        let sup = u.max_abs();
        let l1 = u.lq_norm(1.0);
        let diff = match &prev {
            Some(p) => {
                if !nondecreasing(p, &u, params.monotone_tol) {
                    trace.monotone = false;
                }
                u.sub(p)?.lq_norm(1.0)
            }
            None => {
                first_l1 = l1;
                l1
            }
        };
        let g_l1 = u.map(|v| g.value(v).abs()).lq_norm(1.0);
        let k_n = (data + lambda * g_l1).powf(power);
        let (decay_constant, decay_ok) = match &params.decay_levels {
            Some(ks) if sup > 0.0 => {
                let rep = levelset_decay(&u, ks, &exps, LevelTarget::Value, None)?;
                (Some(rep.fitted_constant), Some(rep.verdict))
            }
            _ => (None, None),
        };
        trace.push(IterationRow {
            m,
            sup,
            l1,
            diff,
            bound_ratio: 0.0,
            bound_ok: true,
            k_n: Some(k_n),
            decay_constant,
            decay_ok,
        });
        let k_first = trace.k_sequence[0];
        if !k_n.is_finite() || k_n > 1e6 * k_first.max(1.0) || !sup.is_finite() || sup > params.blowup {
            trace.stop = StopReason::Diverging;
            trace.flags.push(format!("K_n diverging at n = {m}"));
            prev = Some(u);
            break;
        }
        let done = m > 1 && diff <= params.rel_tol * first_l1;
        prev = Some(u);
        if done || lambda == 0.0 {
            trace.converged = true;
            trace.stop = StopReason::Converged;
            break;
        }
    }
    Ok(IterationOutcome { trace, field: prev })
}
