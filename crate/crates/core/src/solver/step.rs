//! Implicit Euler time stepping: every step minimizes
//! `J(u) = 1/(2dt) |u - u_prev|_m^2 + sum_e |e| Phi(grad u) - <load, u> + sum_i m_i Gbar(u_i)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::solver::banded::BandedSym;
use crate::solver::field::{SolveReport, SpaceTimeField};
use crate::solver::grid::{Element, Grid};
use crate::solver::newton::{minimize, FactorCache, NewtonParams, NewtonReport, Objective};
use crate::solver::operator::{AbsorptionSpec, OperatorSpec};

/// Source of the per-step nodal load `b_i = <mu_slice, phi_i>`, where
/// `mu_slice` is the time average of the data over step `n` (1-based).
pub trait SliceLoad {
    fn slice_load(&self, grid: &Grid, step: usize, out: &mut [f64]) -> Result<()>;
}

pub struct ZeroLoad;

impl SliceLoad for ZeroLoad {
    fn slice_load(&self, _grid: &Grid, _step: usize, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    }
}

/// The same nodal load on every step.
pub struct StationaryLoad(pub Vec<f64>);

impl SliceLoad for StationaryLoad {
    fn slice_load(&self, _grid: &Grid, _step: usize, out: &mut [f64]) -> Result<()> {
        if out.len() != self.0.len() {
            return Err(Error::ShapeMismatch("load length differs from grid".into()));
        }
        out.copy_from_slice(&self.0);
        Ok(())
    }
}

/// Load given by a closure `(step, out)`.
pub struct FnLoad<F>(pub F);

impl<F> SliceLoad for FnLoad<F>
where
    F: Fn(usize, &mut [f64]) -> Result<()>,
{
    fn slice_load(&self, _grid: &Grid, step: usize, out: &mut [f64]) -> Result<()> {
        (self.0)(step, out)
    }
}

impl<T: SliceLoad + ?Sized> SliceLoad for &T {
    fn slice_load(&self, grid: &Grid, step: usize, out: &mut [f64]) -> Result<()> {
        (**self).slice_load(grid, step, out)
    }
}

/// Discrete geometry the energy is assembled on.
#[derive(Debug, Clone, Copy)]
pub struct Mesh<'a> {
    pub elements: &'a [Element],
    pub masses: &'a [f64],
    pub fixed: &'a [bool],
    pub bandwidth: usize,
}

impl<'a> Mesh<'a> {
    pub fn of(grid: &'a Grid) -> Self {
        Mesh {
            elements: grid.elements(),
            masses: grid.node_weights(),
            fixed: grid.dirichlet_mask(),
            bandwidth: grid.bandwidth(),
        }
    }
}

pub struct StepEnergy<'a> {
    pub mesh: Mesh<'a>,
    pub op: &'a OperatorSpec,
    pub weights: &'a [f64],
    pub absorption: &'a AbsorptionSpec,
    /// `1/dt`, or zero for stationary problems.
    pub inv_dt: f64,
    pub u_prev: &'a [f64],
    pub load: &'a [f64],
}

impl Objective for StepEnergy<'_> {
    fn len(&self) -> usize {
        self.mesh.masses.len()
    }

    fn bandwidth(&self) -> usize {
        self.mesh.bandwidth
    }

    fn fixed(&self) -> &[bool] {
        self.mesh.fixed
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let mut e = 0.0;
        for (k, el) in self.mesh.elements.iter().enumerate() {
            e += el.volume * self.op.density(self.weights[k], el.gradient(u));
        }
        let g_on = !self.absorption.is_none();
        for i in 0..u.len() {
            if self.mesh.fixed[i] {
                continue;
            }
            let m = self.mesh.masses[i];
            if self.inv_dt > 0.0 {
                let d = u[i] - self.u_prev[i];
                e += 0.5 * self.inv_dt * m * d * d;
            }
            if g_on {
                e += m * self.absorption.primitive(u[i]);
            }
            e -= self.load[i] * u[i];
        }
        e
    }

    fn gradient(&self, u: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        for (k, el) in self.mesh.elements.iter().enumerate() {
            let a = self.op.flux(self.weights[k], el.gradient(u));
            for l in 0..el.count {
                g[el.nodes[l]] += el.volume * (a[0] * el.dphi[l][0] + a[1] * el.dphi[l][1]);
            }
        }
        let g_on = !self.absorption.is_none();
        for i in 0..u.len() {
            if self.mesh.fixed[i] {
                g[i] = 0.0;
                continue;
            }
            let m = self.mesh.masses[i];
            if self.inv_dt > 0.0 {
                g[i] += self.inv_dt * m * (u[i] - self.u_prev[i]);
            }
            if g_on {
                g[i] += m * self.absorption.value(u[i]);
            }
            g[i] -= self.load[i];
        }
    }

    fn hessian(&self, u: &[f64], h: &mut BandedSym) {
        for (k, el) in self.mesh.elements.iter().enumerate() {
            let j = self.op.flux_jacobian(self.weights[k], el.gradient(u));
            for a in 0..el.count {
                let ja = [
                    j[0][0] * el.dphi[a][0] + j[1][0] * el.dphi[a][1],
                    j[0][1] * el.dphi[a][0] + j[1][1] * el.dphi[a][1],
                ];
                for b in a..el.count {
                    let v = el.volume * (ja[0] * el.dphi[b][0] + ja[1] * el.dphi[b][1]);
                    let (na, nb) = (el.nodes[a], el.nodes[b]);
                    if na == nb {
                        h.add(na, na, v);
                    } else {
                        h.add(na.min(nb), na.max(nb), v);
                    }
                }
            }
        }
        let g_on = !self.absorption.is_none();
        for i in 0..u.len() {
            let m = self.mesh.masses[i];
            let mut d = self.inv_dt * m;
            if g_on {
                d += m * self.absorption.derivative(u[i]);
            }
            h.add(i, i, d);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub newton: NewtonReport,
    /// `G` was evaluated at the previous level because the implicit energy
    /// was not convex enough for Newton.
    pub semi_implicit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub newton: NewtonParams,
    /// Store every `store_every`-th level (the initial and final levels are
    /// always stored).
    pub store_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            newton: NewtonParams::default(),
            store_every: 1,
        }
    }
}

/// Reusable implicit Euler stepper for one grid and operator.
pub struct Stepper<'a> {
    mesh: Mesh<'a>,
    op: &'a OperatorSpec,
    absorption: &'a AbsorptionSpec,
    weights: Vec<f64>,
    params: NewtonParams,
    cache: FactorCache,
    explicit_cache: FactorCache,
}

impl<'a> Stepper<'a> {
    pub fn new(
        grid: &'a Grid,
        op: &'a OperatorSpec,
        absorption: &'a AbsorptionSpec,
        params: NewtonParams,
    ) -> Result<Self> {
        let weights = op.element_weights(grid)?;
        Ok(Self::with_mesh(Mesh::of(grid), op, absorption, weights, params))
    }

    pub fn with_mesh(
        mesh: Mesh<'a>,
        op: &'a OperatorSpec,
        absorption: &'a AbsorptionSpec,
        weights: Vec<f64>,
        params: NewtonParams,
    ) -> Self {
        Stepper {
            mesh,
            op,
            absorption,
            weights,
            params,
            cache: FactorCache::default(),
            explicit_cache: FactorCache::default(),
        }
    }

    /// One implicit Euler step (`dt > 0`) or a stationary solve (`dt = inf`).
    pub fn step(&mut self, u_prev: &[f64], load: &[f64], dt: f64) -> Result<(Vec<f64>, StepReport)> {
        if !(dt > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        let n = self.mesh.masses.len();
        if u_prev.len() != n || load.len() != n {
            return Err(Error::ShapeMismatch("step data length differs from grid".into()));
        }
        if u_prev.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("previous level is not finite"));
        }
        let inv_dt = if dt.is_finite() { 1.0 / dt } else { 0.0 };
        let mut u: Vec<f64> = u_prev
            .iter()
            .zip(self.mesh.fixed)
            .map(|(v, f)| if *f { 0.0 } else { *v })
            .collect();
        let implicit = StepEnergy {
            mesh: self.mesh,
            op: self.op,
            weights: &self.weights,
            absorption: self.absorption,
            inv_dt,
            u_prev,
            load,
        };
        match minimize(&implicit, &mut u, None, &self.params, &mut self.cache) {
            Ok(newton) => {
                return Ok((
                    u,
                    StepReport {
                        newton,
                        semi_implicit: false,
                    },
                ))
            }
            Err(e) if !self.absorption.is_source() => return Err(e),
            Err(_) => {}
        }
        let shifted: Vec<f64> = (0..n)
            .map(|i| load[i] - self.mesh.masses[i] * self.absorption.value(u_prev[i]))
            .collect();
        let none = AbsorptionSpec::None;
        let explicit = StepEnergy {
            absorption: &none,
            load: &shifted,
            ..implicit
        };
        let mut u: Vec<f64> = u_prev
            .iter()
            .zip(self.mesh.fixed)
            .map(|(v, f)| if *f { 0.0 } else { *v })
            .collect();
        let newton = minimize(&explicit, &mut u, None, &self.params, &mut self.explicit_cache)?;
        Ok((
            u,
            StepReport {
                newton,
                semi_implicit: true,
            },
        ))
    }
}

/// Single implicit Euler step on `grid`.
pub fn implicit_step(
    grid: &Grid,
    u_prev: &[f64],
    dt: f64,
    load: &[f64],
    op: &OperatorSpec,
    absorption: &AbsorptionSpec,
) -> Result<(Vec<f64>, StepReport)> {
    Stepper::new(grid, op, absorption, NewtonParams::default())?.step(u_prev, load, dt)
}

fn fold_report(report: &mut SolveReport, level: usize, step: &StepReport) {
    report.steps += 1;
    report.total_iterations += step.newton.iterations;
    report.max_iterations = report.max_iterations.max(step.newton.iterations);
    report.max_residual = report.max_residual.max(step.newton.residual);
    report.factorizations += step.newton.factorizations;
    if step.semi_implicit {
        report.semi_implicit_steps.push(level);
    }
}

/// Marches implicit Euler over all time levels of `grid`.
pub fn solve_parabolic(
    grid: Arc<Grid>,
    load: &dyn SliceLoad,
    u0: &[f64],
    op: &OperatorSpec,
    absorption: &AbsorptionSpec,
    opts: &SolveOptions,
) -> Result<(SpaceTimeField, SolveReport)> {
    let n = grid.node_count();
    if u0.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "initial datum has {} values, grid has {n} nodes",
            u0.len()
        )));
    }
    let mut stepper = Stepper::new(&grid, op, absorption, opts.newton)?;
    let dt = grid.dt();
    let mut report = SolveReport {
        p: op.p,
        eps_reg: op.eps_reg,
        newton_tol: opts.newton.tol,
        ..Default::default()
    };
    let mut u: Vec<f64> = (0..n)
        .map(|k| if grid.is_dirichlet(k) { 0.0 } else { u0[k] })
        .collect();
    let mut times = vec![0.0];
    let mut slices = vec![u.clone()];
    let mut b = vec![0.0; n];
    let every = opts.store_every.max(1);
    for level in 1..=grid.steps() {
        load.slice_load(&grid, level, &mut b)?;
        let (next, rep) = stepper.step(&u, &b, dt).map_err(|e| Error::TimeStep {
            level,
            source: Box::new(e),
        })?;
        fold_report(&mut report, level, &rep);
        u = next;
        if level % every == 0 || level == grid.steps() {
            times.push(level as f64 * dt);
            slices.push(u.clone());
        }
    }
    Ok((SpaceTimeField::new(grid, times, slices)?, report))
}

/// Minimizes `sum_e |e| Phi(grad u) - <load, u> + sum_i m_i Gbar(u_i)`.
pub fn solve_elliptic(
    grid: &Grid,
    load: &[f64],
    op: &OperatorSpec,
    absorption: &AbsorptionSpec,
    params: &NewtonParams,
) -> Result<(Vec<f64>, SolveReport)> {
    let mut stepper = Stepper::new(grid, op, absorption, *params)?;
    let zero = vec![0.0; grid.node_count()];
    let (u, rep) = stepper.step(&zero, load, f64::INFINITY)?;
    let mut report = SolveReport {
        p: op.p,
        eps_reg: op.eps_reg,
        newton_tol: params.tol,
        ..Default::default()
    };
    fold_report(&mut report, 0, &rep);
    Ok((u, report))
}
