//! Radially symmetric problems on the ball `B(0, R)` of `R^N` for any `N`,
//! discretized by P1 elements in `r` with exact shell volumes.

use crate::error::{Error, Result};
use crate::solver::grid::Element;
use crate::solver::newton::{minimize, FactorCache, NewtonParams, NewtonReport};
use crate::solver::operator::{AbsorptionSpec, OperatorForm, OperatorSpec};
use crate::solver::step::{Mesh, StepEnergy, Stepper};

/// Surface area of the unit sphere in `R^N`.
pub fn sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI * sphere_area(n - 2) / (n - 2) as f64,
    }
}

pub fn ball_volume(n: usize, r: f64) -> f64 {
    sphere_area(n) * r.powi(n as i32) / n as f64
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    n_dim: usize,
    radius: f64,
    cells: usize,
    elements: Vec<Element>,
    masses: Vec<f64>,
    fixed: Vec<bool>,
}

impl RadialGrid {
    pub fn new(n_dim: usize, radius: f64, cells: usize) -> Result<Self> {
        if n_dim == 0 || !(radius > 0.0) || cells < 2 {
            return Err(Error::invalid("radial grid needs N >= 1, R > 0 and two cells"));
        }
        let h = radius / cells as f64;
        let shell = |a: f64, b: f64| ball_volume(n_dim, b) - ball_volume(n_dim, a);
        let mut elements = Vec::with_capacity(cells);
        let mut masses = vec![0.0; cells + 1];
        for i in 0..cells {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let v = shell(a, b);
            elements.push(Element {
                nodes: [i, i + 1, 0],
                count: 2,
                dphi: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]],
                volume: v,
                centroid: [0.5 * (a + b), 0.0],
            });
            masses[i] += 0.5 * v;
            masses[i + 1] += 0.5 * v;
        }
        let mut fixed = vec![false; cells + 1];
        fixed[cells] = true;
        Ok(RadialGrid {
            n_dim,
            radius,
            cells,
            elements,
            masses,
            fixed,
        })
    }

    pub fn dim(&self) -> usize {
        self.n_dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        self.radius / self.cells as f64
    }

    pub fn node_count(&self) -> usize {
        self.cells + 1
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn mesh(&self) -> Mesh<'_> {
        Mesh {
            elements: &self.elements,
            masses: &self.masses,
            fixed: &self.fixed,
            bandwidth: 1,
        }
    }

    /// Load of a point mass at the origin.
    pub fn dirac_load(&self, mass: f64) -> Vec<f64> {
        let mut b = vec![0.0; self.node_count()];
        b[0] = mass;
        b
    }

    /// Lumped load of a radial density.
    pub fn density_load(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.node_count())
            .map(|i| if self.fixed[i] { 0.0 } else { self.masses[i] * f(self.r(i)) })
            .collect()
    }

    /// Mass of the ball `B(0, t)` for nodal masses `load` (radial hat
    /// functions split between neighbouring nodes by shell volume).
    pub fn ball_mass(&self, load: &[f64], t: f64) -> f64 {
        load.iter()
            .enumerate()
            .filter(|(i, _)| self.r(*i) <= t)
            .map(|(_, v)| v)
            .sum()
    }
}

fn check_operator(op: &OperatorSpec) -> Result<()> {
    op.validate()?;
    if !matches!(op.form, OperatorForm::PLaplacian) {
        return Err(Error::UnsupportedRegime(
            "radial solver supports only the plain p-Laplacian".into(),
        ));
    }
    Ok(())
}

/// Stationary radial solve of `-Delta_p u + G(u) = load`, `u(R) = 0`.
pub fn solve_radial_elliptic(
    rg: &RadialGrid,
    load: &[f64],
    op: &OperatorSpec,
    absorption: &AbsorptionSpec,
    params: &NewtonParams,
) -> Result<(Vec<f64>, NewtonReport)> {
    check_operator(op)?;
    if load.len() != rg.node_count() {
        return Err(Error::ShapeMismatch("load length differs from radial grid".into()));
    }
    let mut stepper = Stepper::with_mesh(rg.mesh(), op, absorption, vec![1.0; rg.cells], *params);
    let zero = vec![0.0; rg.node_count()];
    let (u, rep) = stepper.step(&zero, load, f64::INFINITY)?;
    Ok((u, rep.newton))
}

/// Condenser capacity of `B(0, r)` in `B(0, R)`: minimal
/// `int |grad u|^p` over `u >= 1` on `B(0, r)`, `u(R) = 0`. With `r = 0`
/// only the centre node is constrained (point capacity at resolution `h`).
pub fn radial_capacity(rg: &RadialGrid, r: f64, op: &OperatorSpec, params: &NewtonParams) -> Result<f64> {
    check_operator(op)?;
    if r >= rg.radius() - rg.h() {
        return Err(Error::invalid("inner ball touches the outer boundary"));
    }
    let n = rg.node_count();
    let lower: Vec<f64> = (0..n)
        .map(|i| if rg.r(i) <= r + 1e-12 * rg.h() { 1.0 } else { -1e300 })
        .collect();
    let mut u: Vec<f64> = (0..n)
        .map(|i| if i == rg.cells { 0.0 } else { (1.0 - (rg.r(i) - r).max(0.0) / (rg.radius() - r)).max(0.0) })
        .collect();
    let zero = vec![0.0; n];
    let none = AbsorptionSpec::None;
    let obj = StepEnergy {
        mesh: rg.mesh(),
        op,
        weights: &vec![1.0; rg.cells],
        absorption: &none,
        inv_dt: 0.0,
        u_prev: &zero,
        load: &zero,
    };
    minimize(&obj, &mut u, Some(&lower), params, &mut FactorCache::default())?;
    Ok(p_energy(rg.elements(), &u, op.p))
}

/// `int |grad u|^p` over the given elements.
pub fn p_energy(elements: &[Element], u: &[f64], p: f64) -> f64 {
    elements
        .iter()
        .map(|e| {
            let g = e.gradient(u);
            e.volume * (g[0] * g[0] + g[1] * g[1]).powf(0.5 * p)
        })
        .sum()
}

/// Closed-form `p`-capacity of the condenser `(B_r, B_R)` in `R^N`.
pub fn condenser_capacity(n_dim: usize, p: f64, r: f64, big_r: f64) -> f64 {
    let w = sphere_area(n_dim);
    let nf = n_dim as f64;
    if (p - nf).abs() < 1e-14 {
        return w * (big_r / r).ln().powf(1.0 - p);
    }
    let e = (p - nf) / (p - 1.0);
    w * ((big_r.powf(e) - r.powf(e)) / e).abs().powf(1.0 - p)
}
