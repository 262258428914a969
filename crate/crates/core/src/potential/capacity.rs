use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::compute_exponents;
use crate::solver::grid::{dist, Grid, Point};
use crate::solver::newton::{minimize, FactorCache, NewtonParams};
use crate::solver::operator::{AbsorptionSpec, OperatorSpec};
use crate::solver::radial::{radial_capacity, RadialGrid};
use crate::solver::step::{Mesh, StepEnergy};

/// Compact set `K` whose capacity is computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CapacitySet {
    Ball { center: Point, radius: f64 },
    /// Nearest grid nodes of the given points.
    Points { points: Vec<Point> },
    /// Every interior node of the domain.
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub value: f64,
    /// Nodes held at one.
    pub nodes: usize,
    pub newton_iterations: usize,
}

fn nearest_node(grid: &Grid, x: &Point) -> usize {
    let lo = grid.lower();
    let [nx, ny] = grid.nodes_per_axis();
    let i = (((x[0] - lo[0]) / grid.h()).round().max(0.0) as usize).min(nx - 1);
    let j = if grid.dim() == 2 {
        (((x[1] - lo[1]) / grid.h()).round().max(0.0) as usize).min(ny - 1)
    } else {
        0
    };
    grid.index(i, j)
}

fn set_nodes(k: &CapacitySet, grid: &Grid) -> Result<Vec<usize>> {
    let nodes: Vec<usize> = match k {
        CapacitySet::Ball { center, radius } => {
            if !(radius >= &0.0) || *radius >= grid.boundary_distance(center) {
                return Err(Error::SupportViolation(format!(
                    "ball of radius {radius} at {center:?} touches the boundary"
                )));
            }
            let mut v: Vec<usize> = (0..grid.node_count())
                .filter(|&i| dist(&grid.node(i), center, grid.dim()) <= radius + 1e-12 * grid.h())
                .collect();
            if v.is_empty() {
                v.push(nearest_node(grid, center));
            }
            v
        }
        CapacitySet::Points { points } => {
            let mut v = Vec::new();
            for x in points {
                if !grid.contains(x) || grid.boundary_distance(x) <= 0.0 {
                    return Err(Error::SupportViolation(format!("point {x:?} not inside the domain")));
                }
                v.push(nearest_node(grid, x));
            }
            v.sort_unstable();
            v.dedup();
            v
        }
        CapacitySet::Interior => (0..grid.node_count()).filter(|&i| !grid.is_dirichlet(i)).collect(),
    };
    if nodes.iter().any(|&i| grid.is_dirichlet(i)) {
        return Err(Error::SupportViolation("compact set reaches the boundary nodes".into()));
    }
    Ok(nodes)
}

/// Discrete `c_p(K) = inf { int |grad phi|^p : phi >= 1 on K, phi = 0 on the
/// boundary }` by projected Newton on the regularized energy.
pub fn elliptic_capacity(k: &CapacitySet, op: &OperatorSpec, grid: &Grid, params: &NewtonParams) -> Result<CapacityResult> {
    let nodes = set_nodes(k, grid)?;
    let n = grid.node_count();
    let mut lower = vec![-1e300; n];
    let mut u = vec![0.0; n];
    for &i in &nodes {
        lower[i] = 1.0;
        u[i] = 1.0;
    }
    let weights = op.element_weights(grid)?;
    let zero = vec![0.0; n];
    let none = AbsorptionSpec::None;
    let obj = StepEnergy {
        mesh: Mesh::of(grid),
        op,
        weights: &weights,
        absorption: &none,
        inv_dt: 0.0,
        u_prev: &zero,
        load: &zero,
    };
    let rep = minimize(&obj, &mut u, Some(&lower), params, &mut FactorCache::default())?;
    let value = grid
        .elements()
        .iter()
        .zip(&weights)
        .map(|(e, w)| {
            let g = e.gradient(&u);
            w * e.volume * (g[0] * g[0] + g[1] * g[1]).powf(0.5 * op.p)
        })
        .sum();
    Ok(CapacityResult {
        value,
        nodes: nodes.len(),
        newton_iterations: rep.iterations,
    })
}

/// Capacity of `B(0, r)` relative to the radial grid's ball; `r = 0` gives
/// the point capacity at the grid resolution.
pub fn radial_ball_capacity(rg: &RadialGrid, r: f64, op: &OperatorSpec, params: &NewtonParams) -> Result<f64> {
    radial_capacity(rg, r, op, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCriterion {
    pub p: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub q: f64,
    /// `p q / (q + 1 - p)`, compared with `N`.
    pub index: f64,
    #[serde(with = "crate::serde_ext::extended_real")]
    pub pe: f64,
    /// Points have zero `C_{p, q/(q+1-p)}` capacity.
    pub points_null: bool,
}

/// Points are null for the Bessel capacity `C_{p, q/(q+1-p)}` iff
/// `p q/(q + 1 - p) <= N`, i.e. `q >= p_e`.
pub fn bessel_point_criterion(p: f64, n: usize, q: f64) -> Result<PointCriterion> {
    if !(q > p - 1.0) {
        return Err(Error::invalid(format!("q = {q} must exceed p - 1 = {}", p - 1.0)));
    }
    if !(p > 1.0) || !(p < n as f64) {
        return Err(Error::invalid(format!("point criterion needs 1 < p < N, got p = {p}, N = {n}")));
    }
    let ex = compute_exponents(p, n)?;
    let index = p * q / (q + 1.0 - p);
    Ok(PointCriterion {
        p,
        n,
        q,
        index,
        pe: ex.pe,
        points_null: index <= n as f64,
    })
}
