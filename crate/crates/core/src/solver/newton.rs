//! Damped Newton with Armijo backtracking for smooth convex energies with a
//! banded Hessian, optionally projected onto lower bounds (obstacle problems).

use crate::error::{Error, Result};
use crate::solver::banded::{BandedCholesky, BandedSym};

pub trait Objective {
    fn len(&self) -> usize;
    fn bandwidth(&self) -> usize;
    /// Degrees of freedom held at their current value.
    fn fixed(&self) -> &[bool];
    fn energy(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64], g: &mut [f64]);
    fn hessian(&self, u: &[f64], h: &mut BandedSym);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonParams {
    /// Tolerance on the scaled (projected) gradient norm.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams {
            tol: 1e-9,
            max_iter: 200,
            armijo: 1e-4,
            min_step: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
    pub energy: f64,
    pub factorizations: usize,
}

/// Reuses the last factorization while the assembled Hessian is unchanged
/// (linear problems).
#[derive(Debug, Default)]
pub struct FactorCache {
    matrix: Option<BandedSym>,
    factor: Option<BandedCholesky>,
}

impl FactorCache {
    fn factor(&mut self, h: &BandedSym, count: &mut usize) -> Result<&BandedCholesky> {
        let hit = self.matrix.as_ref().is_some_and(|m| m == h);
        if !hit {
            let f = h.cholesky()?;
            *count += 1;
            self.matrix = Some(h.clone());
            self.factor = Some(f);
        }
        Ok(self.factor.as_ref().unwrap())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn projected(g: &[f64], u: &[f64], fixed: &[bool], lower: Option<&[f64]>, out: &mut [f64]) {
    for i in 0..g.len() {
        out[i] = if fixed[i] {
            0.0
        } else if let Some(lb) = lower {
            if u[i] <= lb[i] + 1e-14 * (1.0 + lb[i].abs()) {
                g[i].min(0.0)
            } else {
                g[i]
            }
        } else {
            g[i]
        };
    }
}

pub fn minimize<O: Objective>(
    obj: &O,
    u: &mut [f64],
    lower: Option<&[f64]>,
    params: &NewtonParams,
    cache: &mut FactorCache,
) -> Result<NewtonReport> {
    let n = obj.len();
    let fixed = obj.fixed();
    if let Some(lb) = lower {
        for i in 0..n {
            if !fixed[i] && u[i] < lb[i] {
                u[i] = lb[i];
            }
        }
    }
    let mut g = vec![0.0; n];
    let mut pg = vec![0.0; n];

    let zero = vec![0.0; n];
    obj.gradient(&zero, &mut g);
    projected(&g, &zero, fixed, None, &mut pg);
    let data_scale = norm(&pg);
    obj.gradient(u, &mut g);
    projected(&g, u, fixed, lower, &mut pg);
    let scale = data_scale.max(norm(&pg)).max(1e-300);

    let mut h = BandedSym::zeros(n, obj.bandwidth());
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut report = NewtonReport::default();
    let mut energy = obj.energy(u);

    for it in 0..=params.max_iter {
        obj.gradient(u, &mut g);
        projected(&g, u, fixed, lower, &mut pg);
        let res = norm(&pg) / scale;
        report.iterations = it;
        report.residual = res;
        report.energy = energy;
        if res <= params.tol {
            return Ok(report);
        }
        if it == params.max_iter {
            break;
        }

        h.clear();
        obj.hessian(u, &mut h);
        for i in 0..n {
            let active = match lower {
                Some(lb) => u[i] <= lb[i] + 1e-14 * (1.0 + lb[i].abs()) && g[i] > 0.0,
                None => false,
            };
            if fixed[i] || active {
                h.pin(i);
                d[i] = 0.0;
            } else {
                d[i] = -g[i];
            }
        }
        let f = cache.factor(&h, &mut report.factorizations)?;
        f.solve_in_place(&mut d);

        let mut t = 1.0;
        loop {
            for i in 0..n {
                let mut v = u[i] + t * d[i];
                if let Some(lb) = lower {
                    if !fixed[i] && v < lb[i] {
                        v = lb[i];
                    }
                }
                trial[i] = if fixed[i] { u[i] } else { v };
            }
            let e_trial = obj.energy(&trial);
            let slope: f64 = (0..n).map(|i| g[i] * (trial[i] - u[i])).sum();
            if e_trial.is_finite() && e_trial <= energy + params.armijo * slope {
                break;
            }
            // Energy differences at roundoff level: accept if the residual drops.
            if e_trial.is_finite() && (e_trial - energy).abs() <= 1e-13 * energy.abs().max(1.0) {
                let mut gt = vec![0.0; n];
                let mut pgt = vec![0.0; n];
                obj.gradient(&trial, &mut gt);
                projected(&gt, &trial, fixed, lower, &mut pgt);
                if norm(&pgt) / scale < res {
                    break;
                }
            }
            t *= 0.5;
            if t < params.min_step {
                if res <= params.tol.max(1e-6) * 1e-2 {
                    // stagnated at roundoff close to the tolerance
                    return Ok(report);
                }
                return Err(Error::StepFailure {
                    iterations: it,
                    residual: res,
                });
            }
        }
        u.copy_from_slice(&trial);
        energy = obj.energy(u);
    }
    Err(Error::StepFailure {
        iterations: report.iterations,
        residual: report.residual,
    })
}
