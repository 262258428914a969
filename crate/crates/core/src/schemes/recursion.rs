use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::potential::{wolff_potential, Point3, PotentialMeasure, SampleDomain, WolffConfig};
use crate::schemes::thresholds::beta_p;
use crate::schemes::trace::{IterationRow, IterationTrace, StopReason};

/// Settings of the potential map iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionParams {
    pub m_max: usize,
    /// Stop once the step, measured relative to `u_1`, falls below `rel_tol`.
    pub rel_tol: f64,
    pub blowup: f64,
    /// Relative slack of the monotonicity check (quadrature noise).
    pub monotone_rel: f64,
}

impl Default for RecursionParams {
    fn default() -> Self {
        RecursionParams {
            m_max: 20,
            rel_tol: 1e-6,
            blowup: 1e12,
            monotone_rel: 1e-6,
        }
    }
}

fn power_measure(
    omega: &PotentialMeasure,
    domain: &SampleDomain,
    cells: &[(Point3, f64)],
    u: &[f64],
    q: f64,
) -> Result<PotentialMeasure> {
    match domain {
        SampleDomain::Grid(g) => {
            let points = cells.iter().zip(u).map(|((x, v), w)| (*x, v * w.powf(q))).collect();
            let density = u.iter().map(|w| w.powf(q)).collect();
            PotentialMeasure::cells(omega.atoms.clone(), points, density, g.h())
        }
        SampleDomain::Ball { n_dim, radius, shells } => {
            if omega.atoms.iter().any(|(x, _)| x.iter().any(|c| *c != 0.0)) {
                return Err(Error::Precondition("ball recursion needs atoms at the origin".into()));
            }
            let weight: f64 = omega.atoms.iter().map(|a| a.1).sum();
            let table: Vec<(f64, f64)> = cells.iter().zip(u).map(|((x, _), w)| (x[0].ln(), w.powf(q))).collect();
            let r_max = *radius;
            let f = move |r: f64| {
                if r > r_max || table.is_empty() {
                    return 0.0;
                }
                let s = r.ln();
                let i = table.partition_point(|(t, _)| *t < s);
                if i == 0 {
                    return table[0].1;
                }
                if i == table.len() {
                    return table[i - 1].1;
                }
                let (a, b) = (table[i - 1], table[i]);
                let th = (s - a.0) / (b.0 - a.0);
                (1.0 - th) * a.1 + th * b.1
            };
            PotentialMeasure::radial(*n_dim, weight, f, *radius, *shells)
        }
    }
}

/// Iterates `u_{m+1} = K W[u_m^q dx + omega] + b` on the sample cells of
/// `domain`, checking `u_m <= 2 beta_p K W[omega] + 2b` at every step.
pub fn potential_recursion(
    omega: &PotentialMeasure,
    k: f64,
    b: f64,
    q: f64,
    cfg: &WolffConfig,
    domain: &SampleDomain,
    params: &RecursionParams,
) -> Result<IterationTrace> {
    cfg.validate()?;
    if !(k > 0.0) || !(b >= 0.0) || !(q > cfg.p - 1.0) {
        return Err(Error::invalid("recursion needs K > 0, b >= 0 and q > p - 1"));
    }
    if omega.has_diffuse() {
        return Err(Error::Precondition("recursion expects an atomic omega".into()));
    }
    let cells = domain.cells();
    let base: Vec<f64> = cells
        .par_iter()
        .map(|(x, _)| wolff_potential(omega, x, cfg))
        .collect::<Result<_>>()?;
    let bound: Vec<f64> = base.iter().map(|w| 2.0 * beta_p(cfg.p) * k * w + 2.0 * b).collect();
    let mut trace = IterationTrace::new("potential");
    let mut u: Vec<f64> = base.iter().map(|w| k * w + b).collect();
    let first = u.clone();
    // step size in the norm weighted by the first iterate
    let weighted = |a: &[f64], c: &[f64]| {
        a.iter()
            .zip(c)
            .zip(&first)
            .map(|((x, y), w)| if *w > 0.0 { (x - y).abs() / w } else { (x - y).abs() })
            .fold(0.0, f64::max)
    };
    let mut prev: Option<Vec<f64>> = None;
    for m in 1..=params.m_max.max(1) {
        if m > 1 {
            let nu = power_measure(omega, domain, &cells, &u, q)?;
            u = cells
                .par_iter()
                .map(|(x, _)| wolff_potential(&nu, x, cfg).map(|w| k * w + b))
                .collect::<Result<_>>()?;
        }
        let sup = u.iter().cloned().fold(0.0, f64::max);
        let l1 = cells.iter().zip(&u).map(|((_, w), v)| w * v).sum();
        let diff = match &prev {
            Some(p) => weighted(&u, p),
            None => 1.0,
        };
        if let Some(p) = &prev {
            let drop = u
                .iter()
                .zip(p)
                .zip(&first)
                .map(|((a, c), w)| (c - a) / w.max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            if drop > params.monotone_rel {
                trace.monotone = false;
                trace.flags.push(format!("relative decrease {drop:.3e} at m = {m}"));
            }
        }
        let mut ratio: f64 = 0.0;
        let mut ok = true;
        for (v, bd) in u.iter().zip(&bound) {
            if !(*v <= bd * (1.0 + 1e-12) + 1e-12) {
                ok = false;
            }
            if *bd > 0.0 && bd.is_finite() {
                ratio = ratio.max(v / bd);
            }
        }
        trace.push(IterationRow {
            m,
            sup,
            l1,
            diff,
            bound_ratio: ratio,
            bound_ok: ok,
            k_n: None,
            decay_constant: None,
            decay_ok: None,
        });
        if !sup.is_finite() || sup > params.blowup {
            trace.stop = StopReason::BlowUp;
            trace.flags.push("iterates blew up".into());
            break;
        }
        if m > 1 && diff <= params.rel_tol {
            trace.converged = true;
            trace.stop = StopReason::Converged;
            break;
        }
        prev = Some(u.clone());
    }
    if let Some(m) = trace.first_violation {
        trace.flags.push(format!("uniform bound violated first at m = {m}"));
    }
    Ok(trace)
}
