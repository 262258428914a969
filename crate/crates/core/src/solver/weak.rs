//! Defect of the renormalized weak form tested with smoothed truncations
//! `S_k` and smooth space-time test functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::field::SpaceTimeField;
use crate::solver::operator::{AbsorptionSpec, OperatorSpec};
use crate::solver::step::SliceLoad;
use crate::testfns::TestFunction;
use crate::truncation::Truncation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub test: String,
    /// Truncation level; `inf` means `S` is the identity.
    #[serde(with = "crate::serde_ext::extended_real")]
    pub k: f64,
    pub defect: f64,
}

/// For each test function and each `k`, evaluates
/// `[S(u) phi]_0^T - int S(u) phi_t + int S'(u) A(grad u).grad phi
///  + int S''(u) phi A(grad u).grad u + int S'(u) phi G(u) - int S'(u) phi dmu`
/// with the time derivative in summation-by-parts form.
pub fn weak_residual(
    u: &SpaceTimeField,
    load: &dyn SliceLoad,
    op: &OperatorSpec,
    absorption: &AbsorptionSpec,
    tests: &[TestFunction],
    ks: &[f64],
) -> Result<Vec<ResidualEntry>> {
    if !u.is_complete() {
        return Err(Error::Precondition(
            "weak residual needs every time level stored".into(),
        ));
    }
    let grid = u.grid();
    let n = grid.node_count();
    let weights = op.element_weights(grid)?;
    let masses = grid.node_weights();
    let dt = grid.dt();
    let truncs: Vec<Truncation> = ks
        .iter()
        .map(|&k| {
            let t = Truncation::Smooth { k };
            t.validate().map(|_| t)
        })
        .collect::<Result<_>>()?;
    let mut defects = vec![0.0; tests.len() * ks.len()];
    let mut b = vec![0.0; n];
    for level in 1..u.len() {
        let t = u.times()[level];
        let (cur, prev) = (u.slice(level), u.slice(level - 1));
        load.slice_load(grid, level, &mut b)?;
        for (ti, psi) in tests.iter().enumerate() {
            let phi: Vec<f64> = (0..n).map(|i| psi.value(&grid.node(i), t)).collect();
            for (ki, s) in truncs.iter().enumerate() {
                let mut d = 0.0;
                for i in 0..n {
                    if grid.is_dirichlet(i) {
                        continue;
                    }
                    let sp = s.derivative(cur[i]);
                    d += masses[i] * (s.apply(cur[i]) - s.apply(prev[i])) * phi[i];
                    d += dt * phi[i] * sp * (masses[i] * absorption.value(cur[i]) - b[i]);
                }
                for (e, el) in grid.elements().iter().enumerate() {
                    let g = el.gradient(cur);
                    let a = op.flux(weights[e], g);
                    let mean = (0..el.count).map(|l| cur[el.nodes[l]]).sum::<f64>() / el.count as f64;
                    let gp = psi.gradient(&el.centroid, t);
                    let pc = psi.value(&el.centroid, t);
                    d += dt
                        * el.volume
                        * (s.derivative(mean) * (a[0] * gp[0] + a[1] * gp[1])
                            + s.second_derivative(mean) * pc * (a[0] * g[0] + a[1] * g[1]));
                }
                defects[ti * ks.len() + ki] += d;
            }
        }
    }
    let mut out = Vec::with_capacity(defects.len());
    for (ti, psi) in tests.iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            out.push(ResidualEntry {
                test: psi.label(),
                k,
                defect: defects[ti * ks.len() + ki],
            });
        }
    }
    Ok(out)
}
