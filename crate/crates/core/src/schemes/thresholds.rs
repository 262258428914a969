use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::delta_zero;
use crate::solver::radial::ball_volume;

/// Smallness thresholds of the potential recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub p: f64,
    pub q: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: f64,
    pub diameter: f64,
    /// `max(1, 3^{(2-p)/(p-1)})`
    pub beta_p: f64,
    /// `2 max(1, 2^{(2-p)/(p-1)})`
    pub c_p: f64,
    /// `(2^{q-1} (2 beta_p)^q K^q)^{1/(p-1)}`
    pub a1: f64,
    /// `beta_p K 2^{q/(p-1)} |B_1|^{1/(p-1)} (2 diam)^{p'} / p'`
    pub a2: f64,
    /// `(A_1 M)^{-(p-1)^2/(q-p+1)}`
    pub lambda0: f64,
    /// `A_2^{-(p-1)/(q-p+1)}`
    pub b0: f64,
    /// Composition constant used for `lambda0`.
    pub m: f64,
    pub m_provenance: String,
    /// Bound on the fractional maximal function in the exponential case.
    pub m0: Option<f64>,
}

pub fn beta_p(p: f64) -> f64 {
    1f64.max(3f64.powf((2.0 - p) / (p - 1.0)))
}

pub fn c_p(p: f64) -> f64 {
    2.0 * 1f64.max(2f64.powf((2.0 - p) / (p - 1.0)))
}

pub fn compute_thresholds(p: f64, q: f64, k: f64, m: f64, diameter: f64, n: usize, provenance: &str) -> Result<Thresholds> {
    if !(p > 1.0) || n == 0 {
        return Err(Error::invalid(format!("thresholds need p > 1 and N >= 1 (p = {p}, N = {n})")));
    }
    if !(q > p - 1.0) {
        return Err(Error::invalid(format!("q = {q} must exceed p - 1 = {}", p - 1.0)));
    }
    if !(k > 0.0) || !(m > 0.0) || !(diameter > 0.0) {
        return Err(Error::invalid("K, M and the diameter must be positive"));
    }
    let bp = beta_p(p);
    let pp = p / (p - 1.0);
    let a1 = (2f64.powf(q - 1.0) * (2.0 * bp).powf(q) * k.powf(q)).powf(1.0 / (p - 1.0));
    let a2 = bp * k * 2f64.powf(q / (p - 1.0)) * ball_volume(n, 1.0).powf(1.0 / (p - 1.0)) / pp
        * (2.0 * diameter).powf(pp);
    let gap = q - p + 1.0;
    Ok(Thresholds {
        p,
        q,
        n,
        k,
        diameter,
        beta_p: bp,
        c_p: c_p(p),
        a1,
        a2,
        lambda0: (a1 * m).powf(-(p - 1.0).powi(2) / gap),
        b0: a2.powf(-(p - 1.0) / gap),
        m,
        m_provenance: provenance.to_string(),
        m0: None,
    })
}

impl Thresholds {
    /// Adds `M_0 = (delta_0 / (tau kappa^beta))^{(p-1)/beta}`.
    pub fn with_exponential(mut self, tau: f64, beta: f64, kappa: f64) -> Result<Self> {
        if !(tau > 0.0) || !(beta >= 1.0) || !(kappa > 0.0) {
            return Err(Error::invalid("exponential threshold needs tau > 0, beta >= 1, kappa > 0"));
        }
        self.m0 = Some((delta_zero(beta, self.p) / (tau * kappa.powf(beta))).powf((self.p - 1.0) / beta));
        Ok(self)
    }
}
