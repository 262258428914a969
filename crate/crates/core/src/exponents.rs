//! Critical exponents of the `(p, N)` pair and growth-envelope integrals.
//!
//! All branching in the rest of the crate (admissible range, Marcinkiewicz
//! decay rates, elliptic criticality) reads from [`Exponents`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_ext;

/// Partial integrals above this value are reported as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    #[serde(rename = "N")]
    pub n: usize,
    /// Lower admissible bound `2 - 1/(N+1)`.
    pub p1: f64,
    /// Marcinkiewicz exponent of `u`: `p - 1 + p/N`.
    pub pc: f64,
    /// Marcinkiewicz exponent of the gradient: `p - N/(N+1)`.
    pub mc: f64,
    /// Elliptic critical exponent `N(p-1)/(N-p)`, infinite when `p >= N`.
    #[serde(with = "serde_ext::extended_real")]
    pub pe: f64,
    pub valid_range: bool,
    pub gradient_integrable: bool,
    /// `p == N`, the borderline logarithmic case.
    pub borderline: bool,
}

pub fn compute_exponents(p: f64, n: usize) -> Result<Exponents> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::invalid(format!("p must be > 1, got {p}")));
    }
    if n < 1 {
        return Err(Error::invalid("N must be >= 1"));
    }
    let nf = n as f64;
    let p1 = 2.0 - 1.0 / (nf + 1.0);
    let pc = p - 1.0 + p / nf;
    let mc = p - nf / (nf + 1.0);
    let pe = if p < nf {
        nf * (p - 1.0) / (nf - p)
    } else {
        f64::INFINITY
    };
    Ok(Exponents {
        p,
        n,
        p1,
        pc,
        mc,
        pe,
        valid_range: p > p1,
        gradient_integrable: mc > 1.0,
        borderline: p == nf,
    })
}

/// Nondecreasing, nonnegative growth envelope `G` on `[1, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    Zero,
    /// `coeff * s^exponent`
    Power { coeff: f64, exponent: f64 },
    /// `E(tau * s^beta)` with `E(s) = e^s - sum_{j<l} s^j / j!`.
    Exponential { tau: f64, beta: f64, l: u32 },
    /// Piecewise linear through `(s, G)` pairs, constant beyond the last point.
    Tabulated { points: Vec<(f64, f64)> },
}

impl Envelope {
    pub fn power(exponent: f64) -> Self {
        Envelope::Power {
            coeff: 1.0,
            exponent,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Envelope::Zero => 0.0,
            Envelope::Power { coeff, exponent } => coeff * s.powf(*exponent),
            Envelope::Exponential { tau, beta, l } => exp_remainder(tau * s.powf(*beta), *l),
            Envelope::Tabulated { points } => {
                let first = points[0];
                if s <= first.0 {
                    return first.1;
                }
                for w in points.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if s <= b.0 {
                        let th = (s - a.0) / (b.0 - a.0);
                        return a.1 + th * (b.1 - a.1);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Envelope::Zero => Ok(()),
            Envelope::Power { coeff, exponent } => {
                if *coeff < 0.0 || *exponent < 0.0 {
                    return Err(Error::NonMonotoneEnvelope(format!(
                        "power envelope {coeff} s^{exponent} is not nondecreasing and nonnegative"
                    )));
                }
                Ok(())
            }
            Envelope::Exponential { tau, beta, l } => {
                if *tau < 0.0 || *beta <= 0.0 {
                    return Err(Error::NonMonotoneEnvelope(format!(
                        "exponential envelope needs tau >= 0, beta > 0 (tau={tau}, beta={beta})"
                    )));
                }
                if *l == 0 {
                    return Err(Error::invalid("exponential envelope needs l >= 1"));
                }
                Ok(())
            }
            Envelope::Tabulated { points } => {
                if points.is_empty() {
                    return Err(Error::invalid("tabulated envelope has no points"));
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::invalid("tabulated abscissae must increase"));
                    }
                    if w[1].1 < w[0].1 {
                        return Err(Error::NonMonotoneEnvelope(format!(
                            "tabulated envelope decreases between s={} and s={}",
                            w[0].0, w[1].0
                        )));
                    }
                }
                if points[0].1 < 0.0 {
                    return Err(Error::NonMonotoneEnvelope("negative envelope value".into()));
                }
                Ok(())
            }
        }
    }
}

/// `e^s - sum_{j=0}^{l-1} s^j/j!`, summed as a series near zero to avoid cancellation.
pub fn exp_remainder(s: f64, l: u32) -> f64 {
    if s.abs() <= 2.0 {
        let mut term = 1.0;
        for j in 1..=l {
            term *= s / j as f64;
        }
        if l == 0 {
            term = 1.0;
        }
        let mut sum = 0.0;
        let mut j = l;
        loop {
            sum += term;
            j += 1;
            term *= s / j as f64;
            if term.abs() <= 1e-17 * sum.abs().max(f64::MIN_POSITIVE) || j > l + 60 {
                break;
            }
        }
        sum
    } else {
        let mut partial = 0.0;
        let mut term = 1.0;
        for j in 0..l {
            if j > 0 {
                term *= s / j as f64;
            }
            partial += term;
        }
        s.exp() - partial
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "value", rename_all = "snake_case")]
pub enum Integral {
    Finite(f64),
    Divergent,
}

impl Integral {
    pub fn value(self) -> Option<f64> {
        match self {
            Integral::Finite(v) => Some(v),
            Integral::Divergent => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Integral::Finite(_))
    }

    fn checked(v: f64) -> Self {
        if v.is_finite() && v <= DIVERGENCE_THRESHOLD {
            Integral::Finite(v)
        } else {
            Integral::Divergent
        }
    }
}

/// `int_1^inf G(s) s^{-1-pc} ds`.
pub fn subcritical_integral(envelope: &Envelope, pc: f64) -> Result<Integral> {
    integral_from(envelope, 1.0, pc)
}

/// `int_L^inf G(s) s^{-1-pc} ds` in closed form for every envelope family.
pub fn integral_from(envelope: &Envelope, lower: f64, pc: f64) -> Result<Integral> {
    envelope.validate()?;
    if !(pc > 0.0) {
        return Err(Error::invalid(format!("pc must be positive, got {pc}")));
    }
    if !(lower >= 1.0) {
        return Err(Error::invalid(format!("lower limit must be >= 1, got {lower}")));
    }
    let v = match envelope {
        Envelope::Zero => 0.0,
        Envelope::Power { coeff, exponent } => {
            if *coeff == 0.0 {
                0.0
            } else if exponent - 1.0 - pc >= -1.0 {
                return Ok(Integral::Divergent);
            } else {
                coeff * lower.powf(exponent - pc) / (pc - exponent)
            }
        }
        Envelope::Exponential { tau, .. } => {
            if *tau == 0.0 {
                0.0
            } else {
                return Ok(Integral::Divergent);
            }
        }
        Envelope::Tabulated { points } => tabulated_tail(points, lower, pc),
    };
    Ok(Integral::checked(v))
}

fn power_antiderivative(s: f64, e: f64) -> f64 {
    // antiderivative of s^e
    if (e + 1.0).abs() < 1e-14 {
        s.ln()
    } else {
        s.powf(e + 1.0) / (e + 1.0)
    }
}

fn tabulated_tail(points: &[(f64, f64)], lower: f64, pc: f64) -> f64 {
    let env = Envelope::Tabulated {
        points: points.to_vec(),
    };
    // breakpoints above `lower`
    let mut knots = vec![lower];
    knots.extend(points.iter().map(|p| p.0).filter(|&s| s > lower));
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ga, gb) = (env.eval(a), env.eval(b));
        let slope = (gb - ga) / (b - a);
        let icpt = ga - slope * a;
        total += icpt * (power_antiderivative(b, -1.0 - pc) - power_antiderivative(a, -1.0 - pc));
        total += slope * (power_antiderivative(b, -pc) - power_antiderivative(a, -pc));
    }
    let last = *knots.last().unwrap();
    total + env.eval(last) * last.powf(-pc) / pc
}

/// Tail estimate `pc * M * int_L^inf G(s) s^{-1-pc} ds` for fields with
/// `meas{|V| >= t} <= M t^{-pc}`.
pub fn tail_bound(envelope: &Envelope, m: f64, lower: f64, pc: f64) -> Result<Integral> {
    if !(lower > 1.0) {
        return Err(Error::invalid(format!("L must exceed 1, got {lower}")));
    }
    if m < 0.0 {
        return Err(Error::invalid("M must be nonnegative"));
    }
    Ok(match integral_from(envelope, lower, pc)? {
        Integral::Finite(v) => Integral::Finite(pc * m * v),
        Integral::Divergent => Integral::Divergent,
    })
}
