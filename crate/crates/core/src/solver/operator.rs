//! Leray–Lions operator `A(x, xi) = w(x) (|xi|^2 + eps^2)^{(p-2)/2} xi` and the
//! zero-order term `G(u)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{exp_remainder, Envelope};
use crate::expr::Expr;
use crate::solver::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorForm {
    PLaplacian,
    /// `w(x)|xi|^{p-2} xi` with `c1 <= w <= c2`; `weight` is an expression in `x`, `y`.
    Weighted { weight: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    /// Offset in the growth bound `|A| <= a + c2 |xi|^{p-1}`.
    #[serde(default)]
    pub a: f64,
    pub form: OperatorForm,
    pub eps_reg: f64,
}

impl OperatorSpec {
    /// Plain p-Laplacian with the default regularization `1e-6` (none for `p = 2`).
    pub fn p_laplacian(p: f64) -> Self {
        OperatorSpec {
            p,
            c1: 1.0,
            c2: 1.0,
            a: 0.0,
            form: OperatorForm::PLaplacian,
            eps_reg: Self::default_eps(p, 1.0),
        }
    }

    pub fn weighted(p: f64, weight: &str, c1: f64, c2: f64) -> Self {
        OperatorSpec {
            p,
            c1,
            c2,
            a: 0.0,
            form: OperatorForm::Weighted {
                weight: weight.to_string(),
            },
            eps_reg: Self::default_eps(p, 1.0),
        }
    }

    pub fn default_eps(p: f64, data_scale: f64) -> f64 {
        if p == 2.0 {
            0.0
        } else {
            1e-6 * data_scale.abs().max(1e-300)
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps_reg = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::invalid(format!("p must exceed 1, got {}", self.p)));
        }
        if !(self.c1 > 0.0 && self.c2 >= self.c1) {
            return Err(Error::invalid("need 0 < c1 <= c2"));
        }
        if self.eps_reg < 0.0 || self.a < 0.0 {
            return Err(Error::invalid("eps_reg and a must be nonnegative"));
        }
        Ok(())
    }

    /// Coefficient `w` at each element centroid, checked against `[c1, c2]`.
    pub fn element_weights(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.validate()?;
        match &self.form {
            OperatorForm::PLaplacian => Ok(vec![1.0; grid.elements().len()]),
            OperatorForm::Weighted { weight } => {
                let e = Expr::parse(weight)?;
                grid.elements()
                    .iter()
                    .map(|el| {
                        let w = e.eval_xyt(el.centroid[0], el.centroid[1], 0.0)?;
                        if w < self.c1 - 1e-12 || w > self.c2 + 1e-12 {
                            return Err(Error::invalid(format!(
                                "weight {w} outside [{}, {}] at {:?}",
                                self.c1, self.c2, el.centroid
                            )));
                        }
                        Ok(w)
                    })
                    .collect()
            }
        }
    }

    /// `A(xi)` for coefficient `w`.
    pub fn flux(&self, w: f64, xi: [f64; 2]) -> [f64; 2] {
        let s = xi[0] * xi[0] + xi[1] * xi[1] + self.eps_reg * self.eps_reg;
        let c = if s == 0.0 {
            0.0
        } else {
            w * s.powf(0.5 * (self.p - 2.0))
        };
        [c * xi[0], c * xi[1]]
    }

    /// Energy density whose gradient is [`flux`](Self::flux).
    pub fn density(&self, w: f64, xi: [f64; 2]) -> f64 {
        let s = xi[0] * xi[0] + xi[1] * xi[1] + self.eps_reg * self.eps_reg;
        w * s.powf(0.5 * self.p) / self.p
    }

    /// Jacobian of the flux, `w s^{(p-2)/2} (I + (p-2) xi xi^T / s)`.
    pub fn flux_jacobian(&self, w: f64, xi: [f64; 2]) -> [[f64; 2]; 2] {
        let s = xi[0] * xi[0] + xi[1] * xi[1] + self.eps_reg * self.eps_reg;
        if s == 0.0 {
            // only reachable with eps_reg = 0; p = 2 is the sole well-defined case
            let c = if self.p == 2.0 { w } else { 0.0 };
            return [[c, 0.0], [0.0, c]];
        }
        let c = w * s.powf(0.5 * (self.p - 2.0));
        let d = (self.p - 2.0) / s;
        [
            [c * (1.0 + d * xi[0] * xi[0]), c * d * xi[0] * xi[1]],
            [c * d * xi[0] * xi[1], c * (1.0 + d * xi[1] * xi[1])],
        ]
    }

    /// Samples coercivity, growth and strict monotonicity on a deterministic
    /// low-discrepancy set of gradient pairs. Coercivity and growth are
    /// checked on the unregularized operator.
    pub fn check_structure(&self, samples: usize) -> StructureCheck {
        let unreg = OperatorSpec {
            eps_reg: 0.0,
            ..self.clone()
        };
        let mut out = StructureCheck {
            samples,
            coercive: true,
            bounded_growth: true,
            monotone: true,
            min_monotone_gap: f64::INFINITY,
        };
        let (g1, g2) = (0.618_033_988_749_895, 0.754_877_666_246_693);
        for k in 0..samples {
            let u1 = (k as f64 * g1).fract();
            let u2 = (k as f64 * g2).fract();
            let u3 = ((k as f64 + 0.5) * g1 * g2).fract();
            let u4 = ((k as f64 + 0.25) * (g1 + g2)).fract();
            let r = 10f64.powf(-3.0 + 6.0 * u1);
            let th = 2.0 * std::f64::consts::PI * u2;
            let xi = [r * th.cos(), r * th.sin()];
            let r2 = 10f64.powf(-3.0 + 6.0 * u3);
            let th2 = 2.0 * std::f64::consts::PI * u4;
            let zeta = [r2 * th2.cos(), r2 * th2.sin()];
            for w in [self.c1, self.c2] {
                let a = unreg.flux(w, xi);
                let axi = a[0] * xi[0] + a[1] * xi[1];
                if axi < self.c1 * r.powf(self.p) * (1.0 - 1e-12) {
                    out.coercive = false;
                }
                if (a[0] * a[0] + a[1] * a[1]).sqrt()
                    > (self.a + self.c2 * r.powf(self.p - 1.0)) * (1.0 + 1e-12)
                {
                    out.bounded_growth = false;
                }
                let b = self.flux(w, zeta);
                let a_reg = self.flux(w, xi);
                let gap =
                    (a_reg[0] - b[0]) * (xi[0] - zeta[0]) + (a_reg[1] - b[1]) * (xi[1] - zeta[1]);
                out.min_monotone_gap = out.min_monotone_gap.min(gap);
                if !(gap > 0.0) {
                    out.monotone = false;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureCheck {
    pub samples: usize,
    pub coercive: bool,
    pub bounded_growth: bool,
    pub monotone: bool,
    pub min_monotone_gap: f64,
}

/// Zero-order term. Absorption kinds satisfy `G(r) r >= 0`, source kinds
/// (`source = true`) `G(r) r <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbsorptionSpec {
    #[default]
    None,
    /// `+-coeff |r|^{q-1} r`
    Power {
        q: f64,
        #[serde(default = "one")]
        coeff: f64,
        #[serde(default)]
        source: bool,
    },
    /// `+-E(tau |r|^beta) sign(r)`
    Exponential {
        tau: f64,
        beta: f64,
        l: u32,
        #[serde(default)]
        source: bool,
    },
    /// Odd extension of an expression in `r >= 0`, with a declared envelope.
    Custom {
        expr: String,
        envelope: Envelope,
        #[serde(default)]
        source: bool,
    },
}

fn one() -> f64 {
    1.0
}

const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

impl AbsorptionSpec {
    pub fn power_absorption(q: f64) -> Self {
        AbsorptionSpec::Power {
            q,
            coeff: 1.0,
            source: false,
        }
    }

    pub fn power_source(q: f64) -> Self {
        AbsorptionSpec::Power {
            q,
            coeff: 1.0,
            source: true,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, AbsorptionSpec::None)
    }

    pub fn is_source(&self) -> bool {
        match self {
            AbsorptionSpec::None => false,
            AbsorptionSpec::Power { source, .. }
            | AbsorptionSpec::Exponential { source, .. }
            | AbsorptionSpec::Custom { source, .. } => *source,
        }
    }

    /// Every kind here is an odd function of `r`.
    pub fn is_odd(&self) -> bool {
        true
    }

    /// Nondecreasing in `r` (absorption kinds).
    pub fn is_monotone(&self) -> bool {
        !self.is_source()
    }

    fn sign(&self) -> f64 {
        if self.is_source() {
            -1.0
        } else {
            1.0
        }
    }

    fn magnitude(&self, s: f64) -> f64 {
        match self {
            AbsorptionSpec::None => 0.0,
            AbsorptionSpec::Power { q, coeff, .. } => coeff * s.powf(*q),
            AbsorptionSpec::Exponential { tau, beta, l, .. } => exp_remainder(tau * s.powf(*beta), *l),
            AbsorptionSpec::Custom { expr, .. } => Expr::parse(expr)
                .and_then(|e| e.eval(&[("r", s)]))
                .unwrap_or(f64::NAN),
        }
    }

    /// `G(r)`.
    pub fn value(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        self.sign() * r.signum() * self.magnitude(r.abs())
    }

    /// `G'(r)`.
    pub fn derivative(&self, r: f64) -> f64 {
        let s = r.abs();
        let d = match self {
            AbsorptionSpec::None => 0.0,
            AbsorptionSpec::Power { q, coeff, .. } => coeff * q * s.max(1e-8).powf(q - 1.0),
            AbsorptionSpec::Exponential { tau, beta, l, .. } => {
                let arg = tau * s.powf(*beta);
                let de = if *l == 0 { arg.exp() } else { exp_remainder(arg, l - 1) };
                de * tau * beta * s.max(1e-8).powf(beta - 1.0)
            }
            AbsorptionSpec::Custom { .. } => {
                let h = 1e-6 * (1.0 + s);
                (self.magnitude(s + h) - self.magnitude((s - h).max(0.0))) / (s + h - (s - h).max(0.0))
            }
        };
        self.sign() * d
    }

    /// Antiderivative `int_0^r G`.
    pub fn primitive(&self, r: f64) -> f64 {
        let s = r.abs();
        if s == 0.0 {
            return 0.0;
        }
        let m = match self {
            AbsorptionSpec::None => 0.0,
            AbsorptionSpec::Power { q, coeff, .. } => coeff * s.powf(q + 1.0) / (q + 1.0),
            _ => {
                let pieces = 16;
                let w = s / pieces as f64;
                let mut acc = 0.0;
                for k in 0..pieces {
                    let mid = (k as f64 + 0.5) * w;
                    for (x, wt) in GL5 {
                        acc += wt * 0.5 * w * self.magnitude(mid + 0.5 * w * x);
                    }
                }
                acc
            }
        };
        self.sign() * m
    }

    pub fn envelope(&self) -> Envelope {
        match self {
            AbsorptionSpec::None => Envelope::Zero,
            AbsorptionSpec::Power { q, coeff, .. } => Envelope::Power {
                coeff: *coeff,
                exponent: *q,
            },
            AbsorptionSpec::Exponential { tau, beta, l, .. } => Envelope::Exponential {
                tau: *tau,
                beta: *beta,
                l: *l,
            },
            AbsorptionSpec::Custom { envelope, .. } => envelope.clone(),
        }
    }
}
