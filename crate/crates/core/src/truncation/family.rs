use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncation-type functions of one real variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truncation {
    /// `T_k(r) = max(min(r, k), -k)`
    Clamp { k: f64 },
    /// `int_0^r T_k`
    ClampPrimitive { k: f64 },
    /// `int_0^r T_k'(s) s ds`
    ClampMoment { k: f64 },
    /// `H_m`: one on `[-m, m]`, linear down to zero at `|r| = 2m`.
    Cutoff { m: f64 },
    /// `int_0^r H_m`
    CutoffPrimitive { m: f64 },
    /// `S_{m,l}`: primitive of the ramp up on `[m, 2m]`, plateau on
    /// `(2m, 2m+l]`, ramp down to zero at `4m + 2l`; zero for `r < 0`.
    Band { m: f64, l: f64 },
    /// `T_{k,l}(r) = max(min(r - l, k), 0) + min(max(r + l, -k), 0)`
    Shifted { k: f64, l: f64 },
    /// `T_k` convolved with a C^2 kernel of width `k/10`; the identity for
    /// `k = inf`.
    Smooth { k: f64 },
}

impl Truncation {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Truncation::Clamp { k }
            | Truncation::ClampPrimitive { k }
            | Truncation::ClampMoment { k } => k > 0.0,
            Truncation::Smooth { k } => k > 0.0,
            Truncation::Cutoff { m } | Truncation::CutoffPrimitive { m } => m > 0.0,
            Truncation::Band { m, l } => m > 0.0 && l >= 0.0,
            Truncation::Shifted { k, l } => k > 0.0 && l >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad truncation parameters {self:?}")))
        }
    }

    pub fn apply(&self, r: f64) -> f64 {
        match *self {
            Truncation::Clamp { k } => r.clamp(-k, k),
            Truncation::ClampPrimitive { k } => {
                let a = r.abs();
                if a <= k {
                    0.5 * r * r
                } else {
                    k * a - 0.5 * k * k
                }
            }
            Truncation::ClampMoment { k } => 0.5 * r.clamp(-k, k).powi(2),
            Truncation::Cutoff { m } => {
                let a = r.abs();
                if a <= m {
                    1.0
                } else if a <= 2.0 * m {
                    (2.0 * m - a) / m
                } else {
                    0.0
                }
            }
            Truncation::CutoffPrimitive { m } => {
                let a = r.abs().min(2.0 * m);
                let v = if a <= m {
                    a
                } else {
                    m + (2.0 * m * (a - m) - 0.5 * (a * a - m * m)) / m
                };
                r.signum() * v
            }
            Truncation::Band { m, l } => band_primitive(r, m, l),
            Truncation::Shifted { k, l } => (r - l).min(k).max(0.0) + (r + l).max(-k).min(0.0),
            Truncation::Smooth { k } => smooth_value(r, k),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            Truncation::Clamp { k } => f64::from(r.abs() <= k),
            Truncation::ClampPrimitive { k } => r.clamp(-k, k),
            Truncation::ClampMoment { k } => {
                if r.abs() <= k {
                    r
                } else {
                    0.0
                }
            }
            Truncation::Cutoff { m } => {
                let a = r.abs();
                if a > m && a <= 2.0 * m {
                    -r.signum() / m
                } else {
                    0.0
                }
            }
            Truncation::CutoffPrimitive { m } => Truncation::Cutoff { m }.apply(r),
            Truncation::Band { m, l } => band_slope(r, m, l),
            Truncation::Shifted { k, l } => {
                let a = r.abs();
                f64::from(a > l && a <= l + k)
            }
            Truncation::Smooth { k } => smooth_slope(r, k),
        }
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        match *self {
            Truncation::Smooth { k } => smooth_curvature(r, k),
            Truncation::ClampPrimitive { k } => f64::from(r.abs() <= k),
            Truncation::ClampMoment { k } => f64::from(r.abs() <= k),
            Truncation::Band { m, l } => {
                if (m..=2.0 * m).contains(&r) {
                    1.0 / m
                } else if r > 2.0 * m + l && r <= 4.0 * m + 2.0 * l {
                    -1.0 / (2.0 * m + l)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// Lipschitz constant on the real line.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Truncation::Clamp { .. }
            | Truncation::CutoffPrimitive { .. }
            | Truncation::Band { .. }
            | Truncation::Shifted { .. }
            | Truncation::Smooth { .. } => 1.0,
            Truncation::ClampPrimitive { k } | Truncation::ClampMoment { k } => k,
            Truncation::Cutoff { m } => 1.0 / m,
        }
    }

    pub fn apply_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&r| self.apply(r)).collect()
    }
}

fn band_slope(r: f64, m: f64, l: f64) -> f64 {
    if r < m {
        0.0
    } else if r <= 2.0 * m {
        (r - m) / m
    } else if r <= 2.0 * m + l {
        1.0
    } else if r <= 4.0 * m + 2.0 * l {
        (4.0 * m + 2.0 * l - r) / (2.0 * m + l)
    } else {
        0.0
    }
}

fn band_primitive(r: f64, m: f64, l: f64) -> f64 {
    if r <= m {
        return 0.0;
    }
    let s = r.min(2.0 * m);
    let mut v = (s - m).powi(2) / (2.0 * m);
    if r <= 2.0 * m {
        return v;
    }
    v += (r.min(2.0 * m + l)) - 2.0 * m;
    if r <= 2.0 * m + l {
        return v;
    }
    let a = 2.0 * m + l;
    let e = r.min(4.0 * m + 2.0 * l);
    v + ((4.0 * m + 2.0 * l) * (e - a) - 0.5 * (e * e - a * a)) / a
}

/// Kernel `140 x^3 (1-x)^3` on `[0, 1]`, its CDF and the CDF's primitive.
fn kernel(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    140.0 * (x * (1.0 - x)).powi(3)
}

fn kernel_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x.powi(4) * (35.0 + x * (-84.0 + x * (70.0 - 20.0 * x)))
    }
}

fn kernel_cdf_primitive(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        0.5 + (x - 1.0)
    } else {
        x.powi(5) * (7.0 + x * (-14.0 + x * (10.0 - 2.5 * x)))
    }
}

fn smooth_slope(r: f64, k: f64) -> f64 {
    if k.is_infinite() {
        return 1.0;
    }
    let w = 0.1 * k;
    kernel_cdf((r + k) / w + 0.5) - kernel_cdf((r - k) / w + 0.5)
}

fn smooth_curvature(r: f64, k: f64) -> f64 {
    if k.is_infinite() {
        return 0.0;
    }
    let w = 0.1 * k;
    (kernel((r + k) / w + 0.5) - kernel((r - k) / w + 0.5)) / w
}

fn smooth_value(r: f64, k: f64) -> f64 {
    if k.is_infinite() {
        return r;
    }
    let w = 0.1 * k;
    let f = |s: f64| w * (kernel_cdf_primitive((s + k) / w + 0.5) - kernel_cdf_primitive((s - k) / w + 0.5));
    f(r) - f(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(Truncation::Clamp { k: 2.0 }.apply(3.0), 2.0);
        assert_eq!(Truncation::Clamp { k: 2.0 }.apply(-1.0), -1.0);
        assert_eq!(Truncation::Cutoff { m: 2.0 }.apply(3.0), 0.5);
        assert_eq!(Truncation::Cutoff { m: 2.0 }.apply(5.0), 0.0);
        assert_eq!(Truncation::ClampPrimitive { k: 1.0 }.apply(3.0), 2.5);
        assert_eq!(Truncation::CutoffPrimitive { m: 2.0 }.apply(10.0), 3.0);
        assert_eq!(Truncation::Shifted { k: 1.0, l: 2.0 }.apply(2.5), 0.5);
        assert_eq!(Truncation::Shifted { k: 1.0, l: 2.0 }.apply(-5.0), -1.0);
        // S_{m,l} saturates at m/2 + l + (2m + l)/2
        assert!((Truncation::Band { m: 1.0, l: 1.0 }.apply(100.0) - 3.0).abs() < 1e-14);
    }

    /// Derivatives checked against central differences away from kinks.
    #[test]
    fn derivatives_match_differences() {
        let fams = [
            Truncation::ClampPrimitive { k: 1.5 },
            Truncation::ClampMoment { k: 1.5 },
            Truncation::CutoffPrimitive { m: 1.2 },
            Truncation::Band { m: 1.0, l: 0.7 },
            Truncation::Smooth { k: 2.0 },
        ];
        for f in fams {
            for i in 0..97 {
                let r = -6.0 + 0.1234 * i as f64;
                let h = 1e-6;
                let d = (f.apply(r + h) - f.apply(r - h)) / (2.0 * h);
                assert!((d - f.derivative(r)).abs() < 1e-6, "{f:?} at {r}");
            }
        }
        let s = Truncation::Smooth { k: 2.0 };
        for i in 0..97 {
            let r = -6.0 + 0.1234 * i as f64;
            let h = 1e-5;
            let d = (s.derivative(r + h) - s.derivative(r - h)) / (2.0 * h);
            assert!((d - s.second_derivative(r)).abs() < 1e-5);
        }
    }

    #[test]
    fn smooth_truncation_is_identity_inside_and_compactly_flat() {
        let s = Truncation::Smooth { k: 2.0 };
        assert_eq!(s.apply(0.0), 0.0);
        assert!((s.apply(1.5) - 1.5).abs() < 1e-13);
        assert!((s.apply(-1.8) + 1.8).abs() < 1e-13);
        assert!((s.apply(10.0) - 2.0).abs() < 1e-13);
        assert_eq!(s.derivative(2.11), 0.0);
    }
}
