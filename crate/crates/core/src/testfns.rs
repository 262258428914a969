//! Fixed family of smooth space-time test functions
//! `psi_{a,b}(x, t) = bump(x) xs^a (t/T)^b`, `a, b in 0..4`, used to certify
//! narrow convergence and to evaluate weak residuals.

use crate::solver::grid::{DomainShape, Grid, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bump {
    /// `prod_d (4 s_d (1 - s_d))^2` with `s` the box-normalized coordinate.
    Box { lower: Point, upper: Point, dim: usize },
    /// `(1 - |x - c|^2 / R^2)^2` inside the disc.
    Disc { center: Point, radius: f64, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    bump: Bump,
    pub a: u32,
    pub b: u32,
    t_final: f64,
    x0: f64,
    width: f64,
}

impl TestFunction {
    /// The 16 functions for `grid`; they vanish on the boundary of its domain.
    pub fn family(grid: &Grid) -> Vec<TestFunction> {
        let dim = grid.dim();
        let bump = match grid.shape() {
            DomainShape::Box => Bump::Box {
                lower: grid.lower(),
                upper: grid.upper(),
                dim,
            },
            DomainShape::Disc { center, radius } => Bump::Disc {
                center: *center,
                radius: *radius,
                dim,
            },
        };
        let (x0, width) = (grid.lower()[0], grid.upper()[0] - grid.lower()[0]);
        let mut out = Vec::with_capacity(16);
        for a in 0..4 {
            for b in 0..4 {
                out.push(TestFunction {
                    bump,
                    a,
                    b,
                    t_final: grid.t_final(),
                    x0,
                    width,
                });
            }
        }
        out
    }

    pub fn label(&self) -> String {
        format!("a{}b{}", self.a, self.b)
    }

    fn bump(&self, x: &Point) -> (f64, [f64; 2]) {
        match self.bump {
            Bump::Box { lower, upper, dim } => {
                let mut v = [0.0; 2];
                let mut dv = [0.0; 2];
                for d in 0..dim {
                    let l = upper[d] - lower[d];
                    let s = (x[d] - lower[d]) / l;
                    if !(0.0..=1.0).contains(&s) {
                        return (0.0, [0.0; 2]);
                    }
                    let q = 4.0 * s * (1.0 - s);
                    v[d] = q * q;
                    dv[d] = 2.0 * q * 4.0 * (1.0 - 2.0 * s) / l;
                }
                if dim == 1 {
                    (v[0], [dv[0], 0.0])
                } else {
                    (v[0] * v[1], [dv[0] * v[1], v[0] * dv[1]])
                }
            }
            Bump::Disc {
                center,
                radius,
                dim,
            } => {
                let dx = x[0] - center[0];
                let dy = if dim == 2 { x[1] - center[1] } else { 0.0 };
                let q = 1.0 - (dx * dx + dy * dy) / (radius * radius);
                if q <= 0.0 {
                    return (0.0, [0.0; 2]);
                }
                let c = -4.0 * q / (radius * radius);
                (q * q, [c * dx, c * dy])
            }
        }
    }

    pub fn value(&self, x: &Point, t: f64) -> f64 {
        let (bv, _) = self.bump(x);
        let s = (x[0] - self.x0) / self.width;
        bv * s.powi(self.a as i32) * (t / self.t_final).powi(self.b as i32)
    }

    pub fn gradient(&self, x: &Point, t: f64) -> [f64; 2] {
        let (bv, bg) = self.bump(x);
        let s = (x[0] - self.x0) / self.width;
        let sa = s.powi(self.a as i32);
        let dsa = if self.a == 0 {
            0.0
        } else {
            self.a as f64 * s.powi(self.a as i32 - 1) / self.width
        };
        let tb = (t / self.t_final).powi(self.b as i32);
        [(bg[0] * sa + bv * dsa) * tb, bg[1] * sa * tb]
    }
}
