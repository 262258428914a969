use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::field::SpaceTimeField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `(1/l) int_t^{t+l} z`
    Forward,
    /// `(1/l) int_{t-l}^t z`
    Backward,
}

/// `int_a^b z(t) dt` nodewise for the piecewise-linear-in-time interpolant.
fn time_integral(z: &SpaceTimeField, a: f64, b: f64) -> Vec<f64> {
    let t = z.times();
    let n = z.grid().node_count();
    let mut out = vec![0.0; n];
    for s in 1..t.len() {
        let lo = t[s - 1].max(a);
        let hi = t[s].min(b);
        if hi <= lo {
            continue;
        }
        let len = t[s] - t[s - 1];
        // trapezoid is exact for linear interpolation on [lo, hi]
        let wl = |x: f64| (t[s] - x) / len;
        let (al, ah) = (wl(lo), wl(hi));
        let (z0, z1) = (z.slice(s - 1), z.slice(s));
        for i in 0..n {
            let vl = al * z0[i] + (1.0 - al) * z1[i];
            let vh = ah * z0[i] + (1.0 - ah) * z1[i];
            out[i] += 0.5 * (hi - lo) * (vl + vh);
        }
    }
    out
}

/// Steklov time average on the stored levels whose window fits inside
/// `[t_0, t_end]`.
pub fn steklov_average(z: &SpaceTimeField, l: f64, direction: Direction) -> Result<SpaceTimeField> {
    let t = z.times();
    let (t0, t1) = (t[0], *t.last().unwrap());
    if !(l > 0.0) || l > t1 - t0 {
        return Err(Error::WindowViolation(format!(
            "averaging length {l} does not fit in [{t0}, {t1}]"
        )));
    }
    let mut times = Vec::new();
    let mut slices = Vec::new();
    for &tn in t {
        let (a, b) = match direction {
            Direction::Forward => (tn, tn + l),
            Direction::Backward => (tn - l, tn),
        };
        if a < t0 - 1e-12 * l || b > t1 + 1e-12 * l {
            continue;
        }
        let mut v = time_integral(z, a, b);
        v.iter_mut().for_each(|x| *x /= l);
        times.push(tn);
        slices.push(v);
    }
    SpaceTimeField::new(z.grid_arc().clone(), times, slices)
}

/// Solves `y_t = nu (w - y)`, `y(0) = z_init` with the exact exponential
/// integrator, holding `w` at each step's right endpoint.
pub fn landes_approx(w: &SpaceTimeField, nu: f64, z_init: &[f64]) -> Result<SpaceTimeField> {
    if z_init.len() != w.grid().node_count() {
        return Err(Error::ShapeMismatch("initial value length differs from grid".into()));
    }
    if !(nu > 0.0) {
        return Err(Error::invalid("relaxation rate must be positive"));
    }
    let t = w.times();
    let mut y = z_init.to_vec();
    let mut slices = vec![y.clone()];
    for s in 1..t.len() {
        let decay = (-nu * (t[s] - t[s - 1])).exp();
        let ws = w.slice(s);
        for i in 0..y.len() {
            y[i] = decay * y[i] + (1.0 - decay) * ws[i];
        }
        slices.push(y.clone());
    }
    SpaceTimeField::new(w.grid_arc().clone(), t.to_vec(), slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::grid::Grid;
    use std::sync::Arc;

    fn grid() -> Arc<Grid> {
        Arc::new(Grid::interval(0.0, 1.0, 8).unwrap().with_time(1.0, 20).unwrap())
    }

    #[test]
    fn steklov_of_linear_time() {
        let z = SpaceTimeField::from_fn(grid(), |_, t| t).unwrap();
        let a = steklov_average(&z, 0.2, Direction::Forward).unwrap();
        for (n, &tn) in a.times().iter().enumerate() {
            assert!((a.slice(n)[3] - (tn + 0.1)).abs() < 1e-13);
            assert_eq!(a.slice(n)[0], 0.0);
        }
        assert!((a.times().last().unwrap() - 0.8).abs() < 1e-12);
        let b = steklov_average(&z, 0.2, Direction::Backward).unwrap();
        assert!((b.slice(0)[2] - (b.times()[0] - 0.1)).abs() < 1e-13);
        assert!(steklov_average(&z, 2.0, Direction::Forward).is_err());
    }

    #[test]
    fn landes_constant_target() {
        let g = grid();
        let w = SpaceTimeField::from_fn(g.clone(), |_, _| 3.0).unwrap();
        let y = landes_approx(&w, 2.0, &vec![0.0; 9]).unwrap();
        for (n, &t) in y.times().iter().enumerate() {
            assert!((y.slice(n)[4] - 3.0 * (1.0 - (-2.0 * t).exp())).abs() < 1e-13);
        }
    }
}
