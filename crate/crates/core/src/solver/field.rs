use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::grid::Grid;

/// Nodal values on a grid at a sequence of time levels. The first slice is
/// the initial datum.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    grid: Arc<Grid>,
    times: Vec<f64>,
    slices: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn new(grid: Arc<Grid>, times: Vec<f64>, slices: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != slices.len() || times.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} times for {} slices",
                times.len(),
                slices.len()
            )));
        }
        let n = grid.node_count();
        for (k, s) in slices.iter().enumerate() {
            if s.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "slice {k} has {} values, grid has {n} nodes",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("slice {k} has non-finite values")));
            }
        }
        Ok(SpaceTimeField {
            grid,
            times,
            slices,
        })
    }

    /// Single time level, for stationary fields.
    pub fn stationary(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, vec![0.0], vec![values])
    }

    /// Samples `f(x, t)` at every node and time level of the grid; Dirichlet
    /// nodes are set to zero.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2], f64) -> f64) -> Result<Self> {
        let times = grid.times();
        let slices = times
            .iter()
            .map(|&t| {
                (0..grid.node_count())
                    .map(|k| if grid.is_dirichlet(k) { 0.0 } else { f(grid.node(k), t) })
                    .collect()
            })
            .collect();
        Self::new(grid, times, slices)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn slice(&self, n: usize) -> &[f64] {
        &self.slices[n]
    }

    pub fn last(&self) -> &[f64] {
        self.slices.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Whether every time level of the grid is stored.
    pub fn is_complete(&self) -> bool {
        self.slices.len() == self.grid.steps() + 1
    }

    /// Time weight of each stored level in space-time sums: `dt` for levels
    /// after the initial one (right-endpoint rule), `0` for the initial level.
    /// Stationary fields get weight one.
    pub fn time_weights(&self) -> Vec<f64> {
        if self.slices.len() == 1 {
            return vec![1.0];
        }
        let mut w = vec![0.0; self.times.len()];
        for n in 1..self.times.len() {
            w[n] = self.times[n] - self.times[n - 1];
        }
        w
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpaceTimeField {
        SpaceTimeField {
            grid: self.grid.clone(),
            times: self.times.clone(),
            slices: self
                .slices
                .iter()
                .map(|s| s.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    pub fn sup_l1(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| l1_norm(&self.grid, s))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.slices
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Space-time `L^q` norm with lumped mass in space.
    pub fn lq_norm(&self, q: f64) -> f64 {
        let w = self.time_weights();
        let m = self.grid.node_weights();
        let mut acc = 0.0;
        for (n, s) in self.slices.iter().enumerate() {
            if w[n] == 0.0 {
                continue;
            }
            acc += w[n] * s.iter().zip(m).map(|(v, mi)| mi * v.abs().powf(q)).sum::<f64>();
        }
        acc.powf(1.0 / q)
    }

    /// Space-time `L^q` norm of the gradient.
    pub fn gradient_lq_norm(&self, q: f64) -> f64 {
        let w = self.time_weights();
        let mut acc = 0.0;
        for (n, s) in self.slices.iter().enumerate() {
            if w[n] == 0.0 {
                continue;
            }
            acc += w[n] * gradient_lq(&self.grid, s, q).powf(q);
        }
        acc.powf(1.0 / q)
    }

    /// Discrete `X` norm `||z||_{L^q(Q)} + ||grad z||_{L^q(Q)}`.
    pub fn x_norm(&self, q: f64) -> f64 {
        self.lq_norm(q) + self.gradient_lq_norm(q)
    }

    pub fn sub(&self, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        if self.slices.len() != other.slices.len()
            || self.grid.node_count() != other.grid.node_count()
        {
            return Err(Error::ShapeMismatch("fields differ in shape".into()));
        }
        Ok(SpaceTimeField {
            grid: self.grid.clone(),
            times: self.times.clone(),
            slices: self
                .slices
                .iter()
                .zip(&other.slices)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        })
    }

    /// Flat little-endian `f64` dump (slice-major) plus a CSV index of
    /// `level,time,offset`.
    pub fn write_snapshots(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut bin = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.bin")))?);
        let mut idx = String::from("level,time,offset_values\n");
        let mut offset = 0usize;
        for (n, s) in self.slices.iter().enumerate() {
            for v in s {
                bin.write_all(&v.to_le_bytes())?;
            }
            idx.push_str(&format!("{n},{:.12e},{offset}\n", self.times[n]));
            offset += s.len();
        }
        bin.flush()?;
        std::fs::write(dir.join(format!("{stem}_index.csv")), idx)?;
        Ok(())
    }

    pub fn read_snapshots(grid: Arc<Grid>, dir: &Path, stem: &str) -> Result<Self> {
        let bytes = std::fs::read(dir.join(format!("{stem}.bin")))?;
        let idx = std::fs::read_to_string(dir.join(format!("{stem}_index.csv")))?;
        let n = grid.node_count();
        let mut times = Vec::new();
        let mut slices = Vec::new();
        for line in idx.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Config(format!("bad index line '{line}'")));
            }
            let t: f64 = cols[1]
                .parse()
                .map_err(|_| Error::Config(format!("bad time '{}'", cols[1])))?;
            let off: usize = cols[2]
                .parse()
                .map_err(|_| Error::Config(format!("bad offset '{}'", cols[2])))?;
            if (off + n) * 8 > bytes.len() {
                return Err(Error::ShapeMismatch("snapshot file too short".into()));
            }
            let s = (0..n)
                .map(|k| {
                    let b = &bytes[(off + k) * 8..(off + k + 1) * 8];
                    f64::from_le_bytes(b.try_into().unwrap())
                })
                .collect();
            times.push(t);
            slices.push(s);
        }
        Self::new(grid, times, slices)
    }
}

pub fn l1_norm(grid: &Grid, u: &[f64]) -> f64 {
    u.iter().zip(grid.node_weights()).map(|(v, m)| m * v.abs()).sum()
}

pub fn linf_norm(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn lq_norm(grid: &Grid, u: &[f64], q: f64) -> f64 {
    u.iter()
        .zip(grid.node_weights())
        .map(|(v, m)| m * v.abs().powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

pub fn gradient_lq(grid: &Grid, u: &[f64], q: f64) -> f64 {
    grid.elements()
        .iter()
        .map(|e| {
            let g = e.gradient(u);
            e.volume * (g[0] * g[0] + g[1] * g[1]).powf(0.5 * q)
        })
        .sum::<f64>()
        .powf(1.0 / q)
}

/// `|grad u|` on each element.
pub fn gradient_magnitudes(grid: &Grid, u: &[f64]) -> Vec<f64> {
    grid.elements()
        .iter()
        .map(|e| {
            let g = e.gradient(u);
            (g[0] * g[0] + g[1] * g[1]).sqrt()
        })
        .collect()
}

/// Per-run numbers carried into output metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub p: f64,
    pub eps_reg: f64,
    pub newton_tol: f64,
    pub steps: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
    pub factorizations: usize,
    pub semi_implicit_steps: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_of_constant_and_linear() {
        let g = Arc::new(Grid::interval(0.0, 1.0, 10).unwrap().with_time(1.0, 4).unwrap());
        let f = SpaceTimeField::from_fn(g.clone(), |x, _| x[0]).unwrap();
        // interior nodes carry x, boundary zero; gradient 1 except the last cell
        assert!((f.lq_norm(1.0) - 0.45).abs() < 1e-12);
        let slice = f.slice(1);
        let gl = gradient_lq(&g, slice, 2.0).powi(2);
        assert!((gl - (0.9 + 0.1 * 81.0)).abs() < 1e-9);
    }

    #[test]
    fn snapshot_roundtrip() {
        let g = Arc::new(Grid::square(0.0, 1.0, 4).unwrap().with_time(1.0, 2).unwrap());
        let f = SpaceTimeField::from_fn(g.clone(), |x, t| x[0] * x[1] + t).unwrap();
        let dir = tempfile::tempdir().unwrap();
        f.write_snapshots(dir.path(), "u").unwrap();
        let r = SpaceTimeField::read_snapshots(g, dir.path(), "u").unwrap();
        assert_eq!(r.slices(), f.slices());
        assert_eq!(r.times(), f.times());
    }
}
