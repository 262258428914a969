use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial point in up to two dimensions; unused coordinates are zero.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainShape {
    /// The full box; Dirichlet data on the box boundary.
    Box,
    /// Nodes at distance `>= radius` from `center` are Dirichlet nodes.
    Disc { center: Point, radius: f64 },
}

/// Serializable description from which a [`Grid`] is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub lower: Point,
    pub upper: Point,
    /// Cells along the first axis; the second axis count follows from the
    /// requirement of square cells.
    pub cells: usize,
    #[serde(default = "default_shape")]
    pub shape: DomainShape,
    #[serde(rename = "T", default = "default_t")]
    pub t_final: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_shape() -> DomainShape {
    DomainShape::Box
}
fn default_t() -> f64 {
    1.0
}
fn default_steps() -> usize {
    1
}

/// One P1 element: a segment in 1D or a right triangle in 2D.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub nodes: [usize; 3],
    pub count: usize,
    /// Gradient of each local shape function.
    pub dphi: [[f64; 2]; 3],
    pub volume: f64,
    pub centroid: Point,
}

impl Element {
    pub fn gradient(&self, u: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for a in 0..self.count {
            let v = u[self.nodes[a]];
            g[0] += v * self.dphi[a][0];
            g[1] += v * self.dphi[a][1];
        }
        g
    }
}

/// Uniform tensor grid on an axis-aligned box (N = 1 or 2) with a uniform
/// time ladder on `[0, T]`.
#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    lower: Point,
    h: f64,
    cells: [usize; 2],
    shape: DomainShape,
    t_final: f64,
    steps: usize,
    dirichlet: Vec<bool>,
    weights: Vec<f64>,
    elements: Vec<Element>,
}

impl Grid {
    pub fn interval(a: f64, b: f64, cells: usize) -> Result<Self> {
        Self::from_spec(&GridSpec {
            dim: 1,
            lower: [a, 0.0],
            upper: [b, 0.0],
            cells,
            shape: DomainShape::Box,
            t_final: 1.0,
            steps: 1,
        })
    }

    pub fn square(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Self::from_spec(&GridSpec {
            dim: 2,
            lower: [lo, lo],
            upper: [hi, hi],
            cells,
            shape: DomainShape::Box,
            t_final: 1.0,
            steps: 1,
        })
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        if spec.dim != 1 && spec.dim != 2 {
            return Err(Error::UnsupportedRegime(format!(
                "grid dimension {} (only 1 and 2 are supported)",
                spec.dim
            )));
        }
        if spec.cells < 2 {
            return Err(Error::invalid("need at least two cells"));
        }
        let lx = spec.upper[0] - spec.lower[0];
        if !(lx > 0.0) {
            return Err(Error::invalid("empty box"));
        }
        let h = lx / spec.cells as f64;
        let ny = if spec.dim == 2 {
            let ly = spec.upper[1] - spec.lower[1];
            let ny = (ly / h).round();
            if !(ny >= 2.0) || ((ny * h - ly).abs() > 1e-9 * ly.abs()) {
                return Err(Error::invalid("box side lengths must give square cells"));
            }
            ny as usize
        } else {
            0
        };
        if !(spec.t_final > 0.0) || spec.steps == 0 {
            return Err(Error::invalid("need T > 0 and at least one time step"));
        }
        if let DomainShape::Disc { radius, .. } = spec.shape {
            if !(radius > 0.0) {
                return Err(Error::invalid("disc radius must be positive"));
            }
        }
        let mut g = Grid {
            dim: spec.dim,
            lower: spec.lower,
            h,
            cells: [spec.cells, ny],
            shape: spec.shape.clone(),
            t_final: spec.t_final,
            steps: spec.steps,
            dirichlet: Vec::new(),
            weights: Vec::new(),
            elements: Vec::new(),
        };
        g.build();
        Ok(g)
    }

    pub fn with_time(mut self, t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || steps == 0 {
            return Err(Error::invalid("need T > 0 and at least one time step"));
        }
        self.t_final = t_final;
        self.steps = steps;
        Ok(self)
    }

    pub fn with_disc(mut self, center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid("disc radius must be positive"));
        }
        self.shape = DomainShape::Disc { center, radius };
        self.build();
        Ok(self)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim,
            lower: self.lower,
            upper: self.upper(),
            cells: self.cells[0],
            shape: self.shape.clone(),
            t_final: self.t_final,
            steps: self.steps,
        }
    }

    fn build(&mut self) {
        let n = self.node_count();
        self.dirichlet = (0..n).map(|i| self.compute_dirichlet(i)).collect();
        self.weights = (0..n).map(|i| self.compute_weight(i)).collect();
        self.elements = self.compute_elements();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn t_final(&self) -> f64 {
        self.t_final
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }
    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }
    pub fn lower(&self) -> Point {
        self.lower
    }
    pub fn upper(&self) -> Point {
        let mut u = self.lower;
        u[0] += self.cells[0] as f64 * self.h;
        if self.dim == 2 {
            u[1] += self.cells[1] as f64 * self.h;
        }
        u
    }
    /// Cells per axis.
    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }
    pub fn nodes_per_axis(&self) -> [usize; 2] {
        [self.cells[0] + 1, if self.dim == 2 { self.cells[1] + 1 } else { 1 }]
    }
    pub fn node_count(&self) -> usize {
        let [a, b] = self.nodes_per_axis();
        a * b
    }
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + j * (self.cells[0] + 1)
    }
    pub fn ij(&self, k: usize) -> (usize, usize) {
        let nx = self.cells[0] + 1;
        (k % nx, k / nx)
    }
    pub fn node(&self, k: usize) -> Point {
        let (i, j) = self.ij(k);
        [
            self.lower[0] + i as f64 * self.h,
            if self.dim == 2 {
                self.lower[1] + j as f64 * self.h
            } else {
                0.0
            },
        ]
    }
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| n as f64 * self.dt()).collect()
    }
    pub fn is_dirichlet(&self, k: usize) -> bool {
        self.dirichlet[k]
    }
    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }
    /// Trapezoidal quadrature weights; equal to the lumped P1 mass.
    pub fn node_weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }
    /// Half bandwidth of the node-ordered P1 stiffness pattern.
    pub fn bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.cells[0] + 2
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            DomainShape::Disc { radius, .. } => 2.0 * radius,
            DomainShape::Box => {
                let u = self.upper();
                let dx = u[0] - self.lower[0];
                let dy = u[1] - self.lower[1];
                (dx * dx + dy * dy).sqrt()
            }
        }
    }

    /// Lebesgue measure of the domain.
    pub fn domain_volume(&self) -> f64 {
        match &self.shape {
            DomainShape::Disc { radius, .. } => {
                if self.dim == 1 {
                    2.0 * radius
                } else {
                    std::f64::consts::PI * radius * radius
                }
            }
            DomainShape::Box => {
                let u = self.upper();
                if self.dim == 1 {
                    u[0] - self.lower[0]
                } else {
                    (u[0] - self.lower[0]) * (u[1] - self.lower[1])
                }
            }
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        let u = self.upper();
        let inside_box = x[0] > self.lower[0]
            && x[0] < u[0]
            && (self.dim == 1 || (x[1] > self.lower[1] && x[1] < u[1]));
        inside_box
            && match &self.shape {
                DomainShape::Box => true,
                DomainShape::Disc { center, radius } => dist(x, center, self.dim) < *radius,
            }
    }

    /// Distance from `x` to the boundary of the domain.
    pub fn boundary_distance(&self, x: &Point) -> f64 {
        let u = self.upper();
        let mut d = (x[0] - self.lower[0]).min(u[0] - x[0]);
        if self.dim == 2 {
            d = d.min(x[1] - self.lower[1]).min(u[1] - x[1]);
        }
        if let DomainShape::Disc { center, radius } = &self.shape {
            d = d.min(radius - dist(x, center, self.dim));
        }
        d
    }

    fn compute_dirichlet(&self, k: usize) -> bool {
        let (i, j) = self.ij(k);
        let on_box = i == 0
            || i == self.cells[0]
            || (self.dim == 2 && (j == 0 || j == self.cells[1]));
        if on_box {
            return true;
        }
        match &self.shape {
            DomainShape::Box => false,
            DomainShape::Disc { center, radius } => {
                dist(&self.node(k), center, self.dim) >= radius - 1e-12 * radius
            }
        }
    }

    fn compute_weight(&self, k: usize) -> f64 {
        let (i, j) = self.ij(k);
        let mut w = self.h;
        if i == 0 || i == self.cells[0] {
            w *= 0.5;
        }
        if self.dim == 2 {
            w *= self.h;
            if j == 0 || j == self.cells[1] {
                w *= 0.5;
            }
        }
        w
    }

    fn compute_elements(&self) -> Vec<Element> {
        let h = self.h;
        let mut out = Vec::new();
        if self.dim == 1 {
            for i in 0..self.cells[0] {
                let x0 = self.node(i)[0];
                out.push(Element {
                    nodes: [i, i + 1, 0],
                    count: 2,
                    dphi: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]],
                    volume: h,
                    centroid: [x0 + 0.5 * h, 0.0],
                });
            }
            return out;
        }
        let ih = 1.0 / h;
        for j in 0..self.cells[1] {
            for i in 0..self.cells[0] {
                let a = self.index(i, j);
                let b = self.index(i + 1, j);
                let c = self.index(i + 1, j + 1);
                let d = self.index(i, j + 1);
                let p = self.node(a);
                // lower-right triangle (a, b, c)
                out.push(Element {
                    nodes: [a, b, c],
                    count: 3,
                    dphi: [[-ih, 0.0], [ih, -ih], [0.0, ih]],
                    volume: 0.5 * h * h,
                    centroid: [p[0] + 2.0 * h / 3.0, p[1] + h / 3.0],
                });
                // upper-left triangle (a, c, d)
                out.push(Element {
                    nodes: [a, c, d],
                    count: 3,
                    dphi: [[0.0, -ih], [ih, 0.0], [-ih, ih]],
                    volume: 0.5 * h * h,
                    centroid: [p[0] + h / 3.0, p[1] + 2.0 * h / 3.0],
                });
            }
        }
        out
    }

    /// Nodal weights of the hat interpolant of a point mass at `x`; the
    /// returned weights sum to one.
    pub fn hat_weights(&self, x: &Point) -> Vec<(usize, f64)> {
        let fx = ((x[0] - self.lower[0]) / self.h).clamp(0.0, self.cells[0] as f64);
        let i0 = (fx.floor() as usize).min(self.cells[0] - 1);
        let sx = fx - i0 as f64;
        if self.dim == 1 {
            return [(i0, 1.0 - sx), (i0 + 1, sx)]
                .into_iter()
                .filter(|(_, w)| *w > 0.0)
                .collect();
        }
        let fy = ((x[1] - self.lower[1]) / self.h).clamp(0.0, self.cells[1] as f64);
        let j0 = (fy.floor() as usize).min(self.cells[1] - 1);
        let sy = fy - j0 as f64;
        [
            (self.index(i0, j0), (1.0 - sx) * (1.0 - sy)),
            (self.index(i0 + 1, j0), sx * (1.0 - sy)),
            (self.index(i0, j0 + 1), (1.0 - sx) * sy),
            (self.index(i0 + 1, j0 + 1), sx * sy),
        ]
        .into_iter()
        .filter(|(_, w)| *w > 0.0)
        .collect()
    }

    /// Index of the time step whose interval `(t_{n-1}, t_n]` contains `t`
    /// (returned as `n`, 1-based; `t = 0` maps to the first step).
    pub fn step_containing(&self, t: f64) -> usize {
        let dt = self.dt();
        let n = (t / dt).ceil() as isize;
        n.clamp(1, self.steps as isize) as usize
    }
}

pub fn dist(a: &Point, b: &Point, dim: usize) -> f64 {
    let dx = a[0] - b[0];
    if dim == 1 {
        return dx.abs();
    }
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lumped_mass_matches_domain_volume() {
        let g = Grid::square(-1.0, 1.0, 8).unwrap();
        let total: f64 = g.node_weights().iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
        let vol: f64 = g.elements().iter().map(|e| e.volume).sum();
        assert!((vol - 4.0).abs() < 1e-12);
    }

    #[test]
    fn element_gradients_exact_for_linear() {
        let g = Grid::square(0.0, 1.0, 4).unwrap();
        let u: Vec<f64> = (0..g.node_count())
            .map(|k| {
                let x = g.node(k);
                2.0 * x[0] - 3.0 * x[1] + 1.0
            })
            .collect();
        for e in g.elements() {
            let gr = e.gradient(&u);
            assert!((gr[0] - 2.0).abs() < 1e-12 && (gr[1] + 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hat_weights_preserve_mass_and_first_moment() {
        let g = Grid::square(0.0, 1.0, 10).unwrap();
        let x = [0.337, 0.712];
        let w = g.hat_weights(&x);
        let s: f64 = w.iter().map(|(_, v)| v).sum();
        assert!((s - 1.0).abs() < 1e-15);
        let mx: f64 = w.iter().map(|(k, v)| v * g.node(*k)[0]).sum();
        let my: f64 = w.iter().map(|(k, v)| v * g.node(*k)[1]).sum();
        assert!((mx - x[0]).abs() < 1e-14 && (my - x[1]).abs() < 1e-14);
    }

    #[test]
    fn disc_marks_outside_nodes() {
        let g = Grid::square(-1.0, 1.0, 16)
            .unwrap()
            .with_disc([0.0, 0.0], 0.9)
            .unwrap();
        for k in 0..g.node_count() {
            let x = g.node(k);
            if (x[0] * x[0] + x[1] * x[1]).sqrt() >= 0.9 {
                assert!(g.is_dirichlet(k));
            }
        }
        assert!(!g.is_dirichlet(g.index(8, 8)));
    }

    #[test]
    fn rejects_three_dimensions() {
        let spec = GridSpec {
            dim: 3,
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
            cells: 4,
            shape: DomainShape::Box,
            t_final: 1.0,
            steps: 1,
        };
        assert!(matches!(Grid::from_spec(&spec), Err(Error::UnsupportedRegime(_))));
    }
}
