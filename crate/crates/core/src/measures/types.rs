use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::solver::grid::{Grid, Point};
use crate::solver::step::SliceLoad;
use crate::testfns::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ambient {
    /// Measure on the spatial domain.
    Space,
    /// Measure on the space-time cylinder.
    SpaceTime,
}

/// Nonnegative time profile `F` on `(0, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant { value: f64 },
    /// Indicator of `(a, b)`.
    Window { a: f64, b: f64 },
    /// Expression in `t`.
    Expr { expr: String },
    /// Point mass in time at `t`.
    Instant { t: f64 },
}

const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

impl TimeProfile {
    pub fn validate(&self, t_final: f64) -> Result<()> {
        match self {
            TimeProfile::Constant { value } if *value < 0.0 => {
                Err(Error::NegativeData(format!("time profile value {value}")))
            }
            TimeProfile::Window { a, b } if !(a <= b) => Err(Error::invalid("window needs a <= b")),
            TimeProfile::Instant { t } if !(0.0..=t_final).contains(t) => {
                Err(Error::invalid(format!("instant {t} outside [0, {t_final}]")))
            }
            TimeProfile::Expr { expr } => {
                let e = Expr::parse(expr)?;
                for k in 0..=64 {
                    let t = t_final * k as f64 / 64.0;
                    let v = e.eval(&[("t", t)])?;
                    if v < 0.0 || !v.is_finite() {
                        return Err(Error::NegativeData(format!("profile {expr} is {v} at t = {t}")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `int_a^b F`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        Ok(match self {
            TimeProfile::Constant { value } => value * (b - a),
            TimeProfile::Window { a: wa, b: wb } => (b.min(*wb) - a.max(*wa)).max(0.0),
            TimeProfile::Instant { t } => {
                // a point mass at t = 0 belongs to the first interval
                if (*t > a && *t <= b) || (*t == 0.0 && a == 0.0) {
                    1.0
                } else {
                    0.0
                }
            }
            TimeProfile::Expr { expr } => {
                let e = Expr::parse(expr)?;
                let pieces = 4;
                let w = (b - a) / pieces as f64;
                let mut acc = 0.0;
                for k in 0..pieces {
                    let mid = a + (k as f64 + 0.5) * w;
                    for (x, wt) in GL5 {
                        acc += wt * 0.5 * w * e.eval(&[("t", mid + 0.5 * w * x)])?;
                    }
                }
                acc
            }
        })
    }

    /// `int_0^T F psi(t)` for a smooth `psi`, by the same quadrature.
    pub fn pair(&self, t_final: f64, psi: impl Fn(f64) -> f64) -> Result<f64> {
        match self {
            TimeProfile::Instant { t } => Ok(psi(*t)),
            _ => {
                let pieces = 64;
                let w = t_final / pieces as f64;
                let mut acc = 0.0;
                let e = match self {
                    TimeProfile::Expr { expr } => Some(Expr::parse(expr)?),
                    _ => None,
                };
                for k in 0..pieces {
                    let mid = (k as f64 + 0.5) * w;
                    for (x, wt) in GL5 {
                        let t = mid + 0.5 * w * x;
                        let f = match self {
                            TimeProfile::Constant { value } => *value,
                            TimeProfile::Window { a, b } => f64::from(t > *a && t < *b),
                            _ => e.as_ref().unwrap().eval(&[("t", t)])?,
                        };
                        acc += wt * 0.5 * w * f * psi(t);
                    }
                }
                Ok(acc)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Point,
    pub weight: f64,
    /// Time structure for space-time measures; `None` on `Omega`.
    #[serde(default)]
    pub profile: Option<TimeProfile>,
    /// Tagged as part of the singular component.
    #[serde(default = "yes")]
    pub singular: bool,
}

fn yes() -> bool {
    true
}

/// Nodal values: one entry (time independent), one per time step
/// (densities on `Q`, constant on each step) or one per time level
/// (time-derivative parts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalSeries {
    pub levels: Vec<Vec<f64>>,
}

impl NodalSeries {
    pub fn level(&self, n: usize) -> &[f64] {
        if self.levels.len() == 1 {
            &self.levels[0]
        } else {
            &self.levels[n]
        }
    }

    fn max_abs(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-element vectors: one entry or one per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSeries {
    pub levels: Vec<Vec<[f64; 2]>>,
}

impl ElementSeries {
    pub fn level(&self, n: usize) -> &[[f64; 2]] {
        if self.levels.len() == 1 {
            &self.levels[0]
        } else {
            &self.levels[n]
        }
    }
}

/// Measure `atoms + f - div g + h_t` realized on a grid.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    grid: Arc<Grid>,
    pub ambient: Ambient,
    pub atoms: Vec<Atom>,
    pub density: Option<NodalSeries>,
    pub divergence: Option<ElementSeries>,
    pub time_derivative: Option<NodalSeries>,
}

impl DiscreteMeasure {
    pub fn zero(grid: Arc<Grid>, ambient: Ambient) -> Self {
        DiscreteMeasure {
            grid,
            ambient,
            atoms: Vec::new(),
            density: None,
            divergence: None,
            time_derivative: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Entries of a density or divergence series: one on `Omega`, one per
    /// step on `Q`.
    fn series_len(&self) -> usize {
        match self.ambient {
            Ambient::Space => 1,
            Ambient::SpaceTime => self.grid.steps(),
        }
    }

    /// Time at which step entry `n` is sampled (the step midpoint).
    fn sample_time(&self, n: usize) -> f64 {
        match self.ambient {
            Ambient::Space => 0.0,
            Ambient::SpaceTime => (n as f64 + 0.5) * self.grid.dt(),
        }
    }

    pub fn with_atom(mut self, x: Point, weight: f64) -> Self {
        let profile = match self.ambient {
            Ambient::Space => None,
            Ambient::SpaceTime => Some(TimeProfile::Constant { value: 1.0 }),
        };
        self.atoms.push(Atom {
            x,
            weight,
            profile,
            singular: true,
        });
        self
    }

    pub fn with_space_time_atom(mut self, x: Point, t: f64, weight: f64) -> Self {
        self.atoms.push(Atom {
            x,
            weight,
            profile: Some(TimeProfile::Instant { t }),
            singular: true,
        });
        self
    }

    /// Adds a density sampled from `f(x, t)` at the nodes and step
    /// midpoints (boundary nodes included, so that masses are exact; loads
    /// ignore them).
    pub fn with_density(mut self, f: impl Fn(&Point, f64) -> f64) -> Self {
        let levels = (0..self.series_len())
            .map(|n| {
                let t = self.sample_time(n);
                (0..self.grid.node_count())
                    .map(|k| f(&self.grid.node(k), t))
                    .collect()
            })
            .collect();
        self.density = Some(NodalSeries { levels });
        self
    }

    /// Adds `-div g` with `g(x, t)` sampled at element centroids and step
    /// midpoints.
    pub fn with_divergence(mut self, g: impl Fn(&Point, f64) -> [f64; 2]) -> Self {
        let levels = (0..self.series_len())
            .map(|n| {
                let t = self.sample_time(n);
                self.grid.elements().iter().map(|e| g(&e.centroid, t)).collect()
            })
            .collect();
        self.divergence = Some(ElementSeries { levels });
        self
    }

    /// Adds `h_t` with `h(x, t)` sampled at the nodes and time levels
    /// (space-time only; zero on the boundary).
    pub fn with_time_derivative(mut self, h: impl Fn(&Point, f64) -> f64) -> Result<Self> {
        if self.ambient != Ambient::SpaceTime {
            return Err(Error::invalid("time derivative part needs a space-time measure"));
        }
        let times = self.grid.times();
        let levels = (0..=self.grid.steps())
            .map(|n| {
                (0..self.grid.node_count())
                    .map(|k| if self.grid.is_dirichlet(k) { 0.0 } else { h(&self.grid.node(k), times[n]) })
                    .collect()
            })
            .collect();
        self.time_derivative = Some(NodalSeries { levels });
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.node_count();
        let lv = self.series_len();
        let check_len = |len: usize, what: &str| {
            if len != 1 && len != lv {
                return Err(Error::ShapeMismatch(format!("{what} has {len} levels")));
            }
            Ok(())
        };
        if let Some(f) = &self.density {
            check_len(f.levels.len(), "density")?;
            if f.levels.iter().any(|l| l.len() != n) {
                return Err(Error::ShapeMismatch("density length differs from grid".into()));
            }
        }
        if let Some(g) = &self.divergence {
            check_len(g.levels.len(), "divergence part")?;
            if g.levels.iter().any(|l| l.len() != self.grid.elements().len()) {
                return Err(Error::ShapeMismatch("divergence part length differs from grid".into()));
            }
        }
        if let Some(h) = &self.time_derivative {
            if h.levels.len() != self.grid.steps() + 1 || self.ambient != Ambient::SpaceTime {
                return Err(Error::ShapeMismatch("time derivative part needs every level".into()));
            }
        }
        for a in &self.atoms {
            if !self.grid.contains(&a.x) {
                return Err(Error::SupportViolation(format!("atom at {:?} outside the domain", a.x)));
            }
            match (&a.profile, self.ambient) {
                (None, Ambient::SpaceTime) => {
                    return Err(Error::invalid("space-time atoms need a time profile"))
                }
                (Some(_), Ambient::Space) => {
                    return Err(Error::invalid("spatial atoms take no time profile"))
                }
                (Some(p), _) => p.validate(self.grid.t_final())?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Whether every weight, density value and profile is nonnegative and
    /// there are no divergence or time-derivative parts.
    pub fn is_nonnegative(&self) -> bool {
        self.atoms.iter().all(|a| a.weight >= 0.0)
            && self
                .density
                .as_ref()
                .map_or(true, |f| f.levels.iter().flatten().all(|v| *v >= 0.0))
            && self.divergence.is_none()
            && self.time_derivative.is_none()
    }

    /// `int F` of an atom over the horizon (one on `Omega`).
    pub fn atom_time_mass(&self, a: &Atom) -> Result<f64> {
        match &a.profile {
            None => Ok(1.0),
            Some(p) => p.integral(0.0, self.grid.t_final()),
        }
    }

    /// Time weight of each series entry.
    fn entry_weight(&self, len: usize) -> f64 {
        match self.ambient {
            Ambient::Space => 1.0,
            Ambient::SpaceTime if len == 1 => self.grid.t_final(),
            Ambient::SpaceTime => self.grid.dt(),
        }
    }

    fn series_sum(&self, s: &NodalSeries, f: impl Fn(f64) -> f64) -> f64 {
        let m = self.grid.node_weights();
        let w = self.entry_weight(s.levels.len());
        s.levels
            .iter()
            .map(|l| w * l.iter().zip(m).map(|(v, mi)| mi * f(*v)).sum::<f64>())
            .sum()
    }

    pub fn atoms_variation(&self) -> Result<f64> {
        self.atoms
            .iter()
            .map(|a| Ok(a.weight.abs() * self.atom_time_mass(a)?))
            .sum()
    }

    pub fn density_l1(&self) -> f64 {
        self.density.as_ref().map_or(0.0, |f| self.series_sum(f, f64::abs))
    }

    /// `|atoms| + ||f||_1 + ||g||_1 + ||h||_1`.
    pub fn total_variation(&self) -> Result<f64> {
        let mut tv = self.atoms_variation()? + self.density_l1();
        if let Some(g) = &self.divergence {
            tv += vector_lq(&self.grid, self.ambient, g, 1.0);
        }
        if let Some(h) = &self.time_derivative {
            let dt = self.grid.dt();
            let m = self.grid.node_weights();
            tv += h.levels[1..]
                .iter()
                .map(|l| dt * l.iter().zip(m).map(|(v, mi)| mi * v.abs()).sum::<f64>())
                .sum::<f64>();
        }
        Ok(tv)
    }

    /// Signed total mass `mu(Q)` (or `omega(Omega)`): atoms and densities.
    /// Divergence and time-derivative parts carry no net mass.
    pub fn mass(&self) -> Result<f64> {
        let mut m: f64 = self
            .atoms
            .iter()
            .map(|a| Ok(a.weight * self.atom_time_mass(a)?))
            .sum::<Result<f64>>()?;
        if let Some(f) = &self.density {
            m += self.series_sum(f, |v| v);
        }
        Ok(m)
    }

    /// Largest data magnitude, used to scale the default regularization.
    pub fn data_scale(&self) -> f64 {
        let a = self.atoms.iter().fold(0.0f64, |m, a| m.max(a.weight.abs()));
        let f = self.density.as_ref().map_or(0.0, |f| f.max_abs());
        a.max(f).max(1e-300)
    }

    /// Load on `Omega`: `<omega, phi_i>` with hat interpolation of atoms.
    pub fn elliptic_load(&self) -> Result<Vec<f64>> {
        if self.ambient != Ambient::Space {
            return Err(Error::invalid("elliptic load needs a measure on Omega"));
        }
        self.validate()?;
        let mut b = vec![0.0; self.grid.node_count()];
        self.add_nodal_parts(0, 1.0, &mut b);
        for a in &self.atoms {
            for (k, w) in self.grid.hat_weights(&a.x) {
                b[k] += a.weight * w;
            }
        }
        self.zero_fixed(&mut b);
        Ok(b)
    }

    fn zero_fixed(&self, b: &mut [f64]) {
        for (k, v) in b.iter_mut().enumerate() {
            if self.grid.is_dirichlet(k) {
                *v = 0.0;
            }
        }
    }

    /// Adds the density and divergence parts at `level` scaled by `c`
    /// (`level` is ignored for single-level series).
    fn add_nodal_parts(&self, level: usize, c: f64, b: &mut [f64]) {
        let m = self.grid.node_weights();
        if let Some(f) = &self.density {
            for (k, v) in f.level(level).iter().enumerate() {
                b[k] += c * m[k] * v;
            }
        }
        if let Some(g) = &self.divergence {
            for (e, el) in self.grid.elements().iter().enumerate() {
                let ge = g.level(level)[e];
                for l in 0..el.count {
                    b[el.nodes[l]] += c * el.volume * (ge[0] * el.dphi[l][0] + ge[1] * el.dphi[l][1]);
                }
            }
        }
    }

    /// Pairing `<mu, psi>` with exact point evaluation for atoms and grid
    /// quadrature for the other parts.
    pub fn pair(&self, psi: &TestFunction) -> Result<f64> {
        let grid = &self.grid;
        let times = grid.times();
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.weight
                * match &a.profile {
                    None => psi.value(&a.x, 0.0),
                    Some(p) => p.pair(grid.t_final(), |t| psi.value(&a.x, t))?,
                };
        }
        if self.ambient == Ambient::Space {
            let mut b = vec![0.0; grid.node_count()];
            self.add_nodal_parts(0, 1.0, &mut b);
            acc += (0..grid.node_count()).map(|k| b[k] * psi.value(&grid.node(k), 0.0)).sum::<f64>();
        } else {
            let mut b = vec![0.0; grid.node_count()];
            for n in 1..=grid.steps() {
                self.slice_diffuse_load(n, &mut b);
                let t = 0.5 * (times[n - 1] + times[n]);
                acc += grid.dt()
                    * (0..grid.node_count())
                        .map(|k| b[k] * psi.value(&grid.node(k), t))
                        .sum::<f64>();
            }
        }
        Ok(acc)
    }

    /// Diffuse (non-atomic) part of the load of step `step` (1-based).
    fn slice_diffuse_load(&self, step: usize, b: &mut [f64]) {
        b.iter_mut().for_each(|v| *v = 0.0);
        let m = self.grid.node_weights();
        if let Some(f) = &self.density {
            for (k, v) in f.level(step - 1).iter().enumerate() {
                b[k] += m[k] * v;
            }
        }
        if let Some(g) = &self.divergence {
            let ge = g.level(step - 1);
            for (e, el) in self.grid.elements().iter().enumerate() {
                for l in 0..el.count {
                    b[el.nodes[l]] += el.volume * (ge[e][0] * el.dphi[l][0] + ge[e][1] * el.dphi[l][1]);
                }
            }
        }
        if let Some(h) = &self.time_derivative {
            let dt = self.grid.dt();
            let (h0, h1) = (h.level(step - 1), h.level(step));
            for k in 0..b.len() {
                b[k] += m[k] * (h1[k] - h0[k]) / dt;
            }
        }
    }

    /// Atom part of the step load: `w F-mass / dt` spread by hat weights.
    fn slice_atom_load(&self, step: usize, b: &mut [f64]) -> Result<()> {
        let dt = self.grid.dt();
        let (a0, a1) = ((step - 1) as f64 * dt, step as f64 * dt);
        for a in &self.atoms {
            let mass = match &a.profile {
                Some(p) => p.integral(a0, a1)?,
                None => return Err(Error::invalid("spatial atom in a space-time load")),
            };
            if mass == 0.0 {
                continue;
            }
            for (k, w) in self.grid.hat_weights(&a.x) {
                b[k] += a.weight * mass / dt * w;
            }
        }
        Ok(())
    }
}

impl SliceLoad for DiscreteMeasure {
    fn slice_load(&self, grid: &Grid, step: usize, out: &mut [f64]) -> Result<()> {
        if grid.node_count() != self.grid.node_count() {
            return Err(Error::ShapeMismatch("measure and solve grids differ".into()));
        }
        match self.ambient {
            Ambient::Space => {
                // stationary in time
                out.iter_mut().for_each(|v| *v = 0.0);
                self.add_nodal_parts(0, 1.0, out);
                for a in &self.atoms {
                    for (k, w) in self.grid.hat_weights(&a.x) {
                        out[k] += a.weight * w;
                    }
                }
            }
            Ambient::SpaceTime => {
                self.slice_diffuse_load(step, out);
                self.slice_atom_load(step, out)?;
            }
        }
        self.zero_fixed(out);
        Ok(())
    }
}

/// Space-time (or spatial) `L^q` norm of a per-element vector series.
pub fn vector_lq(grid: &Grid, ambient: Ambient, g: &ElementSeries, q: f64) -> f64 {
    let level_sum = |l: &[[f64; 2]]| -> f64 {
        grid.elements()
            .iter()
            .zip(l)
            .map(|(e, v)| e.volume * (v[0] * v[0] + v[1] * v[1]).powf(0.5 * q))
            .sum()
    };
    let w = match ambient {
        Ambient::Space => 1.0,
        Ambient::SpaceTime if g.levels.len() == 1 => grid.t_final(),
        Ambient::SpaceTime => grid.dt(),
    };
    g.levels.iter().map(|l| w * level_sum(l)).sum::<f64>().powf(1.0 / q)
}

/// Space-time `L^q` norms of a nodal series and of its gradient.
pub fn nodal_lq(grid: &Grid, ambient: Ambient, s: &NodalSeries, q: f64) -> (f64, f64) {
    let m = grid.node_weights();
    let level = |l: &[f64]| -> (f64, f64) {
        let v = l.iter().zip(m).map(|(x, mi)| mi * x.abs().powf(q)).sum();
        let g = grid
            .elements()
            .iter()
            .map(|e| {
                let gr = e.gradient(l);
                e.volume * (gr[0] * gr[0] + gr[1] * gr[1]).powf(0.5 * q)
            })
            .sum();
        (v, g)
    };
    let (mut a, mut b) = (0.0, 0.0);
    match ambient {
        Ambient::Space => {
            let r = level(&s.levels[0]);
            a = r.0;
            b = r.1;
        }
        Ambient::SpaceTime => {
            let dt = grid.dt();
            let n = s.levels.len() - 1;
            for (k, l) in s.levels.iter().enumerate() {
                let w = if s.levels.len() == 1 {
                    grid.t_final()
                } else if k == 0 || k == n {
                    0.5 * dt
                } else {
                    dt
                };
                let r = level(l);
                a += w * r.0;
                b += w * r.1;
            }
        }
    }
    (a.powf(1.0 / q), b.powf(1.0 / q))
}
