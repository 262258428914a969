use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{Ambient, DiscreteMeasure};
use crate::solver::radial::{ball_volume, sphere_area};

/// Point in up to three dimensions; unused coordinates are zero.
pub type Point3 = [f64; 3];

pub fn dist3(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn lift(x: &[f64; 2]) -> Point3 {
    [x[0], x[1], 0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolffConfig {
    /// Truncation radius `R`.
    #[serde(rename = "R")]
    pub r: f64,
    /// Log-spaced quadrature nodes.
    pub nodes: usize,
    pub p: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl WolffConfig {
    pub fn new(p: f64, n: usize, r: f64) -> Self {
        WolffConfig { r, nodes: 200, p, n }
    }

    /// `R = 2 diam(Omega)`.
    pub fn for_domain(p: f64, n: usize, diameter: f64) -> Self {
        Self::new(p, n, 2.0 * diameter)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || self.nodes < 8 || !(self.p > 1.0) || self.n == 0 {
            return Err(Error::invalid(format!("bad Wolff configuration {self:?}")));
        }
        if self.p > self.n as f64 {
            return Err(Error::UnsupportedRegime(format!(
                "Wolff potential with p = {} > N = {}",
                self.p, self.n
            )));
        }
        Ok(())
    }

    /// `p = N`: the potential of an atom is logarithmic.
    pub fn is_borderline(&self) -> bool {
        self.p == self.n as f64
    }

    /// `(p - N)/(p - 1)`, the power of `t` in the atomic integrand.
    fn alpha(&self) -> f64 {
        (self.p - self.n as f64) / (self.p - 1.0)
    }
}

#[derive(Clone)]
enum Diffuse {
    None,
    /// Lumped masses at points with the density value each stands for.
    Cells {
        points: Vec<(Point3, f64)>,
        density: Vec<f64>,
        resolution: f64,
    },
    /// Radial density about the origin lumped on spheres `(radius, mass)`.
    Shells {
        n_dim: usize,
        shells: Vec<(f64, f64)>,
        density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        spacing: f64,
    },
}

/// Nonnegative measure in `R^N` seen through its ball masses.
#[derive(Clone)]
pub struct PotentialMeasure {
    pub atoms: Vec<(Point3, f64)>,
    diffuse: Diffuse,
}

impl std::fmt::Debug for PotentialMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PotentialMeasure")
            .field("atoms", &self.atoms)
            .field("diffuse_mass", &self.diffuse_mass())
            .finish()
    }
}

const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

impl PotentialMeasure {
    pub fn zero() -> Self {
        PotentialMeasure {
            atoms: Vec::new(),
            diffuse: Diffuse::None,
        }
    }

    pub fn atoms(atoms: Vec<(Point3, f64)>) -> Result<Self> {
        let m = PotentialMeasure {
            atoms,
            diffuse: Diffuse::None,
        };
        m.check()?;
        Ok(m)
    }

    /// Masses `m_i` at points standing for a density (`density[i]` is its
    /// value there); below `resolution` ball masses use that value.
    pub fn cells(atoms: Vec<(Point3, f64)>, points: Vec<(Point3, f64)>, density: Vec<f64>, resolution: f64) -> Result<Self> {
        if points.len() != density.len() {
            return Err(Error::ShapeMismatch("one density value per cell".into()));
        }
        let m = PotentialMeasure {
            atoms,
            diffuse: Diffuse::Cells {
                points,
                density,
                resolution,
            },
        };
        m.check()?;
        Ok(m)
    }

    /// Spatial grid measure: atoms plus lumped nodal density masses.
    pub fn from_measure(mu: &DiscreteMeasure) -> Result<Self> {
        if mu.ambient != Ambient::Space {
            return Err(Error::invalid("potentials need a measure on Omega"));
        }
        if !mu.is_nonnegative() {
            return Err(Error::NegativeData("potentials need a nonnegative measure".into()));
        }
        let atoms = mu.atoms.iter().map(|a| (lift(&a.x), a.weight)).collect();
        let grid = mu.grid();
        match &mu.density {
            None => Self::atoms(atoms),
            Some(f) => {
                let m = grid.node_weights();
                let (mut pts, mut dens) = (Vec::new(), Vec::new());
                for (k, v) in f.level(0).iter().enumerate() {
                    if *v > 0.0 {
                        pts.push((lift(&grid.node(k)), m[k] * v));
                        dens.push(*v);
                    }
                }
                Self::cells(atoms, pts, dens, grid.h())
            }
        }
    }

    /// `w delta_0 + f(|x|) dx` in `R^N` with `f` lumped on `shells`
    /// log-spaced spheres up to `r_max`.
    pub fn radial(
        n_dim: usize,
        origin_weight: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        r_max: f64,
        shells: usize,
    ) -> Result<Self> {
        if n_dim == 0 || shells < 2 || !(r_max > 0.0) {
            return Err(Error::invalid("radial measure needs N >= 1, r_max > 0, two shells"));
        }
        let r_min = r_max * 1e-6;
        let ratio = (r_max / r_min).ln() / shells as f64;
        let area = sphere_area(n_dim);
        let mut lumped = Vec::with_capacity(4 * shells);
        for i in 0..shells {
            let (a, b) = (r_min * (ratio * i as f64).exp(), r_min * (ratio * (i + 1) as f64).exp());
            for (x, w) in GL4 {
                let r = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let m = 0.5 * (b - a) * w * f(r) * area * r.powi(n_dim as i32 - 1);
                if m != 0.0 {
                    lumped.push((r, m));
                }
            }
        }
        let atoms = if origin_weight != 0.0 {
            vec![([0.0; 3], origin_weight)]
        } else {
            Vec::new()
        };
        let m = PotentialMeasure {
            atoms,
            diffuse: Diffuse::Shells {
                n_dim,
                shells: lumped,
                density: Arc::new(f),
                spacing: ratio,
            },
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let bad_atom = self.atoms.iter().any(|(_, w)| !(*w >= 0.0));
        let bad_diffuse = match &self.diffuse {
            Diffuse::None => false,
            Diffuse::Cells { points, .. } => points.iter().any(|(_, m)| !(*m >= 0.0)),
            Diffuse::Shells { shells, .. } => shells.iter().any(|(_, m)| !(*m >= 0.0)),
        };
        if bad_atom || bad_diffuse {
            return Err(Error::NegativeData("potentials need a nonnegative measure".into()));
        }
        Ok(())
    }

    /// Multiplies every mass by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.atoms.iter_mut().for_each(|a| a.1 *= c);
        match &mut out.diffuse {
            Diffuse::None => {}
            Diffuse::Cells { points, density, .. } => {
                points.iter_mut().for_each(|p| p.1 *= c);
                density.iter_mut().for_each(|d| *d *= c);
            }
            Diffuse::Shells { shells, density, .. } => {
                shells.iter_mut().for_each(|s| s.1 *= c);
                let f = density.clone();
                *density = Arc::new(move |r| c * f(r));
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.total_mass() == 0.0
    }

    pub fn has_diffuse(&self) -> bool {
        !matches!(self.diffuse, Diffuse::None)
    }

    fn diffuse_mass(&self) -> f64 {
        match &self.diffuse {
            Diffuse::None => 0.0,
            Diffuse::Cells { points, .. } => points.iter().map(|p| p.1).sum(),
            Diffuse::Shells { shells, .. } => shells.iter().map(|s| s.1).sum(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.diffuse_mass()
    }

    /// `omega(B(x, t))` with the open ball.
    pub fn ball_mass(&self, x: &Point3, t: f64, n: usize) -> f64 {
        self.at(x, n).ball_mass(t)
    }

    fn at(&self, x: &Point3, n: usize) -> Centered<'_> {
        let mut atoms: Vec<(f64, f64)> = self.atoms.iter().map(|(y, w)| (dist3(x, y), *w)).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = 0.0;
        let atoms: Vec<(f64, f64)> = atoms
            .into_iter()
            .map(|(d, w)| {
                cum += w;
                (d, cum)
            })
            .collect();
        let diffuse = match &self.diffuse {
            Diffuse::None => CenteredDiffuse::None,
            Diffuse::Cells {
                points,
                density,
                resolution,
            } => {
                let mut d: Vec<(f64, f64, f64)> = points
                    .iter()
                    .zip(density)
                    .map(|((y, m), rho)| (dist3(x, y), *m, *rho))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0));
                let local = d.first().map_or(0.0, |c| c.2);
                let mut cum = 0.0;
                CenteredDiffuse::Sorted {
                    cum: d
                        .into_iter()
                        .map(|(r, m, _)| {
                            cum += m;
                            (r, cum)
                        })
                        .collect(),
                    local,
                    resolution: *resolution,
                }
            }
            Diffuse::Shells {
                n_dim,
                shells,
                density,
                spacing,
            } => {
                let d = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                CenteredDiffuse::Shells {
                    n_dim: *n_dim,
                    d,
                    shells,
                    local: density(d.max(1e-300)),
                    resolution: d * spacing,
                }
            }
        };
        Centered { atoms, diffuse, n }
    }
}

enum CenteredDiffuse<'a> {
    None,
    Sorted {
        cum: Vec<(f64, f64)>,
        local: f64,
        resolution: f64,
    },
    Shells {
        n_dim: usize,
        d: f64,
        shells: &'a [(f64, f64)],
        local: f64,
        resolution: f64,
    },
}

/// Ball masses around one point.
struct Centered<'a> {
    /// (distance, cumulative weight) sorted by distance.
    atoms: Vec<(f64, f64)>,
    diffuse: CenteredDiffuse<'a>,
    n: usize,
}

impl Centered<'_> {
    fn atom_mass(&self, t: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 < t);
        if k == 0 {
            0.0
        } else {
            self.atoms[k - 1].1
        }
    }

    fn resolution(&self) -> f64 {
        match &self.diffuse {
            CenteredDiffuse::None => 0.0,
            CenteredDiffuse::Sorted { resolution, .. } | CenteredDiffuse::Shells { resolution, .. } => *resolution,
        }
    }

    fn local_density(&self) -> f64 {
        match &self.diffuse {
            CenteredDiffuse::None => 0.0,
            CenteredDiffuse::Sorted { local, .. } | CenteredDiffuse::Shells { local, .. } => *local,
        }
    }

    fn diffuse_mass(&self, t: f64) -> f64 {
        if t < self.resolution() {
            return self.local_density() * ball_volume(self.n, t);
        }
        match &self.diffuse {
            CenteredDiffuse::None => 0.0,
            CenteredDiffuse::Sorted { cum, .. } => {
                let k = cum.partition_point(|c| c.0 < t);
                if k == 0 {
                    0.0
                } else {
                    cum[k - 1].1
                }
            }
            CenteredDiffuse::Shells { n_dim, d, shells, .. } => {
                shells.iter().map(|(r, m)| m * sphere_fraction(*n_dim, *r, *d, t)).sum()
            }
        }
    }

    fn ball_mass(&self, t: f64) -> f64 {
        self.atom_mass(t) + self.diffuse_mass(t)
    }

    fn has_diffuse(&self) -> bool {
        !matches!(self.diffuse, CenteredDiffuse::None)
    }
}

/// Fraction of the sphere `|y| = r` in `R^N` inside `B(x, t)`, `|x| = d`.
pub fn sphere_fraction(n: usize, r: f64, d: f64, t: f64) -> f64 {
    if r + d < t {
        return 1.0;
    }
    if r > d + t || d > r + t || r == 0.0 || d == 0.0 {
        return if d < t && r == 0.0 { 1.0 } else { 0.0 };
    }
    if n == 1 {
        return 0.5 * (f64::from((r - d).abs() < t) + f64::from(r + d < t));
    }
    let c = ((r * r + d * d - t * t) / (2.0 * r * d)).clamp(-1.0, 1.0);
    let theta = c.acos();
    match n {
        2 => theta / std::f64::consts::PI,
        3 => 0.5 * (1.0 - c),
        _ => {
            let part = sin_power_integral(n - 2, theta);
            let full = sin_power_integral(n - 2, std::f64::consts::PI);
            part / full
        }
    }
}

/// `int_0^theta sin^k` by the reduction formula.
fn sin_power_integral(k: usize, theta: f64) -> f64 {
    match k {
        0 => theta,
        1 => 1.0 - theta.cos(),
        _ => {
            let k_f = k as f64;
            -theta.sin().powi(k as i32 - 1) * theta.cos() / k_f
                + (k_f - 1.0) / k_f * sin_power_integral(k - 2, theta)
        }
    }
}

/// `int_a^b t^{alpha - 1} dt`.
fn power_integral(alpha: f64, a: f64, b: f64) -> f64 {
    if alpha == 0.0 {
        (b / a).ln()
    } else {
        (b.powf(alpha) - a.powf(alpha)) / alpha
    }
}

/// `W^R_{1,p}[omega](x) = int_0^R (t^{p-N} omega(B(x,t)))^{1/(p-1)} dt/t`.
///
/// Exact between atom distances when the measure is atomic; log-spaced
/// Simpson panels for the diffuse part, with the local density power law
/// below the cell resolution.
pub fn wolff_potential(omega: &PotentialMeasure, x: &Point3, cfg: &WolffConfig) -> Result<f64> {
    cfg.validate()?;
    let c = omega.at(x, cfg.n);
    Ok(wolff_centered(&c, cfg))
}

fn wolff_centered(c: &Centered<'_>, cfg: &WolffConfig) -> f64 {
    let (p, n, r) = (cfg.p, cfg.n as f64, cfg.r);
    let e = 1.0 / (p - 1.0);
    let alpha = cfg.alpha();
    if c.atoms.first().is_some_and(|a| a.0 <= 1e-14 * r && a.1 > 0.0) {
        return f64::INFINITY;
    }
    let mut breaks: Vec<f64> = vec![0.0, r];
    breaks.extend(c.atoms.iter().map(|a| a.0).filter(|d| *d > 0.0 && *d < r));
    let diffuse = c.has_diffuse();
    let res = c.resolution().min(r);
    if diffuse {
        let lo = if res > 0.0 { res } else { r * 1e-6 };
        breaks.push(lo);
        let m = cfg.nodes;
        let ratio = (r / lo).ln();
        breaks.extend((1..m).map(|i| lo * (ratio * i as f64 / (m - 1) as f64).exp()));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * r);
    // the atom part is taken from the interval midpoint so that rounding at
    // a break cannot pull an atom across it
    let integrand = |t: f64, atom: f64| (t.powf(p - n) * (atom + c.diffuse_mass(t))).max(0.0).powf(e) / t;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let atom = c.atom_mass(0.5 * (a + b));
        if !diffuse {
            if atom > 0.0 {
                total += atom.powf(e) * power_integral(alpha, a, b);
            }
            continue;
        }
        if a == 0.0 {
            // only the local power law can be present below the first break
            let rho = c.local_density() * ball_volume(cfg.n, 1.0);
            if rho > 0.0 && atom == 0.0 {
                total += rho.powf(e) * b.powf(p * e) / (p * e);
            }
            continue;
        }
        // Simpson in ln t
        let (la, lb) = (a.ln(), b.ln());
        let pieces = 2;
        let hseg = (lb - la) / pieces as f64;
        for k in 0..pieces {
            let s0 = la + k as f64 * hseg;
            let f = |s: f64| {
                let t = s.exp();
                integrand(t, atom) * t
            };
            total += hseg / 6.0 * (f(s0) + 4.0 * f(s0 + 0.5 * hseg) + f(s0 + hseg));
        }
    }
    total
}

/// `h_eta(t) = inf((-ln t)^{-eta}, (ln 2)^{-eta})`.
pub fn h_eta(eta: f64, t: f64) -> f64 {
    (-t.ln()).max(std::f64::consts::LN_2).powf(-eta)
}

/// `M^eta_{p,R}[omega](x) = sup_{0<t<R} omega(B(x,t)) / (t^{N-p} h_eta(t))`
/// over the log-spaced nodes and just past every atom distance.
pub fn maximal_fractional(omega: &PotentialMeasure, x: &Point3, eta: f64, cfg: &WolffConfig) -> Result<f64> {
    cfg.validate()?;
    if !(eta >= 0.0) {
        return Err(Error::invalid("eta must be nonnegative"));
    }
    let c = omega.at(x, cfg.n);
    let (p, n, r) = (cfg.p, cfg.n as f64, cfg.r);
    if c.atoms.first().is_some_and(|a| a.0 <= 1e-14 * r && a.1 > 0.0) && n > p {
        return Ok(f64::INFINITY);
    }
    let lo = if c.has_diffuse() && c.resolution() > 0.0 { c.resolution().min(r) } else { r * 1e-6 };
    let m = cfg.nodes;
    let ratio = (r / lo).ln();
    let mut ts: Vec<f64> = (0..m).map(|i| lo * (ratio * i as f64 / (m - 1) as f64).exp()).collect();
    ts.extend(c.atoms.iter().map(|a| a.0 * (1.0 + 1e-12)).filter(|t| *t > 0.0 && *t < r));
    Ok(ts
        .into_iter()
        .filter(|t| *t < r)
        .map(|t| c.ball_mass(t) / (t.powf(n - p) * h_eta(eta, t)))
        .fold(0.0, f64::max))
}
