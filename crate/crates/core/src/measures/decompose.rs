use crate::error::{Error, Result};
use crate::measures::ops::{mollifier_weights, mollify_nodal};
use crate::measures::types::{nodal_lq, vector_lq, Ambient, Atom, DiscreteMeasure, ElementSeries, NodalSeries};
use crate::solver::banded::{BandedCholesky, BandedSym};
use crate::solver::grid::Grid;
use crate::solver::step::SliceLoad;
use crate::testfns::TestFunction;

/// `mu_0 = f - div g + h_t` together with the signed singular atoms.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Atoms not tagged singular and the density part.
    pub f: DiscreteMeasure,
    pub g: Option<ElementSeries>,
    pub h: Option<NodalSeries>,
    pub mu_s_plus: Vec<Atom>,
    pub mu_s_minus: Vec<Atom>,
    pub eps: f64,
    /// Exponent whose conjugate measures `g` and which measures `h`.
    pub p: f64,
    /// Smoothing length used to move content from `g`, `h` into `f`.
    pub sigma: f64,
    pub f_l1: f64,
    pub g_norm: f64,
    pub h_norm: f64,
    /// `|mu_0|(Q)`: total variation of the diffuse part's nodal load.
    pub reference_mass: f64,
    /// `||f||_1 + ||g||_{p'} + ||h||_X`
    pub budget_total: f64,
    /// `||g||_{p'} + ||h||_X`
    pub budget_gh: f64,
}

impl Decomposition {
    pub fn budgets_hold(&self) -> bool {
        let slack = 1e-12 * self.reference_mass.max(1.0);
        self.budget_total <= (1.0 + self.eps) * self.reference_mass + slack && self.budget_gh <= self.eps + slack
    }

    /// `f - div g + h_t` as one measure.
    pub fn diffuse_measure(&self) -> DiscreteMeasure {
        let mut m = self.f.clone();
        m.divergence = self.g.clone();
        m.time_derivative = self.h.clone();
        m
    }
}

/// Lumped mass plus `sigma^2` times the P1 stiffness on all nodes.
fn helmholtz_factor(grid: &Grid, sigma: f64) -> Result<BandedCholesky> {
    let n = grid.node_count();
    let mut a = BandedSym::zeros(n, grid.bandwidth());
    for (k, m) in grid.node_weights().iter().enumerate() {
        a.add(k, k, *m);
    }
    let s2 = sigma * sigma;
    for el in grid.elements() {
        for i in 0..el.count {
            for j in i..el.count {
                let v = s2 * el.volume * (el.dphi[i][0] * el.dphi[j][0] + el.dphi[i][1] * el.dphi[j][1]);
                let (a_, b_) = (el.nodes[i], el.nodes[j]);
                a.add(a_.min(b_), a_.max(b_), v);
            }
        }
    }
    a.cholesky()
}

fn smooth_nodal(grid: &Grid, chol: &BandedCholesky, v: &[f64]) -> Vec<f64> {
    let mut b: Vec<f64> = v.iter().zip(grid.node_weights()).map(|(x, m)| x * m).collect();
    chol.solve_in_place(&mut b);
    b
}

fn smooth_elements(grid: &Grid, chol: &BandedCholesky, g: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = grid.node_count();
    let mut out = vec![[0.0; 2]; g.len()];
    for c in 0..2 {
        let mut acc = vec![0.0; n];
        let mut vol = vec![0.0; n];
        for (e, el) in grid.elements().iter().enumerate() {
            for l in 0..el.count {
                acc[el.nodes[l]] += el.volume * g[e][c];
                vol[el.nodes[l]] += el.volume;
            }
        }
        let nodal: Vec<f64> = acc.iter().zip(&vol).map(|(a, v)| if *v > 0.0 { a / v } else { 0.0 }).collect();
        let s = smooth_nodal(grid, chol, &nodal);
        for (e, el) in grid.elements().iter().enumerate() {
            out[e][c] = (0..el.count).map(|l| s[el.nodes[l]]).sum::<f64>() / el.count as f64;
        }
    }
    out
}

/// Full nodal load (boundary nodes included) of the diffuse parts.
fn unconstrained_loads(mu: &DiscreteMeasure) -> Result<Vec<Vec<f64>>> {
    let grid = mu.grid();
    let n = grid.node_count();
    let m = grid.node_weights();
    let steps = match mu.ambient {
        Ambient::Space => 1,
        Ambient::SpaceTime => grid.steps(),
    };
    let mut out = Vec::with_capacity(steps);
    for s in 0..steps {
        let mut b = vec![0.0; n];
        if let Some(f) = &mu.density {
            for k in 0..n {
                b[k] += m[k] * f.level(s)[k];
            }
        }
        if let Some(g) = &mu.divergence {
            let ge = g.level(s);
            for (e, el) in grid.elements().iter().enumerate() {
                for l in 0..el.count {
                    b[el.nodes[l]] += el.volume * (ge[e][0] * el.dphi[l][0] + ge[e][1] * el.dphi[l][1]);
                }
            }
        }
        if let Some(h) = &mu.time_derivative {
            let dt = grid.dt();
            for k in 0..n {
                b[k] += m[k] * (h.level(s + 1)[k] - h.level(s)[k]) / dt;
            }
        }
        out.push(b);
    }
    Ok(out)
}

fn step_weight(mu: &DiscreteMeasure) -> f64 {
    match mu.ambient {
        Ambient::Space => 1.0,
        Ambient::SpaceTime => mu.grid().dt(),
    }
}

/// Splits a diffuse measure into `(f, g, h)` with
/// `||f||_1 + ||g||_{p'} + ||h||_X <= (1 + eps)|mu_0|` and
/// `||g||_{p'} + ||h||_X <= eps`, keeping as much of the given `g`, `h`
/// as the budget allows; the rest is moved into `f` through a Helmholtz
/// filter of decreasing length.
pub fn decompose(mu0: &DiscreteMeasure, eps: f64, p: f64) -> Result<Decomposition> {
    if !(eps > 0.0) || !(p > 1.0) {
        return Err(Error::invalid("decompose needs eps > 0 and p > 1"));
    }
    mu0.validate()?;
    if mu0.atoms.iter().any(|a| a.singular) {
        return Err(Error::Precondition(
            "decompose expects a diffuse measure; split off singular atoms first".into(),
        ));
    }
    let grid = mu0.grid_arc().clone();
    let m = grid.node_weights();
    let w = step_weight(mu0);
    let loads = unconstrained_loads(mu0)?;
    let atom_tv = mu0.atoms_variation()?;
    let reference_mass =
        atom_tv + loads.iter().map(|b| w * b.iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>();
    let pc = p / (p - 1.0);
    let g_norm_of = |g: &Option<ElementSeries>| g.as_ref().map_or(0.0, |g| vector_lq(&grid, mu0.ambient, g, pc));
    let h_norm_of = |h: &Option<NodalSeries>| {
        h.as_ref().map_or(0.0, |h| {
            let (a, b) = nodal_lq(&grid, mu0.ambient, h, p);
            a + b
        })
    };

    // f built from whatever load is not carried by g', h'
    let assemble = |g_keep: Option<ElementSeries>, h_keep: Option<NodalSeries>, sigma: f64| -> Result<Decomposition> {
        let mut rest = DiscreteMeasure::zero(grid.clone(), mu0.ambient);
        rest.divergence = g_keep.clone();
        rest.time_derivative = h_keep.clone();
        let kept = unconstrained_loads(&rest)?;
        let levels: Vec<Vec<f64>> = loads
            .iter()
            .zip(&kept)
            .map(|(b, k)| b.iter().zip(k).zip(m).map(|((x, y), mi)| (x - y) / mi).collect())
            .collect();
        let mut f = DiscreteMeasure::zero(grid.clone(), mu0.ambient);
        f.atoms = mu0.atoms.clone();
        if levels.iter().flatten().any(|v| *v != 0.0) {
            f.density = Some(NodalSeries { levels });
        }
        let f_l1 = atom_tv + f.density_l1();
        let (g_norm, h_norm) = (g_norm_of(&g_keep), h_norm_of(&h_keep));
        Ok(Decomposition {
            f,
            g: g_keep,
            h: h_keep,
            mu_s_plus: Vec::new(),
            mu_s_minus: Vec::new(),
            eps,
            p,
            sigma,
            f_l1,
            g_norm,
            h_norm,
            reference_mass,
            budget_total: f_l1 + g_norm + h_norm,
            budget_gh: g_norm + h_norm,
        })
    };

    if mu0.divergence.is_none() && mu0.time_derivative.is_none() {
        let d = assemble(None, None, 0.0)?;
        return check_budget(d);
    }
    let diam = grid.diameter();
    for k in 0..40 {
        let sigma = diam * 0.5f64.powi(k);
        let chol = helmholtz_factor(&grid, sigma)?;
        let g_keep = mu0.divergence.as_ref().map(|g| ElementSeries {
            levels: g
                .levels
                .iter()
                .map(|l| {
                    let s = smooth_elements(&grid, &chol, l);
                    l.iter().zip(&s).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect()
                })
                .collect(),
        });
        let h_keep = mu0.time_derivative.as_ref().map(|h| NodalSeries {
            levels: h
                .levels
                .iter()
                .map(|l| {
                    let mut s = smooth_nodal(&grid, &chol, l);
                    for (i, v) in s.iter_mut().enumerate() {
                        if grid.is_dirichlet(i) {
                            *v = 0.0;
                        }
                    }
                    l.iter().zip(&s).map(|(a, b)| a - b).collect()
                })
                .collect(),
        });
        let d = assemble(g_keep, h_keep, sigma)?;
        if d.budgets_hold() {
            return Ok(d);
        }
    }
    // everything moved into f
    check_budget(assemble(None, None, 0.0)?)
}

fn check_budget(d: Decomposition) -> Result<Decomposition> {
    if d.budgets_hold() {
        Ok(d)
    } else {
        Err(Error::BudgetInfeasible(format!(
            "||f||_1 + ||g|| + ||h|| = {} exceeds (1 + {}) * {} or ||g|| + ||h|| = {} exceeds {}",
            d.budget_total, d.eps, d.reference_mass, d.budget_gh, d.eps
        )))
    }
}

/// Largest `|<a - b, phi_i>|` over all nodes and steps, relative to the
/// largest load entry of `b`.
pub fn reassembly_residual(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    let (la, lb) = (unconstrained_loads(a)?, unconstrained_loads(b)?);
    let scale = lb.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let diff = la
        .iter()
        .flatten()
        .zip(lb.iter().flatten())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(diff / scale)
}

#[derive(Debug, Clone)]
pub struct ScheduleEntry {
    pub n: usize,
    /// Mollification scale of the singular atoms, `s_ref 2^{-n}`.
    pub scale: f64,
    pub measure: DiscreteMeasure,
    pub f_l1: f64,
    pub g_norm: f64,
    pub h_norm: f64,
    /// Masses of the smoothed positive and negative singular parts.
    pub rho_mass: f64,
    pub eta_mass: f64,
    pub budget: f64,
    pub budget_ok: bool,
    /// `||f_n - f||_1` against the base decomposition.
    pub f_distance: f64,
    /// `|<mu_n - mu, psi>|` over the fixed test family.
    pub narrow_errors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub base: Decomposition,
    pub reference_mass: f64,
    pub eps: f64,
    pub entries: Vec<ScheduleEntry>,
}

impl Schedule {
    pub fn budgets_hold(&self) -> bool {
        self.entries.iter().all(|e| e.budget_ok)
    }
}

fn split_singular(mu: &DiscreteMeasure) -> (DiscreteMeasure, Vec<Atom>, Vec<Atom>) {
    let mut diffuse = mu.clone();
    diffuse.atoms.retain(|a| !a.singular);
    let plus = mu.atoms.iter().filter(|a| a.singular && a.weight > 0.0).cloned().collect();
    let minus = mu.atoms.iter().filter(|a| a.singular && a.weight < 0.0).cloned().collect();
    (diffuse, plus, minus)
}

fn smooth_atoms(grid: &Grid, atoms: &[Atom], s: f64, clamp: bool) -> Result<Vec<Atom>> {
    let mut out = Vec::new();
    for a in atoms {
        let scale = if clamp { s.min(grid.boundary_distance(&a.x)) } else { s };
        let ws = if scale < grid.h() {
            grid.hat_weights(&a.x)
        } else {
            mollifier_weights(grid, &a.x, scale)?
        };
        for (k, w) in ws {
            out.push(Atom {
                x: grid.node(k),
                weight: a.weight * w,
                profile: a.profile.clone(),
                singular: false,
            });
        }
    }
    Ok(out)
}

/// Approximating data `mu_n = f_n - div g_n + (h_n)_t + rho_n - eta_n`,
/// `n = 1..=n_max`: singular atoms smoothed at `s_ref 2^{-n}`, the diffuse
/// part at `s_ref (2^{-n} - 2^{-n_max})` so that the last entry carries the
/// base decomposition unchanged.
pub fn approximation_schedule(
    mu: &DiscreteMeasure,
    n_max: usize,
    eps: f64,
    p: f64,
    s_ref: f64,
) -> Result<Schedule> {
    if n_max == 0 || !(s_ref > 0.0) {
        return Err(Error::invalid("schedule needs n_max >= 1 and s_ref > 0"));
    }
    let grid = mu.grid_arc().clone();
    let (diffuse, plus, minus) = split_singular(mu);
    let mut base = decompose(&diffuse, eps, p)?;
    base.mu_s_plus = plus.clone();
    base.mu_s_minus = minus.clone();
    let mut singular_tv = 0.0;
    for a in plus.iter().chain(&minus) {
        singular_tv += a.weight.abs() * mu.atom_time_mass(a)?;
    }
    let reference_mass = base.reference_mass + singular_tv;
    let tests = TestFunction::family(&grid);
    let exact: Vec<f64> = tests.iter().map(|t| mu.pair(t)).collect::<Result<_>>()?;
    let base_f = base.f.density.clone();
    let mut entries = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let scale = s_ref * 0.5f64.powi(n as i32);
        let diffuse_scale = s_ref * (0.5f64.powi(n as i32) - 0.5f64.powi(n_max as i32));
        let mut m = DiscreteMeasure::zero(grid.clone(), mu.ambient);
        m.divergence = base.g.clone();
        m.time_derivative = base.h.clone();
        m.atoms = if diffuse_scale > 0.0 {
            smooth_atoms(&grid, &base.f.atoms, diffuse_scale, true)?
        } else {
            base.f.atoms.clone()
        };
        if let Some(f) = &base_f {
            m.density = Some(if diffuse_scale > 0.0 {
                NodalSeries {
                    levels: f
                        .levels
                        .iter()
                        .map(|l| mollify_nodal(&grid, l, diffuse_scale))
                        .collect::<Result<_>>()?,
                }
            } else {
                f.clone()
            });
        }
        let mut f_only = m.clone();
        f_only.divergence = None;
        f_only.time_derivative = None;
        let f_l1 = f_only.atoms_variation()? + f_only.density_l1();
        let f_distance = match (&base_f, &m.density) {
            (Some(a), Some(b)) => {
                let mut d = DiscreteMeasure::zero(grid.clone(), mu.ambient);
                d.density = Some(NodalSeries {
                    levels: a
                        .levels
                        .iter()
                        .zip(&b.levels)
                        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u - v).collect())
                        .collect(),
                });
                d.density_l1()
            }
            _ => 0.0,
        };
        let rho = smooth_atoms(&grid, &plus, scale, false)?;
        let eta = smooth_atoms(&grid, &minus, scale, false)?;
        let mut rho_mass = 0.0;
        for a in &rho {
            rho_mass += a.weight.abs() * mu.atom_time_mass(a)?;
        }
        let mut eta_mass = 0.0;
        for a in &eta {
            eta_mass += a.weight.abs() * mu.atom_time_mass(a)?;
        }
        m.atoms.extend(rho);
        m.atoms.extend(eta);
        let budget = f_l1 + base.g_norm + base.h_norm + rho_mass + eta_mass;
        let slack = 1e-12 * reference_mass.max(1.0);
        let narrow_errors = tests
            .iter()
            .zip(&exact)
            .map(|(t, e)| Ok((m.pair(t)? - e).abs()))
            .collect::<Result<_>>()?;
        entries.push(ScheduleEntry {
            n,
            scale,
            measure: m,
            f_l1,
            g_norm: base.g_norm,
            h_norm: base.h_norm,
            rho_mass,
            eta_mass,
            budget,
            budget_ok: budget <= (1.0 + eps) * reference_mass + slack,
            f_distance,
            narrow_errors,
        });
    }
    Ok(Schedule {
        base,
        reference_mass,
        eps,
        entries,
    })
}

/// Loads of two measures agree on every grid test function.
pub fn same_action(a: &DiscreteMeasure, b: &DiscreteMeasure, tol: f64) -> Result<bool> {
    let grid = a.grid();
    let n = grid.node_count();
    let steps = match a.ambient {
        Ambient::Space => 1,
        Ambient::SpaceTime => grid.steps(),
    };
    let (mut la, mut lb) = (vec![0.0; n], vec![0.0; n]);
    for s in 1..=steps {
        a.slice_load(grid, s, &mut la)?;
        b.slice_load(grid, s, &mut lb)?;
        if la.iter().zip(&lb).any(|(x, y)| (x - y).abs() > tol) {
            return Ok(false);
        }
    }
    Ok(true)
}
