use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{approximation_schedule, DiscreteMeasure, Schedule};
use crate::solver::grid::dist;
use crate::solver::{solve_parabolic, AbsorptionSpec, OperatorSpec, SolveOptions, SpaceTimeField};
use crate::truncation::{levelset_decay, truncated_energy, LevelTarget};

/// Measures `mu_n` with initial data `u_{0,n}` approximating `(mu, u_0)`.
#[derive(Debug, Clone)]
pub struct PerturbationFamily {
    pub base: DiscreteMeasure,
    pub schedule: Schedule,
    pub u0: Vec<Vec<f64>>,
    pub hypotheses: Hypotheses,
}

/// Structural checks made before any solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses {
    pub budgets_ok: bool,
    pub singular_parts_nonnegative: bool,
    /// `|mu_n|(Q)` per member.
    pub masses: Vec<f64>,
    pub sup_mass: f64,
    pub base_mass: f64,
    /// Members whose mass is off the base mass by more than the budget allows.
    pub mass_outliers: Vec<usize>,
}

impl Hypotheses {
    pub fn hold(&self) -> bool {
        self.budgets_ok && self.singular_parts_nonnegative && self.sup_mass.is_finite() && self.mass_outliers.is_empty()
    }
}

impl PerturbationFamily {
    pub fn len(&self) -> usize {
        self.schedule.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedule.entries.is_empty()
    }

    pub fn measure(&self, n: usize) -> &DiscreteMeasure {
        &self.schedule.entries[n - 1].measure
    }

    /// Multiplies member `n` (1-based) by `factor` and rechecks.
    pub fn inflate(&mut self, n: usize, factor: f64) -> Result<()> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(format!("member {n} outside 1..={}", self.len())));
        }
        let m = &mut self.schedule.entries[n - 1].measure;
        m.atoms.iter_mut().for_each(|a| a.weight *= factor);
        for s in [&mut m.density, &mut m.time_derivative].into_iter().flatten() {
            s.levels.iter_mut().flatten().for_each(|v| *v *= factor);
        }
        if let Some(g) = &mut m.divergence {
            g.levels.iter_mut().flatten().for_each(|v| {
                v[0] *= factor;
                v[1] *= factor;
            });
        }
        self.hypotheses = check_hypotheses(&self.base, &self.schedule)?;
        Ok(())
    }
}

fn check_hypotheses(base: &DiscreteMeasure, schedule: &Schedule) -> Result<Hypotheses> {
    let masses: Vec<f64> = schedule
        .entries
        .iter()
        .map(|e| e.measure.total_variation())
        .collect::<Result<_>>()?;
    let base_mass = base.total_variation()?;
    let allowed = (1.0 + schedule.eps) * schedule.reference_mass.max(base_mass) + 1e-12;
    let mass_outliers = masses
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > allowed)
        .map(|(i, _)| i + 1)
        .collect();
    Ok(Hypotheses {
        budgets_ok: schedule.budgets_hold(),
        singular_parts_nonnegative: schedule.entries.iter().all(|e| e.rho_mass >= 0.0 && e.eta_mass >= 0.0),
        sup_mass: masses.iter().cloned().fold(0.0, f64::max),
        masses,
        base_mass,
        mass_outliers,
    })
}

/// Schedules `mu` over `n_max` levels; the initial datum is kept fixed.
pub fn build_perturbation_family(
    mu: &DiscreteMeasure,
    u0: &[f64],
    n_max: usize,
    eps: f64,
    p: f64,
    s_ref: f64,
) -> Result<PerturbationFamily> {
    if u0.len() != mu.grid().node_count() {
        return Err(Error::ShapeMismatch("initial datum and grid differ".into()));
    }
    let schedule = approximation_schedule(mu, n_max, eps, p, s_ref)?;
    let hypotheses = check_hypotheses(mu, &schedule)?;
    Ok(PerturbationFamily {
        base: mu.clone(),
        u0: vec![u0.to_vec(); schedule.entries.len()],
        schedule,
        hypotheses,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySettings {
    pub k_list: Vec<f64>,
    /// Worker threads for the per-member solves (0 = rayon default).
    pub workers: usize,
    pub solve: SolveOptions,
    /// Levels for the per-member decay fit.
    pub decay_levels: Option<Vec<f64>>,
    /// Band width `k` of the truncated energy `E(0, k) / (k (|mu| + |u_0|_1))`,
    /// normalized by the base data.
    pub energy_k: f64,
    /// Members with energy ratio above `r`, or decay constant above `r`
    /// times that of the last member, are flagged.
    pub uniformity_ratio: f64,
    /// Required average decrease factor of the Cauchy increments.
    pub cauchy_factor: f64,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        StabilitySettings {
            k_list: vec![1.0, 2.0, 4.0],
            workers: 0,
            solve: SolveOptions::default(),
            decay_levels: None,
            energy_k: 1.0,
            uniformity_ratio: 2.0,
            cauchy_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub n: usize,
    pub mass: f64,
    /// `||u_n - u_limit||_{L^1(Q)}`.
    pub l1_to_limit: f64,
    /// Max over nodes away from the atoms of `|u_n - u_limit|`.
    pub max_to_limit: f64,
    /// `||T_k(u_n) - T_k(u_limit)||_X` in the order of `k_list`.
    pub tk_distances: Vec<f64>,
    /// `||u_{n+1} - u_n||_{L^1(Q)}`.
    pub increment: Option<f64>,
    pub decay_constant: Option<f64>,
    pub energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub schema_version: u32,
    pub k_list: Vec<f64>,
    pub hypotheses: Hypotheses,
    pub rows: Vec<StabilityRow>,
    /// Geometric mean of `increment_n / increment_{n+1}` over the resolved
    /// increments (members whose smoothing falls below the mesh coincide).
    pub cauchy_factor: Option<f64>,
    pub cauchy_pass: bool,
    /// Per `k`: the distances to the limit are nonincreasing in `n`.
    pub tk_pass: Vec<bool>,
    /// Members whose decay or energy constant is out of line.
    pub nonuniform: Vec<usize>,
    pub exclusion_radius: f64,
    /// Description of the a.e. convergence proxy.
    pub proxy: String,
    pub error: Option<String>,
    pub verdict: bool,
}

pub const REPORT_SCHEMA: u32 = 1;

impl StabilityReport {
    pub fn empty(k_list: &[f64], hypotheses: Hypotheses) -> Self {
        StabilityReport {
            schema_version: REPORT_SCHEMA,
            k_list: k_list.to_vec(),
            hypotheses,
            rows: Vec::new(),
            cauchy_factor: None,
            cauchy_pass: false,
            tk_pass: Vec::new(),
            nonuniform: Vec::new(),
            exclusion_radius: 0.0,
            proxy: PROXY.to_string(),
            error: None,
            verdict: false,
        }
    }
}

const PROXY: &str = "L1(Q) distance plus max nodal distance outside the exclusion radius around atoms";

fn solve_member(
    family: &PerturbationFamily,
    n: usize,
    op: &OperatorSpec,
    g: &AbsorptionSpec,
    opts: &SolveOptions,
) -> Result<SpaceTimeField> {
    let mu = family.measure(n);
    solve_parabolic(mu.grid_arc().clone(), mu, &family.u0[n - 1], op, g, opts).map(|r| r.0)
}

/// Solves every member, measures distances to the last member and judges
/// the Cauchy and uniformity properties.
pub fn run_stability_experiment(
    family: &PerturbationFamily,
    op: &OperatorSpec,
    g: Option<&AbsorptionSpec>,
    settings: &StabilitySettings,
) -> Result<StabilityReport> {
    let mut report = StabilityReport::empty(&settings.k_list, family.hypotheses.clone());
    if family.is_empty() {
        return Ok(report);
    }
    let none = AbsorptionSpec::None;
    let g = g.unwrap_or(&none);
    let opts = SolveOptions {
        store_every: 1,
        ..settings.solve
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let count = family.len();
    let solved: Vec<Result<SpaceTimeField>> =
        pool.install(|| (1..=count).into_par_iter().map(|n| solve_member(family, n, op, g, &opts)).collect());
    let mut fields = Vec::with_capacity(count);
    for (i, r) in solved.into_iter().enumerate() {
        match r {
            Ok(u) => fields.push(u),
            Err(e) => {
                report.error = Some(format!("member {}: {e}", i + 1));
                break;
            }
        }
    }
    let grid = family.base.grid_arc().clone();
    let exclusion = family.schedule.entries.first().map_or(0.0, |e| e.scale);
    report.exclusion_radius = exclusion;
    let atoms: Vec<_> = family.base.atoms.iter().map(|a| a.x).collect();
    let far: Vec<bool> = (0..grid.node_count())
        .map(|k| {
            let x = grid.node(k);
            atoms.iter().all(|a| dist(a, &x, grid.dim()) > exclusion)
        })
        .collect();
    let Some(limit) = fields.last() else {
        return Ok(report);
    };
    let limit_tk: Vec<SpaceTimeField> = settings.k_list.iter().map(|k| limit.map(|v| v.clamp(-k, *k))).collect();
    let exps = crate::exponents::compute_exponents(op.p, grid.dim())?;
    for (i, u) in fields.iter().enumerate() {
        let n = i + 1;
        let diff = u.sub(limit)?;
        let max_to_limit = diff
            .slices()
            .iter()
            .flat_map(|s| s.iter().zip(&far).filter(|(_, f)| **f).map(|(v, _)| v.abs()))
            .fold(0.0, f64::max);
        let tk_distances = settings
            .k_list
            .iter()
            .zip(&limit_tk)
            .map(|(k, lt)| Ok(u.map(|v| v.clamp(-k, *k)).sub(lt)?.x_norm(op.p)))
            .collect::<Result<Vec<f64>>>()?;
        let increment = match fields.get(i + 1) {
            Some(next) => Some(next.sub(u)?.lq_norm(1.0)),
            None => None,
        };
        let decay_constant = match &settings.decay_levels {
            Some(ks) if u.max_abs() > 0.0 => {
                Some(levelset_decay(u, ks, &exps, LevelTarget::Value, None)?.fitted_constant)
            }
            _ => None,
        };
        let mass = family.hypotheses.masses[i];
        let energy = truncated_energy(u, 0.0, settings.energy_k, op.p);
        let reference = family.hypotheses.base_mass + crate::solver::field::l1_norm(&grid, &family.u0[i]);
        report.rows.push(StabilityRow {
            n,
            mass,
            l1_to_limit: diff.lq_norm(1.0),
            max_to_limit,
            tk_distances,
            increment,
            decay_constant,
            energy_ratio: if reference > 0.0 { energy / (settings.energy_k * reference) } else { 0.0 },
        });
    }
    let scale = report.rows.iter().map(|r| r.l1_to_limit).fold(0.0, f64::max).max(1e-300);
    let incs: Vec<f64> = report
        .rows
        .iter()
        .filter_map(|r| r.increment)
        .filter(|d| *d > 1e-12 * scale)
        .collect();
    report.cauchy_factor = match incs.len() {
        0 | 1 => None,
        l => Some((incs[0] / incs[l - 1]).powf(1.0 / (l - 1) as f64)),
    };
    report.cauchy_pass = match report.cauchy_factor {
        Some(f) => f >= settings.cauchy_factor,
        None => incs.is_empty(),
    };
    report.tk_pass = (0..settings.k_list.len())
        .map(|j| {
            let d: Vec<f64> = report.rows.iter().map(|r| r.tk_distances[j]).collect();
            let tol = 1e-12 * d.iter().cloned().fold(0.0, f64::max);
            d.windows(2).all(|w| w[1] <= w[0] + tol)
        })
        .collect();
    let ratio = settings.uniformity_ratio;
    let limit_decay = report.rows.last().and_then(|r| r.decay_constant);
    let nonuniform: Vec<usize> = report
        .rows
        .iter()
        .filter(|r| {
            let decay_high = match (r.decay_constant, limit_decay) {
                (Some(c), Some(l)) if l > 0.0 => c > ratio * l,
                _ => false,
            };
            r.energy_ratio > ratio || decay_high
        })
        .map(|r| r.n)
        .collect();
    report.nonuniform = nonuniform;
    report.verdict = report.error.is_none()
        && report.hypotheses.hold()
        && report.cauchy_pass
        && report.tk_pass.iter().all(|p| *p)
        && report.nonuniform.is_empty();
    Ok(report)
}
