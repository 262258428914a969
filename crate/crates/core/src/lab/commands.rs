use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exponents::compute_exponents;
use crate::lab::config::*;
use crate::lab::report::{emit_report, num, write_json};
use crate::lab::stability::{build_perturbation_family, run_stability_experiment, StabilitySettings};
use crate::measures::{approximation_schedule, classify_diffuse, Ambient, DiscreteMeasure};
use crate::potential::{
    elliptic_capacity, lift, maximal_fractional, wolff_potential, PotentialMeasure, WolffConfig,
};
use crate::schemes::{
    absorption_solve, beta_p, c_p, exponential_iteration, monotone_source_iteration, picard_subcritical,
    IterationParams, NodalBound,
};
use crate::solver::field::linf_norm;
use crate::solver::radial::{condenser_capacity, radial_capacity, RadialGrid};
use crate::solver::{solve_elliptic, solve_parabolic, Grid, OperatorSpec, SpaceTimeField};
use crate::truncation::{levelset_decay, truncated_energy, EstimateReport, LevelTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Exponents,
    Measures,
    Solve,
    Verify,
    Wolff,
    Capacity,
    Iterate,
    Stability,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Exponents => "exponents",
            Command::Measures => "measures",
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Wolff => "wolff",
            Command::Capacity => "capacity",
            Command::Iterate => "iterate",
            Command::Stability => "stability",
        }
    }
}

/// Result of one command: overall verdict, written files and the summary
/// (also written as `summary.json`).
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: String,
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

/// Runs `cmd` on the config at `config`, writing into `out`, with at most
/// `workers` threads (0 = all cores).
pub fn run_command(cmd: Command, config: &Path, out: &Path, workers: usize) -> Result<Outcome> {
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let (passed, mut files, summary) = pool.install(|| match cmd {
        Command::Exponents => exponents(config, out),
        Command::Measures => measures(config, out),
        Command::Solve => solve(config, out),
        Command::Verify => verify(config, out),
        Command::Wolff => wolff(config, out),
        Command::Capacity => capacity(config, out),
        Command::Iterate => iterate(config, out),
        Command::Stability => stability(config, out, workers),
    })?;
    let summary = json!({
        "schema_version": CONFIG_SCHEMA,
        "command": cmd.name(),
        "passed": passed,
        "result": summary,
    });
    let path = out.join("summary.json");
    write_json(&path, &summary)?;
    files.push(path);
    Ok(Outcome {
        command: cmd.name().to_string(),
        passed,
        files,
        summary,
    })
}

type Ran = Result<(bool, Vec<PathBuf>, Value)>;

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text)?;
    Ok(path)
}

fn exponents(config: &Path, out: &Path) -> Ran {
    let cfg: ExponentsConfig = load(config)?.config;
    let mut csv = String::from("p,N,p1,pc,mc,pe,valid_range,gradient_integrable,borderline\n");
    let mut consistent = true;
    for &n in &cfg.n {
        for &p in &cfg.p {
            let e = compute_exponents(p, n)?;
            consistent &= (e.mc > 1.0) == (p > e.p1);
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                num(p),
                n,
                num(e.p1),
                num(e.pc),
                num(e.mc),
                num(e.pe),
                e.valid_range,
                e.gradient_integrable,
                e.borderline
            );
        }
    }
    let file = write(out.join("exponents.csv"), &csv)?;
    Ok((consistent, vec![file], json!({ "rows": cfg.p.len() * cfg.n.len(), "consistent": consistent })))
}

fn measures(config: &Path, out: &Path) -> Ran {
    let loaded = load::<MeasuresConfig>(config)?;
    let cfg = &loaded.config;
    let grid = std::sync::Arc::new(Grid::from_spec(&cfg.grid)?);
    let mu = cfg.measure.build(grid.clone(), &loaded.base)?;
    let class = classify_diffuse(&mu, cfg.p, grid.dim(), cfg.q)?;
    let schedule = approximation_schedule(&mu, cfg.n_max, cfg.eps, cfg.p, cfg.s_ref)?;
    let mut csv = String::from("n,scale,f_l1,g_norm,h_norm,rho_mass,eta_mass,budget,budget_ok,f_distance,narrow_error\n");
    for e in &schedule.entries {
        let narrow = e.narrow_errors.iter().cloned().fold(0.0, f64::max);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.n,
            num(e.scale),
            num(e.f_l1),
            num(e.g_norm),
            num(e.h_norm),
            num(e.rho_mass),
            num(e.eta_mass),
            num(e.budget),
            e.budget_ok,
            num(e.f_distance),
            num(narrow)
        );
    }
    let file = write(out.join("schedule.csv"), &csv)?;
    let class_path = out.join("classification.json");
    write_json(&class_path, &class)?;
    let passed = schedule.budgets_hold() && schedule.base.budgets_hold();
    Ok((
        passed,
        vec![file, class_path],
        json!({
            "reference_mass": schedule.reference_mass,
            "budgets_hold": passed,
            "sigma": schedule.base.sigma,
            "diffuse": class.diffuse,
            "admissible": class.admissible,
        }),
    ))
}

/// Stationary solve for measures on `Omega`, implicit Euler otherwise.
fn solve_problem(p: &ProblemConfig, base: &Path) -> Result<(SpaceTimeField, DiscreteMeasure, Value)> {
    let grid = p.grid()?;
    let mu = p.measure(&grid, base)?;
    match mu.ambient {
        Ambient::Space => {
            let (u, rep) = solve_elliptic(&grid, &mu.elliptic_load()?, &p.operator, &p.absorption, &p.newton.params())?;
            Ok((SpaceTimeField::stationary(grid, u)?, mu, serde_json::to_value(rep)?))
        }
        Ambient::SpaceTime => {
            let u0 = p.initial(&grid)?;
            let (u, rep) = solve_parabolic(grid, &mu, &u0, &p.operator, &p.absorption, &p.solve_options())?;
            Ok((u, mu, serde_json::to_value(rep)?))
        }
    }
}

fn field_summary(u: &SpaceTimeField, p: f64) -> Value {
    json!({
        "max_abs": u.max_abs(),
        "l1": u.lq_norm(1.0),
        "lp": u.lq_norm(p),
        "gradient_lp": u.gradient_lq_norm(p),
        "sup_l1": u.sup_l1(),
    })
}

fn solve(config: &Path, out: &Path) -> Ran {
    let loaded = load::<SolveConfig>(config)?;
    let (u, _, report) = solve_problem(&loaded.config.problem, &loaded.base)?;
    let mut files = Vec::new();
    let mut csv = String::from("level,time,max_abs,l1\n");
    for (n, (t, s)) in u.times().iter().zip(u.slices()).enumerate() {
        let _ = writeln!(
            csv,
            "{n},{},{},{}",
            num(*t),
            num(linf_norm(s)),
            num(crate::solver::field::l1_norm(u.grid(), s))
        );
    }
    files.push(write(out.join("levels.csv"), &csv)?);
    if loaded.config.snapshots {
        u.write_snapshots(out, "u")?;
        files.push(out.join("u.bin"));
        files.push(out.join("u.csv"));
    }
    Ok((
        true,
        files,
        json!({ "solve": report, "field": field_summary(&u, loaded.config.problem.operator.p) }),
    ))
}

fn estimate_rows(csv: &mut String, r: &EstimateReport) {
    for ((x, l), b) in r.params.iter().zip(&r.lhs).zip(&r.bound) {
        let _ = writeln!(csv, "{},{},{},{},{}", r.name, num(*x), num(*l), num(*b), r.verdict);
    }
}

fn verify(config: &Path, out: &Path) -> Ran {
    let loaded = load::<VerifyConfig>(config)?;
    let cfg = &loaded.config;
    let (u, mu, _) = solve_problem(&cfg.problem, &loaded.base)?;
    let p = cfg.problem.operator.p;
    let exps = compute_exponents(p, u.grid().dim())?;
    let mut csv = String::from("estimate,param,lhs,bound,verdict\n");
    let mut verdicts = serde_json::Map::new();
    let mut passed = true;
    for (levels, target, key) in [
        (&cfg.value_levels, LevelTarget::Value, "levelset_decay_u"),
        (&cfg.gradient_levels, LevelTarget::Gradient, "levelset_decay_grad_u"),
    ] {
        if let Some(ks) = levels {
            let r = levelset_decay(&u, ks, &exps, target, None)?;
            estimate_rows(&mut csv, &r);
            passed &= r.verdict;
            verdicts.insert(key.into(), json!({ "verdict": r.verdict, "slope": r.slope, "constant": r.fitted_constant }));
        }
    }
    if let Some(bands) = &cfg.energy {
        let mass = mu.total_variation()? + crate::solver::field::l1_norm(u.grid(), &cfg.problem.initial(u.grid())?);
        let mut ratios = Vec::new();
        for &ell in &bands.ells {
            for &k in &bands.ks {
                let e = truncated_energy(&u, ell, k, p);
                let ratio = e / (k * mass.max(f64::MIN_POSITIVE));
                let _ = writeln!(csv, "truncated_energy,{},{},{},true", num(k), num(e), num(ratio));
                ratios.push(ratio);
            }
        }
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        let ok = hi <= 1.0 + 1e-6;
        passed &= ok;
        verdicts.insert("truncated_energy".into(), json!({ "verdict": ok, "max_ratio": hi }));
    }
    if let Some(other) = &cfg.comparison {
        let mut p2 = cfg.problem.clone();
        p2.measure = other.clone();
        p2.u0 = cfg.comparison_u0.clone();
        let (v, _, _) = solve_problem(&p2, &loaded.base)?;
        let gap = u
            .slices()
            .iter()
            .zip(v.slices())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| y - x))
            .fold(f64::NEG_INFINITY, f64::max);
        let ok = gap <= 1e-9;
        passed &= ok;
        verdicts.insert("comparison".into(), json!({ "verdict": ok, "max_excess": gap }));
    }
    let file = write(out.join("estimates.csv"), &csv)?;
    Ok((passed, vec![file], Value::Object(verdicts)))
}

fn wolff(config: &Path, out: &Path) -> Ran {
    let cfg: WolffRunConfig = load(config)?.config;
    let wc = WolffConfig {
        r: cfg.r,
        nodes: cfg.nodes,
        p: cfg.p,
        n: cfg.n,
    };
    let omega = PotentialMeasure::atoms(cfg.atoms.iter().map(|a| (a.x, a.w)).collect())?;
    let mut csv = String::from("x,y,z,wolff,maximal\n");
    for x in &cfg.points {
        let w = wolff_potential(&omega, x, &wc)?;
        let m = match cfg.eta {
            Some(eta) => Some(maximal_fractional(&omega, x, eta, &wc)?),
            None => None,
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            num(x[0]),
            num(x[1]),
            num(x[2]),
            num(w),
            m.map_or_else(|| "nan".into(), num)
        );
    }
    let file = write(out.join("wolff.csv"), &csv)?;
    Ok((true, vec![file], json!({ "points": cfg.points.len(), "mass": omega.total_mass() })))
}

fn capacity(config: &Path, out: &Path) -> Ran {
    let cfg: CapacityConfig = load(config)?.config;
    let (passed, summary) = match cfg {
        CapacityConfig::Radial {
            n,
            p,
            r,
            big_r,
            cells,
            tolerance,
        } => {
            let rg = RadialGrid::new(n, big_r, cells)?;
            let value = radial_capacity(&rg, r, &OperatorSpec::p_laplacian(p), &Default::default())?;
            let exact = condenser_capacity(n, p, r, big_r);
            let rel = (value - exact).abs() / exact;
            (rel <= tolerance, json!({ "value": value, "closed_form": exact, "relative_error": rel }))
        }
        CapacityConfig::Grid { grid, p, set } => {
            let g = Grid::from_spec(&grid)?;
            let r = elliptic_capacity(&set, &OperatorSpec::p_laplacian(p), &g, &Default::default())?;
            (r.value > 0.0 && r.value.is_finite(), serde_json::to_value(r)?)
        }
    };
    let path = out.join("capacity.json");
    write_json(&path, &summary)?;
    Ok((passed, vec![path], summary))
}

fn spatial_omega(mu: &DiscreteMeasure) -> Result<PotentialMeasure> {
    PotentialMeasure::atoms(mu.atoms.iter().map(|a| (lift(&a.x), a.weight.max(0.0))).collect())
}

fn require(v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("scheme needs `{name}`")))
}

fn iterate(config: &Path, out: &Path) -> Ran {
    let loaded = load::<IterateConfig>(config)?;
    let cfg = &loaded.config;
    let pc = &cfg.problem;
    let grid = pc.grid()?;
    let mu = pc.measure(&grid, &loaded.base)?;
    let u0 = pc.initial(&grid)?;
    let op = &pc.operator;
    let params = IterationParams {
        m_max: cfg.m_max,
        solve: pc.solve_options(),
        ..Default::default()
    };
    let bound = |factor: f64| -> Result<Option<NodalBound>> {
        match cfg.bound {
            None => Ok(None),
            Some(b) => {
                let wc = WolffConfig::for_domain(op.p, grid.dim(), grid.diameter());
                Ok(Some(NodalBound::wolff(&grid, &spatial_omega(&mu)?, &wc, factor * b.kappa, 2.0 * linf_norm(&u0))?))
            }
        }
    };
    let outcome = match cfg.scheme {
        SchemeKind::Absorption => {
            let run = absorption_solve(&mu, &u0, &pc.absorption, op, &pc.solve_options())?;
            let summary = json!({
                "g_l1": run.g_l1,
                "budget": run.budget,
                "budget_ok": run.budget_ok,
                "flags": run.flags,
                "field": field_summary(&run.field, op.p),
            });
            return Ok((run.budget_ok, Vec::new(), summary));
        }
        SchemeKind::Source => {
            let b = bound(2.0 * beta_p(op.p))?;
            monotone_source_iteration(&mu, &u0, require(cfg.q, "q")?, op, &params, b.as_ref())?
        }
        SchemeKind::Exponential => {
            let b = bound(c_p(op.p))?;
            let l = cfg.l.ok_or_else(|| Error::Config("scheme needs `l`".into()))?;
            exponential_iteration(&mu, &u0, require(cfg.tau, "tau")?, require(cfg.beta, "beta")?, l, op, &params, b.as_ref())?
        }
        SchemeKind::Picard => picard_subcritical(&mu, &u0, require(cfg.lambda, "lambda")?, &pc.absorption, op, &params)?,
    };
    let path = out.join("trace.csv");
    outcome.trace.write_csv(&path)?;
    let t = &outcome.trace;
    Ok((
        t.passed(),
        vec![path],
        json!({
            "iterations": t.iterations(),
            "monotone": t.monotone,
            "bound_respected": t.bound_respected,
            "first_violation": t.first_violation,
            "converged": t.converged,
            "stop": t.stop,
            "flags": t.flags,
        }),
    ))
}

fn stability(config: &Path, out: &Path, workers: usize) -> Ran {
    let loaded = load::<StabilityConfig>(config)?;
    let cfg = &loaded.config;
    let pc = &cfg.problem;
    let grid = pc.grid()?;
    let mu = pc.measure(&grid, &loaded.base)?;
    let u0 = pc.initial(&grid)?;
    let mut family = build_perturbation_family(&mu, &u0, cfg.n_max, cfg.eps, pc.operator.p, cfg.s_ref)?;
    if let Some(inf) = cfg.inflate {
        family.inflate(inf.n, inf.factor)?;
    }
    let settings = StabilitySettings {
        k_list: cfg.k_list.clone(),
        workers,
        solve: pc.solve_options(),
        decay_levels: cfg.decay_levels.clone(),
        energy_k: cfg.energy_k,
        uniformity_ratio: cfg.uniformity_ratio,
        cauchy_factor: cfg.cauchy_factor,
    };
    let g = if pc.absorption.is_none() { None } else { Some(&pc.absorption) };
    let report = run_stability_experiment(&family, &pc.operator, g, &settings)?;
    let files = emit_report(&report, out, "stability")?;
    Ok((
        report.verdict,
        files,
        json!({
            "cauchy_factor": report.cauchy_factor,
            "cauchy_pass": report.cauchy_pass,
            "tk_pass": report.tk_pass,
            "nonuniform": report.nonuniform,
            "hypotheses_hold": report.hypotheses.hold(),
            "error": report.error,
        }),
    ))
}
