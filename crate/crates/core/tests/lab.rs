use std::path::{Path, PathBuf};
use std::sync::Arc;

use plm_core::lab::config::{load, StabilityConfig};
use plm_core::lab::*;
use plm_core::measures::{Ambient, DiscreteMeasure};
use plm_core::solver::{Grid, OperatorSpec, SolveOptions};

fn cylinder(cells: usize, t: f64, steps: usize) -> Arc<Grid> {
    Arc::new(Grid::square(-1.0, 1.0, cells).unwrap().with_time(t, steps).unwrap())
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn settings(k_list: &[f64]) -> StabilitySettings {
    StabilitySettings {
        k_list: k_list.to_vec(),
        workers: 2,
        solve: SolveOptions::default(),
        decay_levels: None,
        energy_k: 1.0,
        uniformity_ratio: 2.0,
        cauchy_factor: 1.5,
    }
}

fn dirac_family(cells: usize, mass: f64, n_max: usize) -> PerturbationFamily {
    let g = cylinder(cells, 0.25, 10);
    let mu = DiscreteMeasure::zero(g.clone(), Ambient::SpaceTime).with_atom([0.0, 0.0], mass);
    build_perturbation_family(&mu, &vec![0.0; g.node_count()], n_max, 0.1, 2.0, 1.0).unwrap()
}

#[test]
fn dirac_family_satisfies_hypotheses() {
    let fam = dirac_family(16, 1.0, 4);
    assert_eq!(fam.len(), 4);
    assert!(fam.hypotheses.hold());
    for m in &fam.hypotheses.masses {
        assert!((m - 0.25).abs() < 1e-9);
    }
    assert!((fam.hypotheses.base_mass - 0.25).abs() < 1e-12);
}

#[test]
fn inflation_breaks_mass_hypothesis() {
    let mut fam = dirac_family(16, 1.0, 4);
    fam.inflate(2, 10.0).unwrap();
    assert!(!fam.hypotheses.hold());
    assert_eq!(fam.hypotheses.mass_outliers, vec![2]);
    assert!(fam.inflate(0, 2.0).is_err());
    assert!(fam.inflate(5, 2.0).is_err());
}

#[test]
fn family_rejects_mismatched_initial_datum() {
    let g = cylinder(8, 0.25, 4);
    let mu = DiscreteMeasure::zero(g, Ambient::SpaceTime);
    assert!(build_perturbation_family(&mu, &[0.0; 3], 2, 0.1, 2.0, 1.0).is_err());
}

#[test]
fn constant_family_has_zero_distances() {
    let g = cylinder(16, 0.25, 10);
    let mu = DiscreteMeasure::zero(g.clone(), Ambient::SpaceTime).with_density(|_, _| 1.0);
    let fam = build_perturbation_family(&mu, &vec![0.0; g.node_count()], 1, 0.1, 2.0, 1.0).unwrap();
    let r = run_stability_experiment(&fam, &OperatorSpec::p_laplacian(2.0), None, &settings(&[1.0])).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.rows[0].l1_to_limit, 0.0);
    assert_eq!(r.rows[0].tk_distances, vec![0.0]);
    assert!(r.cauchy_factor.is_none());
    assert!(r.cauchy_pass);
    assert!(r.verdict);
}

#[test]
fn empty_report_is_header_only() {
    let fam = dirac_family(8, 1.0, 1);
    let r = StabilityReport::empty(&[1.0, 2.0], fam.hypotheses.clone());
    assert_eq!(stability_csv(&r), format!("{STABILITY_HEADER}\n"));
    assert!(!r.verdict);
}

#[test]
fn csv_has_one_row_per_member_and_level() {
    let fam = dirac_family(16, 5.0, 3);
    let ks = [1.0, 2.0];
    let r = run_stability_experiment(&fam, &OperatorSpec::p_laplacian(2.0), None, &settings(&ks)).unwrap();
    let csv = stability_csv(&r);
    assert_eq!(csv.lines().count(), 1 + 3 * ks.len());
    assert!(csv.starts_with(STABILITY_HEADER));
    assert_eq!(r.rows.last().unwrap().l1_to_limit, 0.0);
}

#[test]
fn emitted_report_is_deterministic() {
    let fam = dirac_family(16, 5.0, 3);
    let mut s = settings(&[1.0, 2.0]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let op = OperatorSpec::p_laplacian(2.0);
    let first = emit_report(&run_stability_experiment(&fam, &op, None, &s).unwrap(), a.path(), "s").unwrap();
    s.workers = 1;
    let second = emit_report(&run_stability_experiment(&fam, &op, None, &s).unwrap(), b.path(), "s").unwrap();
    for (x, y) in first.iter().zip(&second) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
}

#[test]
fn mollified_dirac_is_stable_and_inflation_is_flagged() {
    let cfg: StabilityConfig = load(&configs().join("stability.json")).unwrap().config;
    let g = cfg.problem.grid().unwrap();
    let mu = cfg.problem.measure(&g, Path::new(".")).unwrap();
    let u0 = cfg.problem.initial(&g).unwrap();
    let mut fam = build_perturbation_family(&mu, &u0, cfg.n_max, cfg.eps, 2.0, cfg.s_ref).unwrap();
    let s = StabilitySettings {
        k_list: cfg.k_list.clone(),
        workers: 0,
        solve: cfg.problem.solve_options(),
        decay_levels: cfg.decay_levels.clone(),
        energy_k: cfg.energy_k,
        uniformity_ratio: cfg.uniformity_ratio,
        cauchy_factor: cfg.cauchy_factor,
    };
    let op = cfg.problem.operator.clone();
    let r = run_stability_experiment(&fam, &op, None, &s).unwrap();
    assert!(r.cauchy_factor.unwrap() >= 1.5);
    assert!(r.tk_pass.iter().all(|p| *p));
    assert!(r.nonuniform.is_empty());
    assert!(r.verdict);
    fam.inflate(3, 1000.0).unwrap();
    let bad = run_stability_experiment(&fam, &op, None, &s).unwrap();
    assert!(!bad.hypotheses.hold());
    assert_eq!(bad.nonuniform, vec![3]);
    assert!(!bad.verdict);
}

#[test]
fn commands_run_from_configs() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, file) in [
        (Command::Exponents, "exponents.json"),
        (Command::Wolff, "wolff.json"),
        (Command::Capacity, "capacity.json"),
        (Command::Measures, "measures.json"),
        (Command::Solve, "solve.json"),
    ] {
        let out = dir.path().join(cmd.name());
        let o = run_command(cmd, &configs().join(file), &out, 2).unwrap();
        assert!(o.passed, "{}: {}", cmd.name(), o.summary);
        assert!(o.files.iter().all(|f| f.exists()));
        assert!(out.join("summary.json").exists());
    }
}

#[test]
fn iterate_command_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_command(Command::Iterate, &configs().join("iterate.json"), dir.path(), 2).unwrap();
    assert!(o.passed);
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("m,sup,l1,diff,bound_ratio,k_n,verdict"));
    assert!(o.summary["result"]["converged"].as_bool().unwrap());
}

#[test]
fn missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_command(Command::Solve, &dir.path().join("absent.json"), dir.path(), 1);
    assert!(r.is_err());
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.json");
    std::fs::write(&path, r#"{ "p": [2.0], "N": [2], "extra": 1 }"#).unwrap();
    assert!(run_command(Command::Exponents, &path, dir.path(), 1).is_err());
}

#[test]
fn exponents_csv_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("exponents.json");
    run_command(Command::Exponents, &cfg, a.path(), 1).unwrap();
    run_command(Command::Exponents, &cfg, b.path(), 3).unwrap();
    let read = |d: &Path| std::fs::read(d.join("exponents.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(String::from_utf8(read(a.path())).unwrap().lines().count(), 1 + 29 * 4);
}
