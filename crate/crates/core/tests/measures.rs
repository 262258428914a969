use std::sync::Arc;

use plm_core::measures::*;
use plm_core::solver::grid::Grid;
use plm_core::Error;
use proptest::prelude::*;

fn square(cells: usize) -> Arc<Grid> {
    Arc::new(Grid::square(-1.0, 1.0, cells).unwrap())
}

fn cylinder(cells: usize, t: f64, steps: usize) -> Arc<Grid> {
    Arc::new(Grid::square(-1.0, 1.0, cells).unwrap().with_time(t, steps).unwrap())
}

#[test]
fn tensor_of_dirac_with_window() {
    let g = cylinder(8, 2.0, 8);
    let omega = DiscreteMeasure::zero(g, Ambient::Space).with_atom([0.0, 0.0], 1.0);
    let mu = tensor_product(&omega, &TimeProfile::Window { a: 0.0, b: 2.0 }).unwrap();
    assert!((mu.total_variation().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn tensor_of_lebesgue_with_linear_profile() {
    let g = Arc::new(Grid::square(0.0, 1.0, 8).unwrap().with_time(1.0, 10).unwrap());
    let omega = DiscreteMeasure::zero(g, Ambient::Space).with_density(|_, _| 1.0);
    let mu = tensor_product(&omega, &TimeProfile::Expr { expr: "t".into() }).unwrap();
    assert!((mu.total_variation().unwrap() - 0.5).abs() < 1e-12);
    assert!((mu.mass().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn tensor_of_zero_is_zero() {
    let g = cylinder(4, 1.0, 4);
    let omega = DiscreteMeasure::zero(g, Ambient::Space);
    let mu = tensor_product(&omega, &TimeProfile::Constant { value: 3.0 }).unwrap();
    assert_eq!(mu.total_variation().unwrap(), 0.0);
}

#[test]
fn tensor_rejects_negative_profile() {
    let g = cylinder(4, 1.0, 4);
    let omega = DiscreteMeasure::zero(g, Ambient::Space).with_atom([0.0, 0.0], 1.0);
    let r = tensor_product(&omega, &TimeProfile::Expr { expr: "t - 0.5".into() });
    assert!(matches!(r, Err(Error::NegativeData(_))));
}

#[test]
fn inf_of_shared_and_disjoint_atoms() {
    let g = square(8);
    let a = DiscreteMeasure::zero(g.clone(), Ambient::Space).with_atom([0.0, 0.0], 2.0);
    let b = DiscreteMeasure::zero(g.clone(), Ambient::Space).with_atom([0.0, 0.0], 3.0);
    let m = inf_measure(&a, &b).unwrap();
    assert_eq!(m.atoms.len(), 1);
    assert_eq!(m.atoms[0].weight, 2.0);
    let c = DiscreteMeasure::zero(g, Ambient::Space).with_atom([0.5, 0.0], 3.0);
    assert_eq!(inf_measure(&a, &c).unwrap().total_variation().unwrap(), 0.0);
}

#[test]
fn classification_of_atoms() {
    let g = square(8);
    let omega = DiscreteMeasure::zero(g, Ambient::Space)
        .with_atom([0.0, 0.0], 1.0)
        .with_density(|_, _| 1.0);
    let c = classify_diffuse(&omega, 2.0, 2, None).unwrap();
    assert!(!c.diffuse && c.density_diffuse);
    assert!(classify_diffuse(&omega, 3.0, 2, None).unwrap().diffuse);
    // p = 2, N = 3: p_e = 3
    assert_eq!(classify_diffuse(&omega, 2.0, 3, Some(2.0)).unwrap().admissible, Some(true));
    assert_eq!(classify_diffuse(&omega, 2.0, 3, Some(4.0)).unwrap().admissible, Some(false));
    assert!(classify_diffuse(&omega, 2.0, 3, Some(1.0)).is_err());
}

#[test]
fn instant_atoms_are_parabolically_singular() {
    let g = cylinder(8, 1.0, 4);
    let mu = DiscreteMeasure::zero(g, Ambient::SpaceTime).with_space_time_atom([0.0, 0.0], 0.5, 1.0);
    let c = classify_diffuse(&mu, 3.0, 2, None).unwrap();
    assert!(c.atoms[0].elliptic_diffuse && !c.atoms[0].parabolic_diffuse);
}

#[test]
fn mollified_dirac_keeps_mass_and_support() {
    let g = square(64);
    let mu = DiscreteMeasure::zero(g.clone(), Ambient::Space).with_atom([0.1, -0.2], 1.0);
    for s in [0.5, 0.25, 0.1] {
        let m = mollify(&mu, s).unwrap();
        assert!((m.mass().unwrap() - 1.0).abs() < 1e-12);
        assert!(m.atoms.iter().all(|a| a.weight >= 0.0));
        assert!(m
            .atoms
            .iter()
            .all(|a| ((a.x[0] - 0.1).powi(2) + (a.x[1] + 0.2).powi(2)).sqrt() <= s + 1e-12));
    }
}

#[test]
fn mollifier_beyond_boundary_is_rejected() {
    let g = square(16);
    let mu = DiscreteMeasure::zero(g, Ambient::Space).with_atom([0.8, 0.0], 1.0);
    assert!(matches!(mollify(&mu, 0.5), Err(Error::SupportViolation(_))));
    assert!(mollify_sequence(&mu, &[0.1, 0.2]).is_err());
}

/// For a quadratic test function the pairing error equals `c` times the
/// second moment of the kernel, `0.3 s^2` for the continuous cone in 2D.
#[test]
fn mollified_pairing_error_is_second_order() {
    let g = square(256);
    let x0 = [0.0, 0.0];
    let mu = DiscreteMeasure::zero(g, Ambient::Space).with_atom(x0, 1.0);
    let psi = |x: &[f64; 2]| 1.0 + 0.3 * x[0] - 0.7 * x[1] + 2.0 * (x[0] * x[0] + x[1] * x[1]);
    let mut errs = Vec::new();
    for s in [0.4, 0.2, 0.1] {
        let m = mollify(&mu, s).unwrap();
        let pairing: f64 = m.atoms.iter().map(|a| a.weight * psi(&a.x)).sum();
        let err = pairing - psi(&x0);
        assert!((err / (2.0 * 0.3 * s * s) - 1.0).abs() < 0.05, "s = {s}: {err}");
        errs.push(err);
    }
    assert!((errs[0] / errs[1] - 4.0).abs() < 0.2);
}

#[test]
fn decompose_pure_density_keeps_everything_in_f() {
    let g = cylinder(16, 1.0, 8);
    let mu = DiscreteMeasure::zero(g, Ambient::SpaceTime).with_density(|x, t| 1.0 + x[0] * t);
    let d = decompose(&mu, 1e-3, 2.0).unwrap();
    assert!(d.g.is_none() && d.h.is_none());
    assert!(d.budgets_hold());
    assert!(reassembly_residual(&d.diffuse_measure(), &mu).unwrap() < 1e-12);
}

#[test]
fn decompose_zero() {
    let g = cylinder(8, 1.0, 4);
    let mu = DiscreteMeasure::zero(g, Ambient::SpaceTime);
    let d = decompose(&mu, 0.1, 2.0).unwrap();
    assert_eq!(d.budget_total, 0.0);
}

#[test]
fn decompose_divergence_moves_content_into_f() {
    let g = cylinder(32, 1.0, 4);
    let pi = std::f64::consts::PI;
    let mu = DiscreteMeasure::zero(g, Ambient::SpaceTime)
        .with_divergence(|x, t| [(pi * x[0]).sin() * (1.0 + t), 0.5 * (pi * x[1]).cos()]);
    for eps in [0.5, 0.05] {
        let d = decompose(&mu, eps, 3.0).unwrap();
        assert!(d.budgets_hold(), "eps {eps}: {} / {}", d.budget_total, d.budget_gh);
        assert!(d.budget_gh <= eps);
        assert!(reassembly_residual(&d.diffuse_measure(), &mu).unwrap() < 1e-8);
    }
}

#[test]
fn decompose_time_derivative_part() {
    let g = cylinder(16, 1.0, 8);
    let mu = DiscreteMeasure::zero(g, Ambient::SpaceTime)
        .with_time_derivative(|x, t| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]) * t * t)
        .unwrap();
    let d = decompose(&mu, 0.05, 2.0).unwrap();
    assert!(d.budgets_hold());
    assert!(reassembly_residual(&d.diffuse_measure(), &mu).unwrap() < 1e-8);
}

#[test]
fn decompose_rejects_singular_atoms() {
    let g = cylinder(8, 1.0, 4);
    let mu = DiscreteMeasure::zero(g, Ambient::SpaceTime).with_atom([0.0, 0.0], 1.0);
    assert!(decompose(&mu, 0.1, 2.0).is_err());
}

#[test]
fn schedule_of_singular_atom() {
    let g = cylinder(64, 1.0, 4);
    let mu = DiscreteMeasure::zero(g, Ambient::SpaceTime).with_space_time_atom([0.0, 0.0], 0.5, 1.0);
    let s = approximation_schedule(&mu, 4, 0.1, 2.0, 0.5).unwrap();
    assert_eq!(s.entries.len(), 4);
    assert!(s.budgets_hold());
    for e in &s.entries {
        assert!(e.f_l1 == 0.0 && e.g_norm == 0.0 && e.h_norm == 0.0);
        assert!((e.rho_mass - 1.0).abs() < 1e-12 && e.eta_mass == 0.0);
    }
    let worst: Vec<f64> = s
        .entries
        .iter()
        .map(|e| e.narrow_errors.iter().cloned().fold(0.0, f64::max))
        .collect();
    assert!(worst[3] < worst[0]);
}

#[test]
fn schedule_of_density_converges_in_l1() {
    let g = cylinder(64, 1.0, 4);
    let mu = DiscreteMeasure::zero(g, Ambient::SpaceTime)
        .with_density(|x, _| if x[0] > 0.0 { 1.0 } else { 0.0 });
    let s = approximation_schedule(&mu, 4, 0.1, 2.0, 0.5).unwrap();
    let d: Vec<f64> = s.entries.iter().map(|e| e.f_distance).collect();
    assert!(d.windows(2).all(|w| w[1] <= w[0]) && d[1] < d[0]);
    assert_eq!(d[3], 0.0);
    assert!(s.budgets_hold());
}

#[test]
fn schedule_of_length_one_is_the_base() {
    let g = cylinder(16, 1.0, 4);
    let mu = DiscreteMeasure::zero(g, Ambient::SpaceTime).with_density(|x, _| x[0] * x[0]);
    let s = approximation_schedule(&mu, 1, 0.1, 2.0, 0.5).unwrap();
    assert_eq!(s.entries.len(), 1);
    assert!(same_action(&s.entries[0].measure, &s.base.diffuse_measure(), 1e-14).unwrap());
}

#[test]
fn measure_spec_builds_atoms_and_density() {
    let g = cylinder(16, 2.0, 4);
    let spec: MeasureSpec = serde_json::from_str(
        r#"{"atoms":[{"x":[0.0,0.0],"w":1.5},{"x":[0.25,0.0],"t":1.0,"w":-1.0}],
            "density":"1","profile":"1","T":2.0}"#,
    )
    .unwrap();
    let mu = spec.build(g, std::path::Path::new(".")).unwrap();
    assert_eq!(mu.ambient, Ambient::SpaceTime);
    assert!((mu.mass().unwrap() - (3.0 - 1.0 + 8.0)).abs() < 1e-9);
}

fn atoms_strategy() -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((4usize..13, 4usize..13, 0.0f64..5.0), 0..6)
}

fn atom_measure(g: &Arc<Grid>, atoms: &[(usize, usize, f64)]) -> DiscreteMeasure {
    let mut m = DiscreteMeasure::zero(g.clone(), Ambient::Space);
    for &(i, j, w) in atoms {
        m = m.with_atom(g.node(g.index(i, j)), w);
    }
    m
}

proptest! {
    #[test]
    fn inf_is_below_both_and_idempotent(a in atoms_strategy(), b in atoms_strategy(), c in 0.0f64..2.0) {
        let g = square(16);
        let mut mu = atom_measure(&g, &a).with_density(|x, _| c * (1.0 + x[0]));
        let nu = atom_measure(&g, &b).with_density(|x, _| 1.0 - x[1].abs());
        mu.atoms.dedup_by(|p, q| p.x == q.x);
        let m = inf_measure(&mu, &nu).unwrap();
        prop_assert!(m.total_variation().unwrap() <= mu.total_variation().unwrap() + 1e-12);
        prop_assert!(m.total_variation().unwrap() <= nu.total_variation().unwrap() + 1e-12);
        let same = inf_measure(&mu, &mu).unwrap();
        prop_assert!((same.total_variation().unwrap() - mu.total_variation().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn tensor_variation_is_product(a in atoms_strategy(), c in 0.0f64..3.0, tb in 0.1f64..1.0) {
        let g = cylinder(16, 1.0, 8);
        let omega = atom_measure(&g, &a).with_density(|x, _| c * x[0] * x[1]);
        let f = TimeProfile::Window { a: 0.0, b: tb };
        let mu = tensor_product(&omega, &f).unwrap();
        let expect = omega.total_variation().unwrap() * tb;
        prop_assert!((mu.total_variation().unwrap() - expect).abs() < 1e-10 * (1.0 + expect));
    }

    #[test]
    fn mollification_preserves_mass(a in atoms_strategy(), s in 0.05f64..0.5) {
        let g = square(16);
        let mu = atom_measure(&g, &a).with_density(|x, _| (3.0 * x[0]).sin());
        let m = mollify(&mu, s).unwrap();
        prop_assert!((m.mass().unwrap() - mu.mass().unwrap()).abs() < 1e-12 * (1.0 + mu.total_variation().unwrap()));
    }
}
