use std::f64::consts::PI;
use std::sync::Arc;

use plm_core::measures::{Ambient, DiscreteMeasure};
use plm_core::potential::*;
use plm_core::solver::grid::Grid;
use plm_core::solver::newton::NewtonParams;
use plm_core::solver::operator::{AbsorptionSpec, OperatorSpec};
use plm_core::solver::radial::{condenser_capacity, solve_radial_elliptic, RadialGrid};
use plm_core::Error;
use proptest::prelude::*;

fn dirac() -> PotentialMeasure {
    PotentialMeasure::atoms(vec![([0.0; 3], 1.0)]).unwrap()
}

#[test]
fn dirac_potential_matches_closed_form() {
    let cfg = WolffConfig::new(2.0, 3, 1.0);
    let w = wolff_potential(&dirac(), &[0.5, 0.0, 0.0], &cfg).unwrap();
    assert!((w - 1.0).abs() < 1e-6);
    for i in 0..50 {
        let r = 0.02 + 0.95 * i as f64 / 50.0;
        let x = [r * (i as f64).cos(), r * (i as f64).sin(), 0.0];
        let w = wolff_potential(&dirac(), &x, &cfg).unwrap();
        assert!((w - (1.0 / r - 1.0)).abs() < 1e-6);
    }
}

#[test]
fn potential_vanishes_beyond_radius_and_blows_up_at_atom() {
    let cfg = WolffConfig::new(2.0, 3, 1.0);
    assert_eq!(wolff_potential(&dirac(), &[1.5, 0.0, 0.0], &cfg).unwrap(), 0.0);
    assert!(wolff_potential(&dirac(), &[0.0; 3], &cfg).unwrap().is_infinite());
}

#[test]
fn supercritical_p_is_unsupported() {
    let cfg = WolffConfig::new(3.0, 2, 1.0);
    assert!(matches!(
        wolff_potential(&dirac(), &[0.5, 0.0, 0.0], &cfg),
        Err(Error::UnsupportedRegime(_))
    ));
}

#[test]
fn borderline_potential_is_logarithmic() {
    let cfg = WolffConfig::new(2.0, 2, 1.0);
    assert!(cfg.is_borderline());
    let w = wolff_potential(&dirac(), &[0.25, 0.0, 0.0], &cfg).unwrap();
    assert!((w - 4.0f64.ln()).abs() < 1e-12);
}

#[test]
fn grid_density_potential_matches_power_law() {
    // uniform density, p = 1.5, N = 2: W = pi^2 R^3 / 3
    let g = Arc::new(Grid::square(-1.0, 1.0, 128).unwrap());
    let mu = DiscreteMeasure::zero(g, Ambient::Space).with_density(|_, _| 1.0);
    let om = PotentialMeasure::from_measure(&mu).unwrap();
    let cfg = WolffConfig::new(1.5, 2, 0.5);
    let w = wolff_potential(&om, &[0.0; 3], &cfg).unwrap();
    let exact = PI * PI * 0.125 / 3.0;
    assert!((w / exact - 1.0).abs() < 0.02, "{w} vs {exact}");
}

#[test]
fn radial_density_potential_matches_power_law() {
    // uniform density in the unit ball of R^3, p = 2: W = (4 pi/3) R^2 / 2
    let om = PotentialMeasure::radial(3, 0.0, |r| if r < 1.0 { 1.0 } else { 0.0 }, 1.0, 400).unwrap();
    let cfg = WolffConfig::new(2.0, 3, 0.4);
    let w = wolff_potential(&om, &[0.5, 0.0, 0.0], &cfg).unwrap();
    let exact = 4.0 * PI / 3.0 * 0.08;
    assert!((w / exact - 1.0).abs() < 0.02, "{w} vs {exact}");
    assert!((om.total_mass() - 4.0 * PI / 3.0).abs() < 1e-6);
}

#[test]
fn sphere_fractions() {
    assert!((sphere_fraction(3, 1.0, 1.0, 2.0f64.sqrt()) - 0.5).abs() < 1e-12);
    assert!((sphere_fraction(2, 1.0, 1.0, 2.0f64.sqrt()) - 0.5).abs() < 1e-12);
    assert!((sphere_fraction(5, 1.0, 1.0, 2.0f64.sqrt()) - 0.5).abs() < 1e-12);
    assert_eq!(sphere_fraction(3, 1.0, 3.0, 1.0), 0.0);
    assert_eq!(sphere_fraction(3, 1.0, 0.5, 2.0), 1.0);
}

#[test]
fn maximal_function_of_dirac() {
    let cfg = WolffConfig::new(2.0, 3, 1.0);
    let m = maximal_fractional(&dirac(), &[0.3, 0.0, 0.0], 0.0, &cfg).unwrap();
    assert!((m - 1.0 / 0.3).abs() < 1e-9);
    assert_eq!(maximal_fractional(&PotentialMeasure::zero(), &[0.3, 0.0, 0.0], 0.0, &cfg).unwrap(), 0.0);
    assert_eq!(h_eta(0.0, 0.01), 1.0);
    assert!((h_eta(1.0, 0.01) - 1.0 / 100f64.ln()).abs() < 1e-15);
}

#[test]
fn maximal_function_of_bounded_density_is_bounded() {
    let g = Arc::new(Grid::square(-1.0, 1.0, 32).unwrap());
    let mu = DiscreteMeasure::zero(g, Ambient::Space).with_density(|x, _| 2.0 + x[0]);
    let om = PotentialMeasure::from_measure(&mu).unwrap();
    let cfg = WolffConfig::new(1.5, 2, 2.0);
    let m = maximal_fractional(&om, &[0.1, 0.2, 0.0], 0.0, &cfg).unwrap();
    // omega(B_t) <= 3 pi t^2, so the sup over t < R is at most 3 pi R^p
    assert!(m.is_finite() && m <= 3.0 * PI * 2.0f64.powf(1.5));
}

#[test]
fn ball_capacity_in_radial_ball() {
    let op = OperatorSpec::p_laplacian(2.0);
    let rg = RadialGrid::new(3, 1.0, 256).unwrap();
    let c = radial_ball_capacity(&rg, 0.25, &op, &NewtonParams::default()).unwrap();
    let exact = condenser_capacity(3, 2.0, 0.25, 1.0);
    assert!((exact - 4.0 * PI * 0.25 / 0.75).abs() < 1e-12);
    assert!((c / exact - 1.0).abs() < 0.05);
}

#[test]
fn point_capacity_vanishes_under_refinement() {
    let op = OperatorSpec::p_laplacian(2.0);
    let caps: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| radial_ball_capacity(&RadialGrid::new(3, 1.0, n).unwrap(), 0.0, &op, &NewtonParams::default()).unwrap())
        .collect();
    assert!(caps.windows(2).all(|w| w[1] <= 0.55 * w[0]), "{caps:?}");
    // N = 2: the decay is only logarithmic
    let caps2: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let g = Grid::square(-1.0, 1.0, n).unwrap();
            elliptic_capacity(&CapacitySet::Points { points: vec![[0.0, 0.0]] }, &op, &g, &NewtonParams::default())
                .unwrap()
                .value
        })
        .collect();
    assert!(caps2.windows(2).all(|w| w[1] < w[0]), "{caps2:?}");
}

#[test]
fn grid_capacity_is_monotone_and_positive() {
    let op = OperatorSpec::p_laplacian(3.0).with_eps(1e-6);
    let g = Grid::square(-1.0, 1.0, 32).unwrap();
    let p = NewtonParams::default();
    let small = elliptic_capacity(&CapacitySet::Ball { center: [0.0, 0.0], radius: 0.2 }, &op, &g, &p).unwrap();
    let large = elliptic_capacity(&CapacitySet::Ball { center: [0.0, 0.0], radius: 0.4 }, &op, &g, &p).unwrap();
    let all = elliptic_capacity(&CapacitySet::Interior, &op, &g, &p).unwrap();
    assert!(0.0 < small.value && small.value < large.value && large.value < all.value);
    let touching = CapacitySet::Ball { center: [0.9, 0.0], radius: 0.2 };
    assert!(elliptic_capacity(&touching, &op, &g, &p).is_err());
}

#[test]
fn grid_capacity_of_disc_matches_condenser() {
    // p = 2, N = 2 in the disc of radius 1: 2 pi / ln(R/r)
    let g = Grid::square(-1.0, 1.0, 96).unwrap().with_disc([0.0, 0.0], 1.0).unwrap();
    let op = OperatorSpec::p_laplacian(2.0);
    let c = elliptic_capacity(&CapacitySet::Ball { center: [0.0, 0.0], radius: 0.3 }, &op, &g, &NewtonParams::default())
        .unwrap();
    let exact = condenser_capacity(2, 2.0, 0.3, 1.0);
    assert!((c.value / exact - 1.0).abs() < 0.1, "{} vs {exact}", c.value);
}

#[test]
fn bessel_point_examples() {
    let a = bessel_point_criterion(2.0, 3, 2.0).unwrap();
    assert!(!a.points_null && a.index == 4.0);
    let b = bessel_point_criterion(2.0, 3, 4.0).unwrap();
    assert!(b.points_null);
    assert!(bessel_point_criterion(2.0, 3, 3.0).unwrap().points_null);
    assert!(bessel_point_criterion(2.0, 3, 1.0).is_err());
    assert!(bessel_point_criterion(3.0, 2, 4.0).is_err());
}

fn radial_dirac_samples(cells: usize, mass: f64) -> (Vec<(Point3, f64)>, f64) {
    let rg = RadialGrid::new(3, 1.0, cells).unwrap();
    let op = OperatorSpec::p_laplacian(2.0);
    let (u, _) = solve_radial_elliptic(&rg, &rg.dirac_load(mass), &op, &AbsorptionSpec::None, &NewtonParams::default())
        .unwrap();
    let s = (0..rg.node_count()).map(|i| ([rg.r(i), 0.0, 0.0], u[i])).collect();
    (s, rg.h())
}

#[test]
fn wolff_bound_constant_for_radial_dirac() {
    let cfg = WolffConfig::for_domain(2.0, 3, 2.0);
    let mut kappas = Vec::new();
    for cells in [200, 400] {
        for mass in [0.5, 1.0, 2.0] {
            let (s, h) = radial_dirac_samples(cells, mass);
            let om = dirac().scaled(mass);
            let r = wolff_bound_check(&s, &om, None, &cfg, 3.0 * h).unwrap();
            assert!(r.verdict);
            kappas.push(r.fitted_constant);
        }
    }
    assert!(constants_stable(&kappas, 0.10), "{kappas:?}");
    assert!((kappas[4] * 4.0 * PI - 1.0).abs() < 0.1);
}

#[test]
fn wolff_bound_zero_measure_passes() {
    let cfg = WolffConfig::new(2.0, 3, 1.0);
    let r = wolff_bound_check(&[([0.5, 0.0, 0.0], 0.0)], &PotentialMeasure::zero(), None, &cfg, 0.0).unwrap();
    assert!(r.verdict);
}

#[test]
fn two_atom_bound_stays_within_twice_single() {
    // p = 2, N = 2 on a disc: superposed Green functions
    let g = Arc::new(Grid::square(-1.0, 1.0, 64).unwrap().with_disc([0.0, 0.0], 1.0).unwrap());
    let op = OperatorSpec::p_laplacian(2.0);
    let cfg = WolffConfig::for_domain(2.0, 2, 2.0);
    let solve = |atoms: &[[f64; 2]]| {
        let mut mu = DiscreteMeasure::zero(g.clone(), Ambient::Space);
        for a in atoms {
            mu = mu.with_atom(*a, 1.0);
        }
        let b = mu.elliptic_load().unwrap();
        let (u, _) = plm_core::solver::solve_elliptic(&g, &b, &op, &AbsorptionSpec::None, &NewtonParams::default()).unwrap();
        let s: Vec<(Point3, f64)> = (0..g.node_count()).map(|k| (lift(&g.node(k)), u[k])).collect();
        let om = PotentialMeasure::from_measure(&mu).unwrap();
        wolff_bound_check(&s, &om, None, &cfg, 3.0 * g.h()).unwrap().fitted_constant
    };
    let one = solve(&[[0.0, 0.0]]);
    let two = solve(&[[-0.3, 0.0], [0.3, 0.0]]);
    assert!(two <= 2.0 * one, "{one} {two}");
}

#[test]
fn composition_of_small_dirac() {
    let cfg = WolffConfig::for_domain(2.0, 3, 2.0);
    let om = dirac().scaled(0.1);
    let samples: Vec<Point3> = (1..10).map(|i| [0.1 * i as f64, 0.0, 0.0]).collect();
    let m: Vec<f64> = [100, 200]
        .iter()
        .map(|&shells| {
            let d = SampleDomain::Ball { n_dim: 3, radius: 1.0, shells };
            let r = wolff_composition_check(&om, 2.0, &cfg, &d, &samples).unwrap();
            assert!(r.verdict);
            r.fitted_constant
        })
        .collect();
    assert!(constants_stable(&m, 0.15), "{m:?}");
    let d = SampleDomain::Ball { n_dim: 3, radius: 1.0, shells: 100 };
    let (a, b) = composition_scaling(&om, 2.0, 3.0, &cfg, &d, &samples).unwrap();
    assert!((a - 2.0).abs() < 0.02 && (b - 1.0).abs() < 0.01, "{a} {b}");
}

#[test]
fn composition_of_zero_and_of_supercritical_power() {
    let cfg = WolffConfig::for_domain(2.0, 3, 2.0);
    let d = SampleDomain::Ball { n_dim: 3, radius: 1.0, shells: 50 };
    let s = [[0.5, 0.0, 0.0]];
    let z = wolff_composition_check(&PotentialMeasure::zero(), 2.0, &cfg, &d, &s).unwrap();
    assert!(z.verdict && z.lhs == vec![0.0]);
    let bad = wolff_composition_check(&dirac(), 3.0, &cfg, &d, &s).unwrap();
    assert!(!bad.verdict);
}

#[test]
fn exponential_integrability() {
    assert!((delta_zero(1.0, 2.0) - 2.0f64.ln() / 6.0).abs() < 1e-15);
    let g = Arc::new(Grid::square(-1.0, 1.0, 16).unwrap());
    let cfg = WolffConfig::for_domain(1.5, 2, g.diameter());
    let d0 = delta_zero(1.0, 1.5);
    let zero = exp_integrability_check(&PotentialMeasure::zero(), 1.0, d0 / 2.0, &cfg, &SampleDomain::Grid(g.clone()), None)
        .unwrap();
    assert!((zero.lhs[0] - 4.0).abs() < 1e-12);
    assert!(exp_integrability_check(&dirac(), 1.0, d0, &cfg, &SampleDomain::Grid(g.clone()), None).is_err());
    let cfg3 = WolffConfig::for_domain(2.0, 3, 2.0);
    let vals: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&shells| {
            let d = SampleDomain::Ball { n_dim: 3, radius: 1.0, shells };
            let r = exp_integrability_check(&dirac(), 1.0, delta_zero(1.0, 2.0) / 2.0, &cfg3, &d, None).unwrap();
            r.lhs[0]
        })
        .collect();
    assert!(vals.iter().all(|v| v.is_finite()));
    assert!(constants_stable(&vals, 0.5), "{vals:?}");
}

#[test]
fn calibration_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cal.json");
    let mut c = Calibration::default();
    let mut e = CalibrationEntry::new(3, 2.0);
    e.kappa = Some(0.08);
    c.upsert(e.clone());
    e.kappa = Some(0.09);
    c.upsert(e);
    c.save(&path).unwrap();
    let back = Calibration::load(&path).unwrap();
    assert_eq!(back.entries.len(), 1);
    assert_eq!(back.get(3, 2.0, None, None).unwrap().kappa, Some(0.09));
}

proptest! {
    #[test]
    fn potential_is_monotone_and_scales(
        w in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5, 0.0f64..2.0), 1..5),
        extra in 0.0f64..1.0,
        c in 0.1f64..10.0,
        p in 1.2f64..2.9,
        x in (-0.9f64..0.9, -0.9f64..0.9),
    ) {
        let cfg = WolffConfig::new(p, 3, 2.0);
        let atoms: Vec<(Point3, f64)> = w.iter().map(|(a, b, m)| ([*a, *b, 0.0], *m)).collect();
        let mut bigger = atoms.clone();
        bigger.push(([0.1, -0.2, 0.0], extra));
        let om = PotentialMeasure::atoms(atoms).unwrap();
        let om2 = PotentialMeasure::atoms(bigger).unwrap();
        let pt = [x.0, x.1, 0.3];
        let a = wolff_potential(&om, &pt, &cfg).unwrap();
        let b = wolff_potential(&om2, &pt, &cfg).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12));
        let s = wolff_potential(&om.scaled(c), &pt, &cfg).unwrap();
        prop_assert!((s - c.powf(1.0 / (p - 1.0)) * a).abs() <= 1e-9 * (1.0 + s.abs()));
        let m = maximal_fractional(&om, &pt, 0.0, &cfg).unwrap();
        prop_assert!(m.is_finite() && (a == 0.0 || m > 0.0));
    }
}
