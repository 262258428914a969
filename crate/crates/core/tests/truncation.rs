use std::sync::Arc;

use plm_core::exponents::{compute_exponents, Envelope};
use plm_core::measures::{Ambient, DiscreteMeasure};
use plm_core::solver::{solve_parabolic, AbsorptionSpec, Grid, OperatorSpec, SolveOptions, SpaceTimeField};
use plm_core::truncation::*;
use proptest::prelude::*;

fn cylinder(cells: usize, t: f64, steps: usize) -> Arc<Grid> {
    Arc::new(Grid::square(-1.0, 1.0, cells).unwrap().with_time(t, steps).unwrap())
}

fn dirac_run(mass: f64) -> SpaceTimeField {
    let g = cylinder(24, 0.2, 20);
    let mu = DiscreteMeasure::zero(g.clone(), Ambient::SpaceTime).with_space_time_atom([0.0, 0.0], 0.0, mass);
    let u0 = vec![0.0; g.node_count()];
    solve_parabolic(g, &mu, &u0, &OperatorSpec::p_laplacian(2.0), &AbsorptionSpec::None, &SolveOptions::default())
        .unwrap()
        .0
}

#[test]
fn clamp_primitive_dominates_shifted_modulus() {
    let t = Truncation::ClampPrimitive { k: 1.0 };
    for i in -400..=400 {
        let r = i as f64 / 40.0;
        assert!(t.apply(r) >= r.abs() - 1.0);
    }
}

#[test]
fn moment_and_primitive_add_to_clamp_times_r() {
    for k in [0.5, 1.0, 3.0] {
        let (a, b) = (Truncation::ClampMoment { k }, Truncation::ClampPrimitive { k });
        for i in -100..=100 {
            let r = i as f64 / 10.0;
            assert!((a.apply(r) + b.apply(r) - r.clamp(-k, k) * r).abs() < 1e-12);
            assert!(a.apply(r) >= 0.0);
        }
    }
}

#[test]
fn energy_is_additive_over_bands_and_monotone_in_k() {
    let u = dirac_run(1.0);
    for k in [0.25, 0.5, 1.0] {
        let whole = truncated_energy(&u, 0.0, 2.0 * k, 2.0);
        let split = truncated_energy(&u, 0.0, k, 2.0) + truncated_energy(&u, k, k, 2.0);
        assert!((whole - split).abs() <= 1e-10 * whole, "{whole} {split}");
        assert!(truncated_energy(&u, 0.0, k, 2.0) <= whole);
    }
}

#[test]
fn tail_lemma_holds_on_solver_outputs() {
    let pc = compute_exponents(2.0, 2).unwrap().pc;
    for mass in [0.5, 1.0, 2.0] {
        let u = dirac_run(mass);
        let w = u.time_weights();
        let mut values = Vec::new();
        let mut volumes = Vec::new();
        for (n, s) in u.slices().iter().enumerate() {
            for (k, v) in s.iter().enumerate() {
                values.push(*v);
                volumes.push(w[n] * u.grid().node_weights()[k]);
            }
        }
        let r = decreasing_rearrangement(&values, &volumes).unwrap();
        let rep = tail_check(&r, &Envelope::power(1.0), 2.0, pc).unwrap();
        assert!(rep.verdict, "{rep:?}");
    }
}

#[test]
fn rearrangement_of_steps() {
    let r = decreasing_rearrangement(&[1.0, -3.0, 2.0], &[1.0, 0.5, 2.0]).unwrap();
    assert_eq!(r.steps, vec![(0.0, 0.5, 3.0), (0.5, 2.5, 2.0), (2.5, 3.5, 1.0)]);
    assert_eq!(r.distribution_closed(2.0), 2.5);
    assert_eq!(r.eval(3.0), 1.0);
    assert!(decreasing_rearrangement(&[1.0], &[1.0, 2.0]).is_err());
}

fn field(values: Vec<f64>) -> SpaceTimeField {
    let g = Arc::new(Grid::interval(0.0, 1.0, 4).unwrap().with_time(1.0, values.len() - 1).unwrap());
    let slices: Vec<Vec<f64>> = values.iter().map(|v| vec![0.0, *v, 2.0 * v, *v, 0.0]).collect();
    SpaceTimeField::new(g.clone(), g.times(), slices).unwrap()
}

proptest! {
    #[test]
    fn truncations_are_lipschitz(k in 0.1f64..5.0, a in -10.0f64..10.0, b in -10.0f64..10.0) {
        for t in [
            Truncation::Clamp { k },
            Truncation::ClampPrimitive { k },
            Truncation::Cutoff { m: k },
            Truncation::CutoffPrimitive { m: k },
            Truncation::Shifted { k, l: 0.5 * k },
            Truncation::Smooth { k },
        ] {
            let l = t.lipschitz();
            prop_assert!((t.apply(a) - t.apply(b)).abs() <= l * (a - b).abs() * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn steklov_is_linear_and_nonexpansive(
        xs in proptest::collection::vec(-5.0f64..5.0, 9),
        ys in proptest::collection::vec(-5.0f64..5.0, 9),
        c in -3.0f64..3.0,
    ) {
        let (x, y) = (field(xs.clone()), field(ys.clone()));
        let combo = field(xs.iter().zip(&ys).map(|(a, b)| a + c * b).collect());
        let sx = steklov_average(&x, 0.25, Direction::Forward).unwrap();
        let sy = steklov_average(&y, 0.25, Direction::Forward).unwrap();
        let sc = steklov_average(&combo, 0.25, Direction::Forward).unwrap();
        for ((a, b), z) in sx.slices().iter().zip(sy.slices()).zip(sc.slices()) {
            for i in 0..a.len() {
                prop_assert!((a[i] + c * b[i] - z[i]).abs() < 1e-9);
            }
        }
        prop_assert!(sx.max_abs() <= x.max_abs() + 1e-12);
        let lx = landes_approx(&x, 4.0, &vec![0.0; 5]).unwrap();
        prop_assert!(lx.max_abs() <= x.max_abs() + 1e-12);
    }
}
