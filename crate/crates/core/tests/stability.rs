mod common;

use approx::assert_relative_eq;
use num_complex::Complex;
use rand::Rng;
use ulthop::control::update_angle_of_attack;
use ulthop::hybrid::step_gait_cycle;
use ulthop::model::Phase;
use ulthop::ode::Tolerances;
use ulthop::stability::{
    analyze, central_difference_jacobian, find_fixed_point, floquet_multipliers, linearize, nominal_apex,
    perturb_and_track, poincare_map, steps_to_fall, sweep, velocity_return_map, GridAxis, ReducedState, Verdict,
};
use ulthop::{ControlParams64, ControllerState, Matrix64, ModelParams64, NewtonOptions, SimOptions64, StabilityReport64};

fn params() -> (ModelParams64, ControlParams64, SimOptions64) {
    (ModelParams64::reference(), ControlParams64::reference(), SimOptions64::default())
}

// power-of-two probe so x +- h is exact
const EXACT_EPS: f64 = 1.0 / (1u64 << 20) as f64;

#[test]
fn affine_map_jacobian_is_exact() {
    let a = [[2.0, -1.0, 0.5], [0.25, 3.0, -4.0], [1.0, 0.0, -0.75]];
    let f = |x: &[f64; 3]| -> Result<[f64; 3], ()> {
        Ok(std::array::from_fn(|i| (0..3).map(|j| a[i][j] * x[j]).sum::<f64>() + i as f64))
    };
    let jac = central_difference_jacobian(f, &[0.3, -1.5, 2.0], EXACT_EPS).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((jac[(i, j)] - a[i][j]).abs() <= 4.0 * f64::EPSILON * 4.0, "({i},{j})");
        }
    }
}

#[test]
fn quadratic_map_jacobian_is_exact() {
    // central differences are exact for quadratics
    let f = |x: &[f64; 2]| -> Result<[f64; 2], ()> { Ok([x[0] * x[0] + 3.0 * x[1], x[0] * x[1] - x[1] * x[1]]) };
    let x = [1.25, -0.5];
    let jac = central_difference_jacobian(f, &x, EXACT_EPS).unwrap();
    let exact = [[2.0 * x[0], 3.0], [x[1], x[0] - 2.0 * x[1]]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((jac[(i, j)] - exact[i][j]).abs() < 1e-12, "({i},{j}) {}", jac[(i, j)]);
        }
    }
}

#[test]
fn jacobian_reports_the_failing_probe() {
    let f = |x: &[f64; 2]| if x[1] > 1.0 { Err("boom") } else { Ok(*x) };
    let err = central_difference_jacobian(f, &[0.0, 1.0], 1e-3).unwrap_err();
    assert_eq!(err, (1, '+', "boom"));
}

#[test]
fn floquet_examples() {
    let (ev, rho) = floquet_multipliers(&Matrix64::diag(&[0.5, -0.9, 0.1])).unwrap();
    assert_relative_eq!(rho, 0.9, epsilon = 1e-14);
    assert_relative_eq!(ev[0].re, -0.9, epsilon = 1e-14);

    // scaled rotation: 0.8 (cos 0.3 +- i sin 0.3)
    let (c, s) = (0.8 * 0.3f64.cos(), 0.8 * 0.3f64.sin());
    let m = Matrix64::from_rows(&[vec![c, -s], vec![s, c]]);
    let (ev, rho) = floquet_multipliers(&m).unwrap();
    assert_relative_eq!(rho, 0.8, epsilon = 1e-14);
    for z in ev {
        assert_relative_eq!(z.re, c, epsilon = 1e-14);
        assert_relative_eq!(z.im.abs(), s, epsilon = 1e-14);
    }

    // companion matrix of (x - 1.2)(x - 0.5)(x + 0.3)
    let m = Matrix64::from_rows(&[vec![1.4, -0.09, -0.18], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
    let (ev, rho) = floquet_multipliers(&m).unwrap();
    assert_relative_eq!(rho, 1.2, epsilon = 1e-12);
    let re: Vec<f64> = ev.iter().map(|z| z.re).collect();
    assert_relative_eq!(re[1], 0.5, epsilon = 1e-12);
    assert_relative_eq!(re[2], -0.3, epsilon = 1e-12);
}

#[test]
fn determinant_is_the_eigenvalue_product() {
    let mut r = common::rng(7);
    for n in [2, 5, 8] {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| r.gen_range(-1.5..1.5)).collect()).collect();
        let m = Matrix64::from_rows(&rows);
        let (ev, _) = floquet_multipliers(&m).unwrap();
        let prod = ev.iter().fold(Complex::new(1.0, 0.0), |p, z| p * z);
        assert!((prod.re - m.determinant()).abs() < 1e-8);
        assert!(prod.im.abs() < 1e-8);
    }
}

#[test]
fn nominal_apex_is_a_fixed_point() {
    let (mp, cp, opts) = params();
    let x = nominal_apex::<f64>();
    let px = poincare_map(&x, &mp, &cp, &opts).unwrap();
    assert!(px.distance(&x) < 1e-8);
    let fp = find_fixed_point(&x, &mp, &cp, &opts, &NewtonOptions::default()).unwrap();
    assert_eq!(fp.iterations, 0);
    assert!(fp.residual < 1e-8);
}

#[test]
fn newton_recovers_the_fixed_point_from_a_faster_guess() {
    let (mp, cp, opts) = params();
    let x = nominal_apex::<f64>();
    let mut guess = x;
    guess.0[4] *= 1.05;
    let fp = find_fixed_point(&guess, &mp, &cp, &opts, &NewtonOptions::default()).unwrap();
    assert!(fp.residual < 1e-8);
    assert!(fp.iterations > 0);
    assert!(fp.state.distance(&x) < 1e-6, "{:?}", fp.state);
}

#[test]
fn apex_map_is_translation_invariant() {
    let (mp, cp, opts) = params();
    let s = nominal_apex::<f64>().embed();
    let cs = ControllerState::new(update_angle_of_attack(s.v_c.x, &cp), Phase::Flight);
    let a = step_gait_cycle(&s, 0.0, &cs, &mp, &cp, &opts, None).unwrap();
    let b = step_gait_cycle(&s.shifted_x(10.0), 0.0, &cs, &mp, &cp, &opts, None).unwrap();
    let ra = ReducedState::project(&a.next_apex);
    let rb = ReducedState::project(&b.next_apex);
    assert!(ra.distance(&rb) < 1e-8);
    assert!((b.next_apex.r_c.x - a.next_apex.r_c.x - 10.0).abs() < 1e-8);
}

#[test]
fn linearization_is_stable_under_probe_halving() {
    let (mp, cp, opts) = params();
    let x = nominal_apex::<f64>();
    let j1 = linearize(&x, 1e-6, &mp, &cp, &opts).unwrap();
    let j2 = linearize(&x, 5e-7, &mp, &cp, &opts).unwrap();
    let scale = j1.max_abs();
    for (a, b) in j1.as_slice().iter().zip(j2.as_slice()) {
        assert!((a - b).abs() < 1e-3 * scale, "{a} vs {b}");
    }
    let (_, r1) = floquet_multipliers(&j1).unwrap();
    let (_, r2) = floquet_multipliers(&j2).unwrap();
    assert!((r1 - r2).abs() < 1e-3 * r1);
}

#[test]
fn tighter_tolerances_barely_move_the_map() {
    let (mp, cp, opts) = params();
    let x = nominal_apex::<f64>();
    let a = poincare_map(&x, &mp, &cp, &opts).unwrap();
    let tight = SimOptions64 {
        tol: Tolerances {
            abs: opts.tol.abs / 2.0,
            rel: opts.tol.rel / 2.0,
        },
        ..opts
    };
    let b = poincare_map(&x, &mp, &cp, &tight).unwrap();
    // largest coordinate is ~6, so the relative tolerance dominates
    assert!(a.distance(&b) < 10.0 * opts.tol.rel * 6.0, "{}", a.distance(&b));
}

#[test]
fn zero_perturbation_stays_put() {
    let (mp, cp, opts) = params();
    let rec = perturb_and_track(&nominal_apex::<f64>(), 0.0, 5, &mp, &cp, &opts);
    assert_eq!(rec.distances[0], 0.0);
    assert_eq!(rec.distances.len(), 6);
    assert!(rec.distances.iter().all(|d| *d < 1e-8));
    assert_eq!(rec.verdict, Verdict::Converged);
}

#[test]
fn steps_to_fall_edge_cases() {
    let (mp, cp, opts) = params();
    let mut low = nominal_apex::<f64>();
    low.0[0] = 0.3;
    assert_eq!(steps_to_fall(&low, 100, &mp, &cp, &opts), 0);
    let slow = ControlParams64 { vx_des: 0.5, ..cp };
    assert!(steps_to_fall(&nominal_apex(), 100, &mp, &slow, &opts) < 100);
}

#[test]
fn frozen_angle_of_attack_equals_zero_gain() {
    let (mp, cp, opts) = params();
    let x = nominal_apex::<f64>();
    let frozen = velocity_return_map(&x, 4, false, &mp, &cp, &opts);
    let zero_gain = velocity_return_map(&x, 4, true, &mp, &ControlParams64 { k_gain: 0.0, ..cp }, &opts);
    assert_eq!(frozen, zero_gain);
    assert_eq!(frozen.velocities[0], x.forward_velocity());
}

#[test]
fn sweep_is_vx_major_and_deterministic() {
    let (mp, cp, opts) = params();
    let vx = GridAxis::new(4.8, 5.0, 0.2);
    let l0 = GridAxis::new(0.085, 0.087, 0.002);
    let a = sweep(&vx, &l0, &nominal_apex(), 3, &mp, &cp, &opts);
    let b = sweep(&vx, &l0, &nominal_apex(), 3, &mp, &cp, &opts);
    assert_eq!(a, b);
    let coords: Vec<(f64, f64)> = a.iter().map(|c| (c.vx_des, c.l0_swing)).collect();
    assert_eq!(coords.len(), 4);
    assert_relative_eq!(coords[0].0, 4.8);
    assert_relative_eq!(coords[1].0, 4.8);
    assert_relative_eq!(coords[1].1, 0.087);
    assert_relative_eq!(coords[2].0, 5.0);
    for c in &a {
        let cp = ControlParams64 { vx_des: c.vx_des, l0_swing: c.l0_swing, ..cp };
        assert_eq!(c.steps_survived, steps_to_fall(&nominal_apex(), 3, &mp, &cp, &opts));
    }
}

#[test]
fn report_round_trips_through_json() {
    let (mp, cp, opts) = params();
    let report = analyze(&nominal_apex(), &mp, &cp, &opts, &NewtonOptions::default()).unwrap();
    assert_eq!(report.jacobian.rows(), 8);
    assert_eq!(report.multipliers.len(), 8);
    assert_eq!(report.fixed_point_full[0], 0.0);
    assert_eq!(report.fixed_point_full[6], 0.0);
    let json = serde_json::to_string(&report).unwrap();
    let back: StabilityReport64 = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    let prod = report
        .multipliers
        .iter()
        .fold(Complex::new(1.0, 0.0), |p, (re, im)| p * Complex::new(*re, *im));
    assert!((prod.re - report.determinant).abs() < 1e-8 * report.determinant.abs().max(1.0));
}
