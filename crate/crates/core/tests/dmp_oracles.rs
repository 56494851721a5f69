use automaton_drive::dmp::{
    classic_linear_step, damping_ratio, modulated_step, DmpParams, LinearDmpState, QuatDmpState, RbfForcing,
};
use automaton_drive::quaternion::{quat_to_yaw, wrap_angle, yaw_to_quat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.01;

/// Classical RK4 on `e'' = -alpha e' - alpha beta e` in error coordinates.
fn rk4_error(alpha: f64, beta: f64, e0: f64, v0: f64, dt: f64, steps: usize) -> Vec<f64> {
    let f = |e: f64, v: f64| (v, -alpha * v - alpha * beta * e);
    let (mut e, mut v) = (e0, v0);
    let mut out = vec![e];
    for _ in 0..steps {
        let (k1e, k1v) = f(e, v);
        let (k2e, k2v) = f(e + 0.5 * dt * k1e, v + 0.5 * dt * k1v);
        let (k3e, k3v) = f(e + 0.5 * dt * k2e, v + 0.5 * dt * k2v);
        let (k4e, k4v) = f(e + dt * k3e, v + dt * k3v);
        e += dt / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        out.push(e);
    }
    out
}

/// Error from rest for `zeta >= 1`, from the characteristic roots.
fn closed_form_from_rest(alpha: f64, beta: f64, e0: f64, t: f64) -> f64 {
    let disc = alpha * alpha - 4.0 * alpha * beta;
    if disc.abs() < 1e-12 {
        let r = -alpha / 2.0;
        return e0 * (1.0 - r * t) * (r * t).exp();
    }
    let s = disc.sqrt();
    let (r1, r2) = ((-alpha + s) / 2.0, (-alpha - s) / 2.0);
    e0 * (r2 * (r1 * t).exp() - r1 * (r2 * t).exp()) / (r2 - r1)
}

/// Decay rate of the slowest mode.
fn slowest_rate(alpha: f64, beta: f64) -> f64 {
    let disc = alpha * alpha - 4.0 * alpha * beta;
    if disc > 0.0 {
        (alpha - disc.sqrt()) / 2.0
    } else {
        alpha / 2.0
    }
}

fn euler_error(alpha: f64, beta: f64, start: [f64; 2], goal: [f64; 2], steps: usize) -> Vec<[f64; 2]> {
    let params = DmpParams::gains(alpha, beta, 1.0, 1.0);
    let q = QuatDmpState::at_rest(yaw_to_quat(0.0));
    let mut lin = LinearDmpState::at_rest(start);
    let mut out = vec![[start[0] - goal[0], start[1] - goal[1]]];
    for _ in 0..steps {
        lin = modulated_step(&lin, &q, goal, &q.q, &params, DT).unwrap().linear;
        out.push([lin.y[0] - goal[0], lin.y[1] - goal[1]]);
    }
    out
}

#[test]
fn critically_damped_response_matches_closed_form() {
    let alpha = 4.0;
    let traj = euler_error(alpha, 1.0, [1.0, 0.0], [0.0, 0.0], 1000);
    for (k, e) in traj.iter().enumerate().step_by(50) {
        let t = k as f64 * DT;
        let exact = (1.0 + alpha * t / 2.0) * (-alpha * t / 2.0).exp();
        assert!((e[0] - exact).abs() < 0.02, "t={t}: {} vs {exact}", e[0]);
    }
    assert!(traj[1000][0].abs() < 0.02);
}

#[test]
fn rk4_reference_agreement_over_ten_seconds() {
    let mut worst: f64 = 0.0;
    for (alpha, beta) in [(4.0, 1.0), (2.0, 0.5), (1.0, 1.0), (8.0, 4.0), (6.0, 0.5), (0.5, 0.1)] {
        let euler = euler_error(alpha, beta, [3.0, -2.0], [0.0, 0.0], 1000);
        let reference = rk4_error(alpha, beta, 3.0, 0.0, DT / 10.0, 10_000);
        for (k, e) in euler.iter().enumerate() {
            worst = worst.max((e[0] - reference[k * 10]).abs() / 3.0);
        }
    }
    // semi-implicit Euler is first order: the gap scales with alpha * dt
    assert!(worst < 2.5e-2, "{worst}");
}

#[test]
fn rk4_reference_agreement_at_moderate_gains() {
    for (alpha, beta) in [(1.0, 0.25), (0.5, 0.5), (0.2, 0.05)] {
        let euler = euler_error(alpha, beta, [3.0, 0.0], [0.0, 0.0], 1000);
        let reference = rk4_error(alpha, beta, 3.0, 0.0, DT / 10.0, 10_000);
        for (k, e) in euler.iter().enumerate() {
            assert!((e[0] - reference[k * 10]).abs() / 3.0 < 1e-2, "alpha {alpha} beta {beta}");
        }
    }
}

#[test]
fn overdamped_never_overshoots_and_tracks_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let alpha = rng.random_range(0.5..8.0);
        let zeta = rng.random_range(1.0..3.0);
        // zeta = sqrt(alpha / beta) / 2
        let beta = alpha / (4.0 * zeta * zeta);
        let start = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let traj = euler_error(alpha, beta, start, [0.0, 0.0], 2000);
        for (k, e) in traj.iter().enumerate() {
            let t = k as f64 * DT;
            for d in 0..2 {
                let exact = closed_form_from_rest(alpha, beta, start[d], t);
                assert!(exact * start[d] >= 0.0);
                assert!(e[d] * start[d] >= 0.0, "sign flip at t={t}, alpha {alpha} beta {beta}");
                assert!((e[d] - exact).abs() <= 0.05 * start[d].abs() + 1e-12);
            }
        }
    }
}

#[test]
fn stable_gains_converge_from_random_starts() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let alpha = rng.random_range(0.5..8.0);
        let beta = rng.random_range(0.1..4.0);
        let horizon = 20.0 / slowest_rate(alpha, beta);
        let steps = (horizon / DT).ceil() as usize;
        let r = rng.random_range(0.0..10.0);
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let goal = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let start = [goal[0] + r * th.cos(), goal[1] + r * th.sin()];
        let e = *euler_error(alpha, beta, start, goal, steps).last().unwrap();
        assert!(e[0].hypot(e[1]) < 1e-3, "alpha {alpha} beta {beta}: {e:?}");
    }
}

#[test]
fn random_gain_schedules_stay_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let start: [f64; 2] = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let e0 = start[0].hypot(start[1]);
        let mut lin = LinearDmpState::at_rest(start);
        let mut quat = QuatDmpState::at_rest(yaw_to_quat(rng.random_range(-3.0..3.0)));
        let goal_q = yaw_to_quat(0.0);
        let mut params = DmpParams::gains(1.0, 1.0, 1.0, 1.0);
        for k in 0..1000 {
            // hold each draw for 50 steps
            if k % 50 == 0 {
                params = DmpParams::gains(
                    rng.random_range(0.1..8.0),
                    rng.random_range(0.1..8.0),
                    rng.random_range(0.1..8.0),
                    rng.random_range(0.1..8.0),
                );
            }
            let s = modulated_step(&lin, &quat, [0.0, 0.0], &goal_q, &params, DT).unwrap();
            lin = s.linear;
            quat = s.quat;
            assert!(lin.y[0].hypot(lin.y[1]) <= 10.0 * e0);
        }
    }
}

#[test]
fn heading_error_of_ninety_degrees_is_removed() {
    let goal = yaw_to_quat(std::f64::consts::FRAC_PI_2);
    let params = DmpParams::gains(1.0, 1.0, 4.0, 1.0);
    let mut quat = QuatDmpState::at_rest(yaw_to_quat(0.0));
    let lin = LinearDmpState::at_rest([0.0, 0.0]);
    let mut last = f64::INFINITY;
    let mut grew = false;
    for _ in 0..1000 {
        quat = modulated_step(&lin, &quat, [0.0, 0.0], &goal, &params, DT).unwrap().quat;
        let err = wrap_angle(std::f64::consts::FRAC_PI_2 - quat_to_yaw(&quat.q)).abs();
        grew |= err > last + 1e-12;
        last = err;
    }
    assert!(last.to_degrees() < 1.0);
    assert!(!grew, "critically damped heading error should shrink monotonically");
}

#[test]
fn modulated_and_unforced_classic_agree_step_for_step() {
    let params = DmpParams::gains(3.0, 0.9, 2.0, 0.5);
    let forcing = [RbfForcing::zero(5).unwrap(), RbfForcing::zero(5).unwrap()];
    let q = QuatDmpState::at_rest(yaw_to_quat(0.0));
    let goal = [4.0, -1.0];
    let mut a = LinearDmpState::at_rest([0.0, 2.0]);
    let mut b = a;
    for _ in 0..500 {
        a = modulated_step(&a, &q, goal, &q.q, &params, DT).unwrap().linear;
        b = classic_linear_step(&b, goal, &params, Some(&forcing), DT).unwrap();
        for d in 0..2 {
            assert!((a.y[d] - b.y[d]).abs() < 1e-12);
        }
    }
}

#[test]
fn quarter_gain_ratio_is_exactly_critical() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let alpha = rng.random_range(0.01..50.0);
        let z = damping_ratio(alpha, alpha / 4.0).unwrap();
        assert!((z - 1.0).abs() <= 2.0 * f64::EPSILON, "{alpha}: {z}");
    }
}
