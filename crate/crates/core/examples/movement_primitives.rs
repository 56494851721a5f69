//! Point-attractor movement primitives: damping regimes of the gain-modulated
//! form, a gain schedule switching mid-trajectory, and a CSV dump.
//!
//!     cargo run --example movement_primitives [-- out.csv]

use automaton_drive::dmp::{damping_ratio, save_trajectory_csv, simulate_modulated, DmpParams, LinearDmpState, QuatDmpState};
use automaton_drive::quaternion::{quat_to_yaw, yaw_to_quat};

fn main() -> automaton_drive::Result<()> {
    let goal = [10.0, 4.0];
    let goal_q = yaw_to_quat(0.8);
    let lin0 = LinearDmpState::at_rest([0.0, 0.0]);
    let quat0 = QuatDmpState::at_rest(yaw_to_quat(0.0));

    for (alpha, beta) in [(4.0, 1.0), (4.0, 4.0), (1.0, 4.0)] {
        let params = DmpParams::gains(alpha, beta, alpha, beta);
        let traj = simulate_modulated(lin0, quat0, goal, &goal_q, |_| params, 0.01, 1500)?;
        let peak = traj.iter().map(|p| p.linear.y[0]).fold(f64::MIN, f64::max);
        let last = traj.last().unwrap();
        println!(
            "alpha {alpha} beta {beta}: zeta {:.3}, peak x {:.3}, final ({:.4}, {:.4}) yaw {:.4}",
            damping_ratio(alpha, beta)?,
            peak,
            last.linear.y[0],
            last.linear.y[1],
            quat_to_yaw(&last.quat.q)
        );
    }

    // soft approach then a stiff, critically damped finish
    let traj = simulate_modulated(
        lin0,
        quat0,
        goal,
        &goal_q,
        |k| if k < 300 { DmpParams::gains(1.0, 0.5, 1.0, 0.5) } else { DmpParams::gains(6.0, 1.5, 6.0, 1.5) },
        0.01,
        1000,
    )?;
    let path = std::env::args().nth(1).unwrap_or_else(|| "dmp_trajectory.csv".into());
    save_trajectory_csv(path.as_ref(), &traj)?;
    println!("wrote {} points to {path}", traj.len());
    Ok(())
}
