//! Dynamic movement primitives.
//!
//! Two forms are provided:
//!
//! * the classic transformation system with an RBF forcing term and a
//!   decaying canonical phase, for positions and for unit quaternions;
//! * the gain-modulated point attractor, where the four gains
//!   `(alpha_y, beta_y, alpha_q, beta_q)` are supplied from outside at every
//!   step, no forcing term is used and the time constant is folded into the
//!   gains.
//!
//! All integrators are semi-implicit Euler: velocity first, then position
//! (or orientation), then phase.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::quaternion::{orientation_error, qintegrate, quat_to_yaw, Quaternion, RotVec};

/// Default integration step inside one control period.
pub const SUBSTEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDmpState {
    pub y: [f64; 2],
    pub ydot: [f64; 2],
    /// Canonical phase in `(0, 1]`.
    pub x: f64,
}

impl LinearDmpState {
    pub fn at_rest(y: [f64; 2]) -> Self {
        LinearDmpState {
            y,
            ydot: [0.0; 2],
            x: 1.0,
        }
    }

    fn check(&self) -> Result<()> {
        let ok = self.y.iter().chain(&self.ydot).all(|v| v.is_finite()) && self.x.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite("linear DMP state".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuatDmpState {
    pub q: Quaternion,
    /// Scaled angular velocity (rad/s).
    pub eta: RotVec,
}

impl QuatDmpState {
    pub fn at_rest(q: Quaternion) -> Self {
        QuatDmpState { q, eta: RotVec::ZERO }
    }
}

/// Gains of the point attractor plus the classic-form time constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmpParams {
    pub alpha_y: f64,
    pub beta_y: f64,
    pub alpha_q: f64,
    pub beta_q: f64,
    /// Time constant; only the classic form uses it.
    pub tau: f64,
    /// Canonical decay rate.
    pub alpha_x: f64,
}

impl DmpParams {
    /// Gains for the modulated form (`tau = 1`).
    pub fn gains(alpha_y: f64, beta_y: f64, alpha_q: f64, beta_q: f64) -> Self {
        DmpParams {
            alpha_y,
            beta_y,
            alpha_q,
            beta_q,
            tau: 1.0,
            alpha_x: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha_y,
            self.beta_y,
            self.alpha_q,
            self.beta_q,
            self.tau,
            self.alpha_x,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid(format!("DMP parameters must be positive: {self:?}")))
        }
    }
}

/// Normalised radial-basis forcing term for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfForcing {
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RbfForcing {
    pub fn new(centers: Vec<f64>, widths: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != widths.len() || centers.len() != weights.len() {
            return Err(Error::invalid("RBF forcing needs N >= 1 matching centers/widths/weights"));
        }
        if widths.iter().any(|h| *h <= 0.0) {
            return Err(Error::invalid("RBF widths must be positive"));
        }
        Ok(RbfForcing {
            centers,
            widths,
            weights,
        })
    }

    /// Centres spaced along the canonical decay `exp(-alpha_x t)` for
    /// `t in [0, 1]`, widths `1 / (c_{i+1} - c_i)^2` (the last basis reuses
    /// its left neighbour's spacing).
    pub fn with_layout(weights: Vec<f64>, alpha_x: f64) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::invalid("RBF forcing needs at least one basis"));
        }
        let centers: Vec<f64> = (0..n)
            .map(|i| {
                let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                (-alpha_x * t).exp()
            })
            .collect();
        let widths = (0..n)
            .map(|i| {
                if n == 1 {
                    1.0
                } else {
                    let j = if i + 1 < n { i } else { i - 1 };
                    let d = centers[j + 1] - centers[j];
                    1.0 / (d * d)
                }
            })
            .collect();
        RbfForcing::new(centers, widths, weights)
    }

    pub fn zero(n: usize) -> Result<Self> {
        RbfForcing::with_layout(vec![0.0; n], 1.0)
    }
}

/// `f(x) = x * sum(psi_i w_i) / sum(psi_i)` with `psi_i = exp(-h_i (x - c_i)^2)`.
pub fn rbf_eval(forcing: &RbfForcing, x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((c, h), w) in forcing.centers.iter().zip(&forcing.widths).zip(&forcing.weights) {
        let psi = (-h * (x - c) * (x - c)).exp();
        num += psi * w;
        den += psi;
    }
    num / den.max(1e-12) * x
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("time step must be positive, got {dt}")))
    }
}

/// One step of the classic linear DMP
/// `tau ydd = alpha_y (beta_y (g - y) - yd) + f(x)`, `tau xd = -alpha_x x`.
pub fn classic_linear_step(
    state: &LinearDmpState,
    goal: [f64; 2],
    params: &DmpParams,
    forcing: Option<&[RbfForcing; 2]>,
    dt: f64,
) -> Result<LinearDmpState> {
    check_dt(dt)?;
    params.validate()?;
    state.check()?;
    let mut next = *state;
    for d in 0..2 {
        let f = forcing.map_or(0.0, |fs| rbf_eval(&fs[d], state.x));
        let acc = (params.alpha_y * (params.beta_y * (goal[d] - state.y[d]) - state.ydot[d]) + f) / params.tau;
        next.ydot[d] = state.ydot[d] + acc * dt;
        next.y[d] = state.y[d] + next.ydot[d] * dt;
    }
    next.x = state.x - params.alpha_x * state.x / params.tau * dt;
    next.check()?;
    Ok(next)
}

/// One step of the classic quaternion DMP at canonical phase `phase`.
pub fn classic_quat_step(
    state: &QuatDmpState,
    goal: &Quaternion,
    params: &DmpParams,
    forcing: Option<&[RbfForcing; 3]>,
    phase: f64,
    dt: f64,
) -> Result<QuatDmpState> {
    check_dt(dt)?;
    params.validate()?;
    let err = orientation_error(goal, &state.q)?;
    let mut eta = [0.0; 3];
    for d in 0..3 {
        let f = forcing.map_or(0.0, |fs| rbf_eval(&fs[d], phase));
        let etadot = (params.alpha_q * (params.beta_q * err.0[d] - state.eta.0[d]) + f) / params.tau;
        eta[d] = state.eta.0[d] + etadot * dt;
    }
    let eta = RotVec(eta);
    let q = qintegrate(&state.q, &eta, dt, params.tau)?;
    Ok(QuatDmpState { q, eta })
}

/// Result of one modulated step: integrated states and the accelerations
/// evaluated at the incoming state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulatedStep {
    pub linear: LinearDmpState,
    pub quat: QuatDmpState,
    pub accel: [f64; 2],
    pub etadot: RotVec,
}

/// Accelerations of the gain-modulated point attractor at a state.
pub fn modulated_accel(
    lin: &LinearDmpState,
    quat: &QuatDmpState,
    goal: [f64; 2],
    goal_q: &Quaternion,
    params: &DmpParams,
) -> Result<([f64; 2], RotVec)> {
    let accel = [
        params.alpha_y * (params.beta_y * (goal[0] - lin.y[0]) - lin.ydot[0]),
        params.alpha_y * (params.beta_y * (goal[1] - lin.y[1]) - lin.ydot[1]),
    ];
    let err = orientation_error(goal_q, &quat.q)?;
    let etadot = RotVec(std::array::from_fn(|d| {
        params.alpha_q * (params.beta_q * err.0[d] - quat.eta.0[d])
    }));
    if !accel.iter().chain(&etadot.0).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("modulated DMP".into()));
    }
    Ok((accel, etadot))
}

/// One semi-implicit Euler step of the modulated form (no forcing, no
/// canonical system, `tau = 1`).
pub fn modulated_step(
    lin: &LinearDmpState,
    quat: &QuatDmpState,
    goal: [f64; 2],
    goal_q: &Quaternion,
    params: &DmpParams,
    dt: f64,
) -> Result<ModulatedStep> {
    check_dt(dt)?;
    params.validate()?;
    lin.check()?;
    let (accel, etadot) = modulated_accel(lin, quat, goal, goal_q, params)?;
    let mut linear = *lin;
    for d in 0..2 {
        linear.ydot[d] = lin.ydot[d] + accel[d] * dt;
        linear.y[d] = lin.y[d] + linear.ydot[d] * dt;
    }
    let eta = RotVec(std::array::from_fn(|d| quat.eta.0[d] + etadot.0[d] * dt));
    let q = qintegrate(&quat.q, &eta, dt, 1.0)?;
    Ok(ModulatedStep {
        linear,
        quat: QuatDmpState { q, eta },
        accel,
        etadot,
    })
}

/// Damping ratio `alpha / (2 sqrt(alpha beta))` of `ydd + alpha yd + alpha beta y = 0`.
pub fn damping_ratio(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::invalid(format!(
            "damping ratio needs positive gains, got alpha={alpha}, beta={beta}"
        )));
    }
    Ok(alpha / (2.0 * (alpha * beta).sqrt()))
}

/// `weight * max(0, zeta_min - zeta)^2`.
pub fn zeta_hinge_penalty(alpha: f64, beta: f64, zeta_min: f64, weight: f64) -> Result<f64> {
    if zeta_min <= 0.0 {
        return Err(Error::invalid("zeta_min must be positive"));
    }
    let gap = (zeta_min - damping_ratio(alpha, beta)?).max(0.0);
    Ok(weight * gap * gap)
}

/// Differentiable [`zeta_hinge_penalty`] on one-element tape values.
pub fn zeta_hinge_penalty_var(tape: &mut Tape, alpha: Var, beta: Var, zeta_min: f64, weight: f64) -> Result<Var> {
    if zeta_min <= 0.0 {
        return Err(Error::invalid("zeta_min must be positive"));
    }
    // alpha / (2 sqrt(alpha beta)) = sqrt(alpha / beta) / 2
    let ratio = tape.div(alpha, beta)?;
    let root = tape.sqrt(ratio)?;
    let neg_zeta = tape.scale(root, -0.5)?;
    let gap = tape.add_const(neg_zeta, zeta_min)?;
    let hinge = tape.relu(gap)?;
    let sq = tape.mul(hinge, hinge)?;
    tape.scale(sq, weight)
}

/// One row of a dumped trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub linear: LinearDmpState,
    pub quat: QuatDmpState,
    pub params: DmpParams,
}

/// Integrates the modulated form for `steps` steps of `dt`, asking
/// `schedule` for the gains before each step.
pub fn simulate_modulated(
    lin0: LinearDmpState,
    quat0: QuatDmpState,
    goal: [f64; 2],
    goal_q: &Quaternion,
    mut schedule: impl FnMut(usize) -> DmpParams,
    dt: f64,
    steps: usize,
) -> Result<Vec<TrajectoryPoint>> {
    let mut out = Vec::with_capacity(steps + 1);
    let (mut lin, mut quat) = (lin0, quat0);
    for k in 0..steps {
        let params = schedule(k);
        out.push(TrajectoryPoint {
            t: k as f64 * dt,
            linear: lin,
            quat,
            params,
        });
        let s = modulated_step(&lin, &quat, goal, goal_q, &params, dt)?;
        lin = s.linear;
        quat = s.quat;
    }
    let params = schedule(steps);
    out.push(TrajectoryPoint {
        t: steps as f64 * dt,
        linear: lin,
        quat,
        params,
    });
    Ok(out)
}

/// Integrates one control period with constant gains in `substeps` steps.
pub fn integrate_period(
    lin: &LinearDmpState,
    quat: &QuatDmpState,
    goal: [f64; 2],
    goal_q: &Quaternion,
    params: &DmpParams,
    period: f64,
    substeps: usize,
) -> Result<(LinearDmpState, QuatDmpState)> {
    if substeps == 0 {
        return Err(Error::invalid("substeps must be >= 1"));
    }
    let dt = period / substeps as f64;
    let (mut l, mut q) = (*lin, *quat);
    for _ in 0..substeps {
        let s = modulated_step(&l, &q, goal, goal_q, params, dt)?;
        l = s.linear;
        q = s.quat;
    }
    Ok((l, q))
}

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "t", "y_x", "y_y", "ydot_x", "ydot_y", "yaw", "eta_z", "alpha_y", "beta_y", "alpha_q", "beta_q",
];

pub fn write_trajectory_csv<W: Write>(out: W, points: &[TrajectoryPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for p in points {
        let row = [
            p.t,
            p.linear.y[0],
            p.linear.y[1],
            p.linear.ydot[0],
            p.linear.ydot[1],
            quat_to_yaw(&p.quat.q),
            p.quat.eta.0[2],
            p.params.alpha_y,
            p.params.beta_y,
            p.params.alpha_q,
            p.params.beta_q,
        ];
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory_csv(path: &Path, points: &[TrajectoryPoint]) -> Result<()> {
    write_trajectory_csv(std::fs::File::create(path)?, points)
}
