//! Ego vehicle state, velocity-level controls and unicycle kinematics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::quaternion::{quat_to_yaw, wrap_angle, yaw_to_quat, Quaternion};

pub const V_MAX: f64 = 15.0;
pub const OMEGA_MAX: f64 = 1.5;
/// Footprint used for rasterisation (length, width) in metres.
pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub position: Vec2,
    pub heading: Quaternion,
    pub speed: f64,
    pub yaw_rate: f64,
}

impl EgoState {
    pub fn new(position: Vec2, yaw: f64, speed: f64, yaw_rate: f64) -> Self {
        EgoState {
            position,
            heading: yaw_to_quat(yaw),
            speed,
            yaw_rate,
        }
    }

    pub fn yaw(&self) -> f64 {
        quat_to_yaw(&self.heading)
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.yaw())
    }

    /// World-frame velocity vector.
    pub fn velocity(&self) -> Vec2 {
        self.forward().scale(self.speed)
    }
}

/// Speed and yaw-rate command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub v: f64,
    pub omega: f64,
}

impl Control {
    pub fn new(v: f64, omega: f64) -> Self {
        Control { v, omega }
    }

    pub fn clamped(v: f64, omega: f64) -> Self {
        Control {
            v: v.clamp(0.0, V_MAX),
            omega: omega.clamp(-OMEGA_MAX, OMEGA_MAX),
        }
    }
}

/// Applies `u` for `dt` seconds, integrating the constant-curvature arc
/// exactly. The commanded rates become the new state rates.
pub fn step_ego(ego: &EgoState, u: Control, dt: f64) -> Result<EgoState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(u.v.is_finite() && u.omega.is_finite()) {
        return Err(Error::NonFinite("control".into()));
    }
    let psi = ego.yaw();
    let turn = u.omega * dt;
    let delta = if turn.abs() < 1e-9 {
        Vec2::from_angle(psi + 0.5 * turn).scale(u.v * dt)
    } else {
        let r = u.v / u.omega;
        Vec2::new((psi + turn).sin() - psi.sin(), psi.cos() - (psi + turn).cos()).scale(r)
    };
    Ok(EgoState {
        position: ego.position.add(delta),
        heading: yaw_to_quat(wrap_angle(psi + turn)),
        speed: u.v,
        yaw_rate: u.omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn straight_step_east() {
        let e = EgoState::new(Vec2::new(0.0, 0.0), 0.0, 0.0, 0.0);
        let n = step_ego(&e, Control::new(1.0, 0.0), 0.5).unwrap();
        assert_eq!(n.position, Vec2::new(0.5, 0.0));
        assert_eq!((n.speed, n.yaw_rate), (1.0, 0.0));
    }

    #[test]
    fn turning_in_place() {
        let e = EgoState::new(Vec2::new(2.0, 3.0), 0.3, 5.0, 0.0);
        let n = step_ego(&e, Control::new(0.0, 0.8), 0.5).unwrap();
        assert_eq!(n.position, e.position);
        assert!((n.yaw() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn full_circle_returns_to_start() {
        let omega = 2.0 * PI / 40.0 / 0.5;
        let mut e = EgoState::new(Vec2::new(1.0, -2.0), 0.4, 0.0, 0.0);
        let start = e.position;
        for _ in 0..40 {
            e = step_ego(&e, Control::new(3.0, omega), 0.5).unwrap();
        }
        assert!(e.position.dist(start) < 1e-6);
        assert!(wrap_angle(e.yaw() - 0.4).abs() < 1e-9);
    }

    #[test]
    fn arc_matches_closed_form() {
        // radius v / omega about the centre to the left of the start pose
        let (v, omega, dt) = (4.0, 0.6, 0.5);
        let e = EgoState::new(Vec2::new(0.0, 0.0), 0.0, 0.0, 0.0);
        let n = step_ego(&e, Control::new(v, omega), dt).unwrap();
        let r = v / omega;
        let expect = Vec2::new(r * (omega * dt).sin(), r - r * (omega * dt).cos());
        assert!(n.position.dist(expect) < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let e = EgoState::new(Vec2::new(0.0, 0.0), 0.0, 0.0, 0.0);
        assert!(step_ego(&e, Control::new(1.0, 0.0), 0.0).is_err());
        assert!(step_ego(&e, Control::new(f64::NAN, 0.0), 0.5).is_err());
    }

    #[test]
    fn clamps() {
        assert_eq!(Control::clamped(20.0, -3.0), Control::new(V_MAX, -OMEGA_MAX));
        assert_eq!(Control::clamped(-1.0, 0.2), Control::new(0.0, 0.2));
    }
}
