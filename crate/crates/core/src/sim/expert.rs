//! Scripted demonstrator: pure pursuit towards the lookahead point plus a
//! rule-based speed governor that slows down for vehicles and road
//! boundaries ahead.

use crate::controller::{lookahead_goal, HeadingGoal, LOOKAHEAD};
use crate::error::Result;
use crate::geometry::Vec2;
use crate::quaternion::{quat_to_yaw, wrap_angle};
use crate::sim::scene::{ExpertStep, Scene};
use crate::sim::{CONTROL_DT, HORIZON};
use crate::vehicle::{step_ego, Control, EgoState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpertConfig {
    pub cruise_speed: f64,
    pub slow_speed: f64,
    /// Target speed per metre of along-heading distance to the lookahead
    /// point; makes the expert stop at the end of the route.
    pub approach_gain: f64,
    /// Fraction of the speed error closed per control step.
    pub response: f64,
    pub hazard_range: f64,
    pub ado_half_width: f64,
    pub boundary_half_width: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            cruise_speed: 8.0,
            slow_speed: 3.0,
            approach_gain: 4.0 / 3.0,
            response: 0.75,
            hazard_range: 8.0,
            ado_half_width: 2.5,
            boundary_half_width: 1.0,
        }
    }
}

/// `(forward, left)` coordinates of `p` in the ego frame.
pub fn ego_frame(ego: &EgoState, p: Vec2) -> (f64, f64) {
    let f = ego.forward();
    let d = p.sub(ego.position);
    (d.dot(f), d.dot(f.perp()))
}

/// True when an ado or a road-boundary point is in the corridor ahead.
pub fn hazard_ahead(scene: &Scene, ego: &EgoState, t: usize, cfg: &ExpertConfig) -> bool {
    let inside = |p: Vec2, half: f64| {
        let (fwd, lat) = ego_frame(ego, p);
        fwd > 0.0 && fwd <= cfg.hazard_range && lat.abs() < half
    };
    scene.ado_poses(t).any(|a| inside(a.position, cfg.ado_half_width))
        || scene
            .map
            .boundaries
            .iter()
            .flat_map(|b| b.points())
            .any(|p| inside(*p, cfg.boundary_half_width))
}

pub fn expert_control(scene: &Scene, ego: &EgoState, t: usize, cfg: &ExpertConfig) -> Control {
    let goal = lookahead_goal(ego, &scene.route, LOOKAHEAD, HeadingGoal::Bearing);
    let to_goal = goal.position.sub(ego.position);
    let along = to_goal.dot(ego.forward());
    let mut target = (cfg.approach_gain * along.max(0.0)).min(cfg.cruise_speed);
    if hazard_ahead(scene, ego, t, cfg) {
        target = target.min(cfg.slow_speed);
    }
    let v = ego.speed + cfg.response * (target - ego.speed);
    let theta = wrap_angle(quat_to_yaw(&goal.heading) - ego.yaw());
    let omega = 2.0 * v * theta.sin() / to_goal.norm().max(1.0);
    Control::clamped(v, omega)
}

/// Closed-loop expert demonstration over the full horizon; returns the
/// per-step `(state, control)` pairs and the final state.
pub fn run_expert(scene: &Scene, cfg: &ExpertConfig) -> Result<(Vec<ExpertStep>, EgoState)> {
    let mut ego = scene.ego_init;
    let mut steps = Vec::with_capacity(HORIZON);
    for t in 0..HORIZON {
        let control = expert_control(scene, &ego, t, cfg);
        steps.push(ExpertStep { state: ego, control });
        ego = step_ego(&ego, control, CONTROL_DT)?;
    }
    Ok((steps, ego))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scene::{generate_scene, SceneKind};

    #[test]
    fn stored_controls_reproduce_stored_states() {
        for kind in SceneKind::ALL {
            let s = generate_scene(kind, 3).unwrap();
            let mut ego = s.ego_init;
            for step in &s.expert {
                assert!(ego.position.dist(step.state.position) < 1e-9);
                ego = step_ego(&ego, step.control, CONTROL_DT).unwrap();
            }
            assert!(ego.position.dist(s.expert_final.position) < 1e-9);
        }
    }

    #[test]
    fn slows_down_behind_a_vehicle() {
        let mut s = generate_scene(SceneKind::Straight, 2).unwrap();
        let ego = EgoState::new(s.route.point_at(20.0), s.route.heading_at(20.0), 8.0, 0.0);
        let cfg = ExpertConfig::default();
        s.ados.clear();
        let free = expert_control(&s, &ego, 0, &cfg);
        let ahead = ego.position.add(ego.forward().scale(5.0));
        s.ados.push(crate::sim::scene::AdoTrack {
            poses: vec![crate::sim::scene::Pose { position: ahead, yaw: ego.yaw() }; HORIZON],
        });
        let blocked = expert_control(&s, &ego, 0, &cfg);
        assert!(free.v > 7.0);
        assert!((blocked.v - 4.25).abs() < 1e-12);
    }
}
