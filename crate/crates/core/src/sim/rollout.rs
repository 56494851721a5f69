//! Synchronous closed-loop rollouts and trace files.

use std::io::Write;
use std::path::Path;

use crate::dmp::DmpParams;
use crate::error::Result;
use crate::perception::{BevRaster, RasterSpec};
use crate::sim::raster::rasterize;
use crate::sim::scene::Scene;
use crate::sim::{CONTROL_DT, HORIZON};
use crate::vehicle::{step_ego, Control, EgoState};

/// What a policy sees at one control step.
pub struct Observation<'a> {
    pub scene: &'a Scene,
    pub t: usize,
    pub ego: &'a EgoState,
    /// Present when [`Policy::raster_spec`] returns a spec.
    pub raster: Option<&'a BevRaster>,
}

/// Per-step internals exposed for traces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decision {
    pub control: Control,
    pub q: Vec<f64>,
    pub params: Option<DmpParams>,
    pub pv: Vec<f64>,
}

impl Decision {
    pub fn control(control: Control) -> Self {
        Decision {
            control,
            ..Decision::default()
        }
    }
}

pub trait Policy {
    /// Raster the policy needs, if any.
    fn raster_spec(&self) -> Option<RasterSpec>;
    /// Called before every rollout.
    fn reset(&mut self, seed: u64) -> Result<()>;
    fn act(&mut self, obs: &Observation) -> Result<Decision>;
}

/// Replays the stored expert controls open loop.
pub struct ExpertReplay;

impl Policy for ExpertReplay {
    fn raster_spec(&self) -> Option<RasterSpec> {
        None
    }

    fn reset(&mut self, _seed: u64) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        Ok(Decision::control(obs.scene.expert[obs.t].control))
    }
}

/// Emits the same control at every step.
pub struct ConstantPolicy(pub Control);

impl Policy for ConstantPolicy {
    fn raster_spec(&self) -> Option<RasterSpec> {
        None
    }

    fn reset(&mut self, _seed: u64) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, _obs: &Observation) -> Result<Decision> {
        Ok(Decision::control(self.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub ego: EgoState,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    pub scene_id: String,
    pub seed: u64,
    pub steps: Vec<TraceStep>,
    pub final_ego: EgoState,
}

impl RolloutTrace {
    /// Ego positions after each control, aligned with the expert's.
    pub fn positions(&self) -> Vec<crate::geometry::Vec2> {
        self.steps
            .iter()
            .skip(1)
            .map(|s| s.ego.position)
            .chain(std::iter::once(self.final_ego.position))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.steps.iter().map(|s| s.decision.q.len()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "t", "x", "y", "yaw", "speed", "yaw_rate", "v_cmd", "omega_cmd", "alpha_y", "beta_y", "alpha_q", "beta_q",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..n).map(|i| format!("q{i}")));
        w.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![
                s.t.to_string(),
                s.ego.position.x.to_string(),
                s.ego.position.y.to_string(),
                s.ego.yaw().to_string(),
                s.ego.speed.to_string(),
                s.ego.yaw_rate.to_string(),
                s.decision.control.v.to_string(),
                s.decision.control.omega.to_string(),
            ];
            match &s.decision.params {
                Some(p) => row.extend([p.alpha_y, p.beta_y, p.alpha_q, p.beta_q].iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
            row.extend((0..n).map(|i| s.decision.q.get(i).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Rolls `policy` out on `scene` for the full horizon, replaying the ados
/// in sync with the ego.
pub fn rollout(scene: &Scene, policy: &mut dyn Policy, seed: u64) -> Result<RolloutTrace> {
    policy.reset(seed)?;
    let spec = policy.raster_spec();
    let mut ego = scene.ego_init;
    let mut steps = Vec::with_capacity(HORIZON);
    for t in 0..HORIZON {
        let raster = spec.map(|s| rasterize(scene, &ego, t, s));
        let decision = policy.act(&Observation {
            scene,
            t,
            ego: &ego,
            raster: raster.as_ref(),
        })?;
        let next = step_ego(&ego, decision.control, CONTROL_DT)?;
        steps.push(TraceStep { t, ego, decision });
        ego = next;
    }
    Ok(RolloutTrace {
        scene_id: scene.id.clone(),
        seed,
        steps,
        final_ego: ego,
    })
}
