//! Trainable models behind one interface: the automaton controller (and its
//! ablations) and the direct regressor baseline, with checkpoint I/O and a
//! closed-loop policy wrapper.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::baseline::{self, BaselineConfig};
use crate::checkpoint;
use crate::controller::{self, lookahead_goal, ControllerConfig, HeadingGoal, StepInput, LOOKAHEAD};
use crate::dmp::DmpParams;
use crate::error::{Error, Result};
use crate::geometry::Polyline;
use crate::params::{BoundParams, ParamSet};
use crate::perception::{BevRaster, RasterSpec};
use crate::sim::rollout::{Decision, Observation, Policy};
use crate::vagn::{init_state, AutomatonState, QInit};
use crate::vehicle::{Control, EgoState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    Controller(ControllerConfig),
    Baseline(BaselineConfig),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Controller(ControllerConfig::default())
    }
}

impl ModelConfig {
    pub fn raster(&self) -> RasterSpec {
        match self {
            ModelConfig::Controller(c) => c.raster,
            ModelConfig::Baseline(b) => b.raster,
        }
    }

    /// Automaton size, for models that carry an automaton state.
    pub fn states(&self) -> Option<usize> {
        match self {
            ModelConfig::Controller(c) if c.variant != controller::Variant::DmpOnly => Some(c.states),
            _ => None,
        }
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamSet> {
        match self {
            ModelConfig::Controller(c) => c.init_params(seed),
            ModelConfig::Baseline(b) => b.init_params(seed),
        }
    }

    fn tracking(&self) -> (f64, HeadingGoal) {
        match self {
            ModelConfig::Controller(c) => (c.lookahead, c.heading_goal),
            ModelConfig::Baseline(_) => (LOOKAHEAD, HeadingGoal::Bearing),
        }
    }

    /// Inputs of one step: raster tensor plus the tracked goal on `route`.
    pub fn step_input(&self, raster: &BevRaster, ego: &EgoState, route: &Polyline) -> StepInput {
        let (lookahead, mode) = self.tracking();
        StepInput {
            raster: raster.to_tensor(),
            ego: *ego,
            goal: lookahead_goal(ego, route, lookahead, mode),
        }
    }
}

/// Tape handles of one model evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ModelOutput {
    /// `[v, omega]` as trained against.
    pub control: Var,
    pub q: Option<Var>,
    pub pv: Option<Var>,
    pub features: Var,
    pub params: Option<[Var; 4]>,
    pub penalty: Option<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = config.init_params(seed)?;
        Ok(Model { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn forward(&self, tape: &mut Tape, bound: &BoundParams, input: &StepInput, q_prev: Option<Var>) -> Result<ModelOutput> {
        match &self.config {
            ModelConfig::Controller(c) => {
                let f = controller::forward(tape, bound, c, input, q_prev)?;
                Ok(ModelOutput {
                    control: f.control,
                    q: f.q,
                    pv: f.pv,
                    features: f.features,
                    params: f.params,
                    penalty: f.penalty,
                })
            }
            ModelConfig::Baseline(b) => {
                let (control, features) = baseline::forward(tape, bound, b, input)?;
                Ok(ModelOutput {
                    control,
                    q: None,
                    pv: None,
                    features,
                    params: None,
                    penalty: None,
                })
            }
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        checkpoint::encode(&serde_json::to_value(&self.config)?, &self.params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (config, params) = checkpoint::decode(bytes)?;
        let config: ModelConfig = serde_json::from_value(config).map_err(|e| Error::Schema(format!("model config: {e}")))?;
        let expected = config.init_params(0)?;
        if expected.names() != params.names() {
            return Err(Error::Schema("checkpoint parameter names disagree with its config".into()));
        }
        params
            .check_layout(expected.tensors())
            .map_err(|e| Error::Schema(format!("checkpoint layout: {e}")))?;
        Ok(Model { config, params })
    }

    /// Writes the checkpoint and returns its SHA-256 digest.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes)?;
        Ok(checkpoint::digest(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Model::from_bytes(&std::fs::read(path)?)
    }

    pub fn policy(&self) -> ModelPolicy<'_> {
        ModelPolicy {
            model: self,
            q_init: QInit::Uniform,
            q: None,
        }
    }
}

/// Closed-loop wrapper carrying the automaton state between steps.
pub struct ModelPolicy<'a> {
    model: &'a Model,
    /// Automaton initialisation at the start of a rollout.
    pub q_init: QInit,
    q: Option<AutomatonState>,
}

impl Policy for ModelPolicy<'_> {
    fn raster_spec(&self) -> Option<RasterSpec> {
        Some(self.model.config.raster())
    }

    fn reset(&mut self, seed: u64) -> Result<()> {
        self.q = match self.model.config.states() {
            Some(n) => Some(init_state(n, self.q_init, seed)?),
            None => None,
        };
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        let raster = obs
            .raster
            .ok_or_else(|| Error::invalid("model policy needs a raster observation"))?;
        if raster.spec() != self.model.config.raster() {
            return Err(Error::Schema("raster does not match the model".into()));
        }
        let input = self.model.config.step_input(raster, obs.ego, &obs.scene.route);
        let mut tape = Tape::new();
        let bound = self.model.params.bind(&mut tape);
        let q_prev = self.q.as_ref().map(|q| tape.constant(q.to_tensor()));
        let out = self.model.forward(&mut tape, &bound, &input, q_prev)?;
        let c = tape.value(out.control).data();
        let control = Control::clamped(c[0], c[1]);
        let q = match out.q {
            Some(v) => {
                let next = AutomatonState::new(tape.value(v).data().to_vec())?;
                let probs = next.probs().to_vec();
                self.q = Some(next);
                probs
            }
            None => Vec::new(),
        };
        let params: Option<DmpParams> = out.params.map(|p| controller::read_params(&tape, &p));
        let pv = out.pv.map(|v| tape.value(v).data().to_vec()).unwrap_or_default();
        Ok(Decision { control, q, params, pv })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scene, rollout, SceneKind, HORIZON};

    #[test]
    fn checkpoint_round_trip_and_schema_checks() {
        let m = Model::new(ModelConfig::default(), 7).unwrap();
        let back = Model::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back, m);

        let mut other = ControllerConfig::default();
        other.states = 3;
        let wrong = Model {
            config: ModelConfig::Controller(other),
            params: m.params.clone(),
        };
        assert!(matches!(Model::from_bytes(&wrong.to_bytes().unwrap()), Err(Error::Schema(_))));
    }

    #[test]
    fn untrained_rollouts_are_finite_and_deterministic() {
        let s = generate_scene(SceneKind::Straight, 1).unwrap();
        for config in [ModelConfig::default(), ModelConfig::Baseline(BaselineConfig::default())] {
            let m = Model::new(config, 3).unwrap();
            let a = rollout(&s, &mut m.policy(), 0).unwrap();
            let b = rollout(&s, &mut m.policy(), 0).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.steps.len(), HORIZON);
            assert!(a.final_ego.position.x.is_finite());
        }
    }

    #[test]
    fn zero_weight_policy_stays_finite() {
        let s = generate_scene(SceneKind::Straight, 2).unwrap();
        let mut m = Model::new(ModelConfig::default(), 0).unwrap();
        for t in m.params.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        let trace = rollout(&s, &mut m.policy(), 0).unwrap();
        assert_eq!(trace.steps.len(), HORIZON);
        for st in &trace.steps {
            assert!(st.decision.q.iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-12));
            assert!(st.ego.position.x.is_finite() && st.ego.position.y.is_finite());
        }
    }
}
