//! The driving controller: raster -> visual predicates -> automaton state ->
//! DMP gains -> one integration step of the modulated point attractor ->
//! speed and yaw-rate commands.
//!
//! The linear DMP acts on the planar position and the quaternion DMP on the
//! heading about z. The vehicle cannot follow an arbitrary planar
//! acceleration, so the integrated velocity `ydot + yddot * dt` is projected
//! onto the current heading to give the speed command, and the z component
//! of `eta + etadot * dt` gives the yaw-rate command.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dmp::{modulated_accel, zeta_hinge_penalty_var, DmpParams, LinearDmpState, QuatDmpState};
use crate::error::{Error, Result};
use crate::geometry::{Polyline, Vec2};
use crate::params::{he_tensor, normal_tensor, BoundParams, ParamSet};
use crate::perception::{extract_predicates, global_pool_column, init_encoder, init_predicates, EncoderSpec, RasterSpec};
use crate::quaternion::{orientation_error, yaw_to_quat, Quaternion, RotVec};
use crate::vagn;
use crate::vehicle::{Control, EgoState, OMEGA_MAX, V_MAX};

/// Distance along the route from the ego's projection to the tracked point.
pub const LOOKAHEAD: f64 = 6.0;
/// Below this distance to the tracked point the bearing is ill-conditioned
/// and the route tangent is used instead.
pub const BEARING_MIN_DISTANCE: f64 = 2.0;

/// How the heading goal `g_q` is derived from the tracked point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingGoal {
    /// Direction from the ego to the tracked point (tangent when closer than
    /// [`BEARING_MIN_DISTANCE`]).
    #[default]
    Bearing,
    /// Route tangent at the tracked point.
    Tangent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingGoal {
    pub position: Vec2,
    pub heading: Quaternion,
    /// Arc length of the ego's projection onto the route.
    pub s: f64,
}

pub fn lookahead_goal(ego: &EgoState, route: &Polyline, lookahead: f64, mode: HeadingGoal) -> TrackingGoal {
    let s = route.project(ego.position).s;
    let target = s + lookahead;
    let (position, tangent) = if target >= route.length() {
        (route.end(), route.heading_at(route.length()))
    } else {
        (route.point_at(target), route.heading_at(target))
    };
    let to_goal = position.sub(ego.position);
    let yaw = match mode {
        HeadingGoal::Bearing if to_goal.norm() >= BEARING_MIN_DISTANCE => to_goal.angle(),
        _ => tangent,
    };
    TrackingGoal {
        position,
        heading: yaw_to_quat(yaw),
        s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// CNN -> vAGN -> FC -> DMP.
    #[default]
    Full,
    /// CNN -> vAGN -> FC -> (v, omega).
    VagnOnly,
    /// CNN -> pooled features -> FC -> DMP.
    DmpOnly,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::VagnOnly => "vagn_only",
            Variant::DmpOnly => "dmp_only",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "vagn_only" => Ok(Variant::VagnOnly),
            "dmp_only" => Ok(Variant::DmpOnly),
            _ => Err(Error::invalid(format!("unknown variant '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaPenalty {
    pub zeta_min: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub variant: Variant,
    pub raster: RasterSpec,
    pub encoder: EncoderSpec,
    /// Number of visual predicates `M`.
    pub predicates: usize,
    /// Number of automaton states `N`.
    pub states: usize,
    pub hidden: usize,
    pub alpha_max: f64,
    pub beta_max: f64,
    /// Control period in seconds.
    pub dt: f64,
    /// Ties `beta = alpha / 4` so both DMPs are critically damped.
    pub critical_damping: bool,
    pub zeta_penalty: Option<ZetaPenalty>,
    pub lookahead: f64,
    pub heading_goal: HeadingGoal,
    /// Standard deviation of the initial transition weights.
    pub transition_init_std: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            variant: Variant::Full,
            raster: RasterSpec::default(),
            encoder: EncoderSpec::default(),
            predicates: 8,
            states: 6,
            hidden: 32,
            alpha_max: 8.0,
            beta_max: 4.0,
            dt: 0.5,
            critical_damping: false,
            zeta_penalty: None,
            lookahead: LOOKAHEAD,
            heading_goal: HeadingGoal::Bearing,
            transition_init_std: 0.5,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_max > 0.0 && self.beta_max > 0.0 && self.dt > 0.0 && self.lookahead > 0.0) {
            return Err(Error::invalid("gain ranges, dt and lookahead must be positive"));
        }
        if self.states < 2 || self.predicates < 1 || self.hidden < 1 {
            return Err(Error::invalid("need at least 2 states, 1 predicate and 1 hidden unit"));
        }
        if let Some(z) = self.zeta_penalty {
            if !(z.zeta_min > 0.0 && z.weight >= 0.0) {
                return Err(Error::invalid("zeta penalty needs zeta_min > 0 and weight >= 0"));
            }
        }
        self.encoder.output_shape(&self.raster)?;
        Ok(())
    }

    fn uses_automaton(&self) -> bool {
        self.variant != Variant::DmpOnly
    }

    fn head_input(&self) -> usize {
        match self.variant {
            Variant::DmpOnly => self.encoder.feature_channels(),
            _ => self.states,
        }
    }

    fn head_output(&self) -> usize {
        match self.variant {
            Variant::VagnOnly => 2,
            _ => 4,
        }
    }

    /// Freshly initialised parameters.
    pub fn init_params(&self, seed: u64) -> Result<ParamSet> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        init_encoder(&mut params, &self.raster, &self.encoder, &mut rng);
        if self.uses_automaton() {
            init_predicates(&mut params, self.encoder.feature_channels(), self.predicates, &mut rng);
            params.insert(
                "vagn.transitions",
                normal_tensor(&[self.predicates, self.states, self.states], self.transition_init_std, &mut rng),
            );
        }
        let (i, h, o) = (self.head_input(), self.hidden, self.head_output());
        params.insert("fc0.weight", he_tensor(&[h, i], i, &mut rng));
        params.insert("fc0.bias", crate::Tensor::zeros(&[h]));
        params.insert("fc1.weight", he_tensor(&[o, h], h, &mut rng));
        params.insert("fc1.bias", crate::Tensor::zeros(&[o]));
        Ok(params)
    }
}

/// Teacher-forced or live inputs of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInput {
    /// Raster as a `[C, H, W]` tensor.
    pub raster: crate::Tensor,
    pub ego: EgoState,
    pub goal: TrackingGoal,
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    /// `[v, omega]` after clamping.
    pub control: Var,
    pub pv: Option<Var>,
    pub features: Var,
    pub q: Option<Var>,
    /// `[alpha_y, beta_y, alpha_q, beta_q]`, each of shape `[1]`.
    pub params: Option<[Var; 4]>,
    /// Auxiliary damping-ratio penalty, when configured.
    pub penalty: Option<Var>,
}

/// Two affine layers with a ReLU in between; `x` has shape `[in]`.
pub fn mlp(tape: &mut Tape, bound: &BoundParams, prefix: &str, x: Var) -> Result<Var> {
    let n = tape.value(x).numel();
    let col = tape.reshape(x, &[n, 1])?;
    let w0 = bound.get(&format!("{prefix}0.weight"))?;
    let b0 = bound.get(&format!("{prefix}0.bias"))?;
    let h = tape.matmul(w0, col)?;
    let h = tape.add_bias(h, b0)?;
    let h = tape.relu(h)?;
    let w1 = bound.get(&format!("{prefix}1.weight"))?;
    let b1 = bound.get(&format!("{prefix}1.bias"))?;
    let o = tape.matmul(w1, h)?;
    let o = tape.add_bias(o, b1)?;
    let m = tape.value(o).numel();
    tape.reshape(o, &[m])
}

/// Scalars of the ego/goal geometry entering the DMP step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingError {
    /// `(g - y) . heading` in metres.
    pub along: f64,
    /// z component of `2 log(g_q * conj(q))` in radians.
    pub heading: f64,
}

pub fn tracking_error(ego: &EgoState, goal: &TrackingGoal) -> Result<TrackingError> {
    Ok(TrackingError {
        along: goal.position.sub(ego.position).dot(ego.forward()),
        heading: orientation_error(&goal.heading, &ego.heading)?.0[2],
    })
}

/// Gains from the FC head output `o` (4 logits): sigmoids scaled into
/// `(0, alpha_max]` and `(0, beta_max]`, or `beta = alpha / 4`.
fn gains_from_logits(tape: &mut Tape, cfg: &ControllerConfig, o: Var) -> Result<[Var; 4]> {
    let s = tape.sigmoid(o)?;
    let mut out = [s; 4];
    for (i, slot) in out.iter_mut().enumerate() {
        let e = tape.index(s, i)?;
        let scale = if i % 2 == 0 { cfg.alpha_max } else { cfg.beta_max };
        *slot = tape.scale(e, scale)?;
    }
    if cfg.critical_damping {
        out[1] = tape.scale(out[0], 0.25)?;
        out[3] = tape.scale(out[2], 0.25)?;
    }
    Ok(out)
}

/// `x0 + dt * alpha * (beta * err - x0)`, one Euler step of a point attractor
/// seen from the command side.
fn attractor_command(tape: &mut Tape, alpha: Var, beta: Var, err: f64, x0: f64, dt: f64) -> Result<Var> {
    let pull = tape.scale(beta, err)?;
    let pull = tape.add_const(pull, -x0)?;
    let acc = tape.mul(alpha, pull)?;
    let step = tape.scale(acc, dt)?;
    tape.add_const(step, x0)
}

/// Forward pass on `tape`; `q_prev` is required by the automaton variants.
pub fn forward(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ControllerConfig,
    input: &StepInput,
    q_prev: Option<Var>,
) -> Result<ForwardVars> {
    let x = tape.constant(input.raster.clone());
    let (pv, q, features, head_in) = if cfg.uses_automaton() {
        let (pv, features) = extract_predicates(tape, bound, &cfg.encoder, x)?;
        let q_prev = q_prev.ok_or_else(|| Error::invalid("automaton variants need a previous state"))?;
        let w = bound.get("vagn.transitions")?;
        let q = vagn::step(tape, w, pv, q_prev)?;
        (Some(pv), Some(q), features, q)
    } else {
        let features = crate::perception::encode(tape, bound, &cfg.encoder, x)?;
        let pooled = global_pool_column(tape, features)?;
        let k = tape.value(pooled).numel();
        let pooled = tape.reshape(pooled, &[k])?;
        (None, None, features, pooled)
    };
    let o = mlp(tape, bound, "fc", head_in)?;
    if cfg.variant == Variant::VagnOnly {
        let s = tape.sigmoid(o)?;
        let sv = tape.index(s, 0)?;
        let v = tape.scale(sv, V_MAX)?;
        let sw = tape.index(s, 1)?;
        let w = tape.scale(sw, 2.0 * OMEGA_MAX)?;
        let w = tape.add_const(w, -OMEGA_MAX)?;
        let control = tape.concat(&[v, w])?;
        return Ok(ForwardVars {
            control,
            pv,
            features,
            q,
            params: None,
            penalty: None,
        });
    }
    let gains = gains_from_logits(tape, cfg, o)?;
    let err = tracking_error(&input.ego, &input.goal)?;
    let v = attractor_command(tape, gains[0], gains[1], err.along, input.ego.speed, cfg.dt)?;
    let w = attractor_command(tape, gains[2], gains[3], err.heading, input.ego.yaw_rate, cfg.dt)?;
    let v = tape.clamp(v, 0.0, V_MAX)?;
    let w = tape.clamp(w, -OMEGA_MAX, OMEGA_MAX)?;
    let control = tape.concat(&[v, w])?;
    let penalty = match cfg.zeta_penalty {
        Some(z) if z.weight > 0.0 => {
            let a = zeta_hinge_penalty_var(tape, gains[0], gains[1], z.zeta_min, z.weight)?;
            let b = zeta_hinge_penalty_var(tape, gains[2], gains[3], z.zeta_min, z.weight)?;
            Some(tape.add(a, b)?)
        }
        _ => None,
    };
    Ok(ForwardVars {
        control,
        pv,
        features,
        q,
        params: Some(gains),
        penalty,
    })
}

/// DMP gains read back from a forward pass.
pub fn read_params(tape: &Tape, vars: &[Var; 4]) -> DmpParams {
    let g = |i: usize| tape.value(vars[i]).data()[0];
    DmpParams::gains(g(0), g(1), g(2), g(3))
}

/// Gains the FC head assigns to an automaton state, evaluated off-tape.
pub fn fc_params(cfg: &ControllerConfig, params: &ParamSet, q: &vagn::AutomatonState) -> Result<DmpParams> {
    if cfg.variant != Variant::Full {
        return Err(Error::invalid("only the full controller maps automaton states to gains"));
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let qv = tape.constant(q.to_tensor());
    let o = mlp(&mut tape, &bound, "fc", qv)?;
    let g = gains_from_logits(&mut tape, cfg, o)?;
    Ok(read_params(&tape, &g))
}

/// Control obtained by integrating the modulated DMP once over `dt` from the
/// ego's state, with the velocity projected onto the heading. Off-tape
/// counterpart of the DMP part of [`forward`].
pub fn dmp_control(ego: &EgoState, goal: &TrackingGoal, params: &DmpParams, dt: f64) -> Result<Control> {
    let vel = ego.velocity();
    let lin = LinearDmpState {
        y: [ego.position.x, ego.position.y],
        ydot: [vel.x, vel.y],
        x: 1.0,
    };
    let quat = QuatDmpState {
        q: ego.heading,
        eta: RotVec([0.0, 0.0, ego.yaw_rate]),
    };
    let (accel, etadot) = modulated_accel(
        &lin,
        &quat,
        [goal.position.x, goal.position.y],
        &goal.heading,
        params,
    )?;
    let next = Vec2::new(vel.x + accel[0] * dt, vel.y + accel[1] * dt);
    Ok(Control::clamped(
        next.dot(ego.forward()),
        ego.yaw_rate + etadot.0[2] * dt,
    ))
}
