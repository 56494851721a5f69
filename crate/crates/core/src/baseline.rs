//! Direct CNN regressor used as the comparison model: the same convolutional
//! backbone, flattened feature maps concatenated with the goal offset in the
//! ego frame, one hidden layer, two linear outputs `(v, omega)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::controller::{mlp, tracking_error, StepInput};
use crate::error::Result;
use crate::params::{he_tensor, BoundParams, ParamSet};
use crate::perception::{encode, init_encoder, EncoderSpec, RasterSpec};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub raster: RasterSpec,
    pub encoder: EncoderSpec,
    pub hidden: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            raster: RasterSpec::default(),
            encoder: EncoderSpec::default(),
            hidden: 32,
        }
    }
}

/// Goal features appended to the image features.
pub const GOAL_FEATURES: usize = 3;

impl BaselineConfig {
    pub fn feature_len(&self) -> Result<usize> {
        let (k, h, w) = self.encoder.output_shape(&self.raster)?;
        Ok(k * h * w + GOAL_FEATURES)
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        init_encoder(&mut params, &self.raster, &self.encoder, &mut rng);
        let n = self.feature_len()?;
        params.insert("head0.weight", he_tensor(&[self.hidden, n], n, &mut rng));
        params.insert("head0.bias", Tensor::zeros(&[self.hidden]));
        params.insert("head1.weight", he_tensor(&[2, self.hidden], self.hidden, &mut rng));
        params.insert("head1.bias", Tensor::zeros(&[2]));
        Ok(params)
    }
}

/// `(forward, left, heading error)` of the tracked point in the ego frame.
pub fn goal_offset(input: &StepInput) -> Result<[f64; 3]> {
    let d = input.goal.position.sub(input.ego.position);
    let f = input.ego.forward();
    Ok([d.dot(f), d.dot(f.perp()), tracking_error(&input.ego, &input.goal)?.heading])
}

/// Unclamped `[v, omega]`; the policy clamps when acting.
pub fn forward(tape: &mut Tape, bound: &BoundParams, cfg: &BaselineConfig, input: &StepInput) -> Result<(Var, Var)> {
    let x = tape.constant(input.raster.clone());
    let features = encode(tape, bound, &cfg.encoder, x)?;
    let n = tape.value(features).numel();
    let flat = tape.reshape(features, &[n])?;
    let goal = tape.constant(Tensor::vector(goal_offset(input)?.to_vec()));
    let joined = tape.concat(&[flat, goal])?;
    let out = mlp(tape, bound, "head", joined)?;
    Ok((out, features))
}
