//! Central finite differences against the tape's reverse pass.
#![allow(dead_code)]

use automaton_drive::autodiff::{Tape, Var};
use automaton_drive::Tensor;

pub const STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator so that entries whose
/// true derivative is zero compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Largest relative error between reverse-mode gradients of `f` and central
/// differences, over every element of every input. `f` must return a scalar.
pub fn max_grad_error(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.parameter(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let eval = |inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.scalar_value(out).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut work = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let g = grads.get(*v);
        for j in 0..inputs[i].numel() {
            let x = inputs[i].data()[j];
            work[i].data_mut()[j] = x + STEP;
            let up = eval(&work);
            work[i].data_mut()[j] = x - STEP;
            let down = eval(&work);
            work[i].data_mut()[j] = x;
            worst = worst.max(rel_err(g.data()[j], (up - down) / (2.0 * STEP)));
        }
    }
    worst
}

/// Scalar probe `sum(w * out)` with fixed weights, so one backward pass
/// exercises the whole Jacobian of `out`.
pub fn probe(tape: &mut Tape, out: Var) -> Var {
    let value = tape.value(out).clone();
    let w: Vec<f64> = (0..value.numel()).map(|i| 0.3 + 0.7 * ((i * 7919 % 13) as f64 / 13.0) - 0.5).collect();
    let w = tape.constant(Tensor::new(value.shape().to_vec(), w).unwrap());
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod).unwrap()
}

pub fn seeded(shape: &[usize], seed: u64) -> Tensor {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    // bounded away from zero so relu and clamp kinks stay out of reach
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

use automaton_drive::controller::{ControllerConfig, Variant};
use automaton_drive::model::{Model, ModelConfig};
use automaton_drive::perception::RasterSpec;
use automaton_drive::sim::{generate_scene, SceneKind};
use automaton_drive::train::{window_loss, Sample, TrainingSet};
use automaton_drive::vagn::{init_state, QInit};

/// 16x16x5 raster, two predicates, three states.
pub fn tiny_controller(variant: Variant) -> ModelConfig {
    ModelConfig::Controller(ControllerConfig {
        variant,
        raster: RasterSpec {
            channels: 5,
            size: 16,
            resolution: 2.0,
        },
        predicates: 2,
        states: 3,
        hidden: 8,
        ..ControllerConfig::default()
    })
}

/// Model with every parameter, biases included, drawn away from zero.
pub fn scrambled(config: ModelConfig, seed: u64, scale: f64) -> Model {
    let mut model = Model::new(config, seed).unwrap();
    for (i, t) in model.params.tensors_mut().iter_mut().enumerate() {
        let s = seeded(t.shape(), seed * 1000 + i as u64);
        for (d, v) in t.data_mut().iter_mut().zip(s.data()) {
            *d = scale * v;
        }
    }
    model
}

/// Consecutive demonstration steps from a cut-in scene.
pub fn demo_window(config: &ModelConfig, start: usize, len: usize) -> Vec<Sample> {
    let scene = generate_scene(SceneKind::CutIn, 5).unwrap();
    let set = TrainingSet::from_scenes(&[scene], config);
    set.episodes[0][start..start + len].to_vec()
}

/// Worst relative error of every parameter gradient of the training loss.
pub fn model_grad_error(model: &Model, window: &[Sample], q_seed: u64) -> (f64, usize) {
    let q0 = model
        .config
        .states()
        .map(|n| init_state(n, QInit::Random, q_seed).unwrap().to_tensor());
    let (_, grads) = window_loss(model, window, q0.as_ref()).unwrap();
    let mut work = model.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (k, g) in grads.iter().enumerate() {
        for j in 0..g.numel() {
            let x = model.params.tensors()[k].data()[j];
            work.params.tensors_mut()[k].data_mut()[j] = x + STEP;
            let up = window_loss(&work, window, q0.as_ref()).unwrap().0;
            work.params.tensors_mut()[k].data_mut()[j] = x - STEP;
            let down = window_loss(&work, window, q0.as_ref()).unwrap().0;
            work.params.tensors_mut()[k].data_mut()[j] = x;
            let num = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(g.data()[j], num));
            checked += 1;
        }
    }
    (worst, checked)
}
