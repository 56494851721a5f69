//! Behaviour cloning: minibatches of teacher-forced expert steps, a fresh
//! automaton state per sample, MSE against the expert's `(v, omega)` and an
//! optimizer step on the averaged gradient.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::controller::StepInput;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::perception::BevRaster;
use crate::sim::raster::rasterize;
use crate::sim::scene::Scene;
use crate::tensor::Tensor;
use crate::vagn::{init_state_with, QInit};
use crate::vehicle::Control;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub q_init: QInit,
    /// Consecutive steps the automaton is unrolled through per sample.
    pub unroll: usize,
    /// Share of the training scenes used.
    pub data_fraction: f64,
    pub seed: u64,
    /// Loss-curve sampling period in iterations.
    pub log_every: usize,
    /// Worker threads for per-sample gradients.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 5000,
            batch_size: 16,
            optimizer: OptimizerConfig::default(),
            q_init: QInit::Uniform,
            unroll: 1,
            data_fraction: 1.0,
            seed: 0,
            log_every: 10,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.unroll == 0 || self.log_every == 0 || self.jobs == 0 {
            return Err(Error::invalid("batch size, unroll, log period and jobs must be >= 1"));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(Error::invalid(format!("data fraction {} outside (0, 1]", self.data_fraction)));
        }
        Ok(())
    }
}

/// One demonstration step with the inputs the model sees.
#[derive(Debug, Clone)]
pub struct Sample {
    pub raster: BevRaster,
    pub input: StepInput,
    pub target: Control,
}

/// Teacher-forced samples grouped per scene, in time order.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub episodes: Vec<Vec<Sample>>,
}

impl TrainingSet {
    pub fn from_scenes(scenes: &[Scene], config: &ModelConfig) -> Self {
        let spec = config.raster();
        let episodes = scenes
            .iter()
            .map(|scene| {
                scene
                    .expert
                    .iter()
                    .enumerate()
                    .map(|(t, step)| {
                        let raster = rasterize(scene, &step.state, t, spec);
                        let mut input = config.step_input(&raster, &step.state, &scene.route);
                        // kept as bytes; expanded per use
                        input.raster = Tensor::zeros(&[0]);
                        Sample {
                            raster,
                            input,
                            target: step.control,
                        }
                    })
                    .collect()
            })
            .collect();
        TrainingSet { episodes }
    }

    pub fn len(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Seeded subset of `ceil(fraction * episodes)` scenes.
    pub fn subset(&self, fraction: f64, seed: u64) -> TrainingSet {
        let n = ((self.episodes.len() as f64 * fraction).ceil() as usize).clamp(1, self.episodes.len());
        let mut idx: Vec<usize> = (0..self.episodes.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED));
        idx.truncate(n);
        idx.sort_unstable();
        TrainingSet {
            episodes: idx.into_iter().map(|i| self.episodes[i].clone()).collect(),
        }
    }
}

fn full_input(sample: &Sample) -> StepInput {
    StepInput {
        raster: sample.raster.to_tensor(),
        ..sample.input.clone()
    }
}

/// Loss and parameter gradients of one window of consecutive samples,
/// starting from the automaton state `q0`.
pub fn window_loss(model: &Model, window: &[Sample], q0: Option<&Tensor>) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let mut q = q0.map(|q| tape.constant(q.clone()));
    let mut terms = Vec::with_capacity(window.len());
    for sample in window {
        let out = model.forward(&mut tape, &bound, &full_input(sample), q)?;
        let target = tape.constant(Tensor::vector(vec![sample.target.v, sample.target.omega]));
        let mut loss = tape.mse_loss(out.control, target)?;
        if let Some(p) = out.penalty {
            loss = tape.add(loss, p)?;
        }
        terms.push(loss);
        q = out.q.or(q);
    }
    let total = tape.concat(&terms)?;
    let total = tape.sum(total)?;
    let loss = tape.scale(total, 1.0 / window.len() as f64)?;
    let grads = tape.backward(loss)?;
    Ok((tape.scalar_value(loss)?, bound.collect(&grads)))
}

/// Mean single-step loss over every sample, each from a uniform automaton state.
pub fn dataset_loss(model: &Model, set: &TrainingSet) -> Result<f64> {
    let q0 = uniform_state(&model.config)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for sample in set.episodes.iter().flatten() {
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let q = q0.as_ref().map(|q| tape.constant(q.clone()));
        let out = model.forward(&mut tape, &bound, &full_input(sample), q)?;
        let target = tape.constant(Tensor::vector(vec![sample.target.v, sample.target.omega]));
        let loss = tape.mse_loss(out.control, target)?;
        total += tape.scalar_value(loss)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("empty training set"));
    }
    Ok(total / count as f64)
}

fn uniform_state(config: &ModelConfig) -> Result<Option<Tensor>> {
    config
        .states()
        .map(|n| crate::vagn::AutomatonState::uniform(n).map(|q| q.to_tensor()))
        .transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<LossPoint>,
    pub final_batch_loss: f64,
}

pub fn write_loss_curve<W: Write>(out: W, curve: &[LossPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_loss_curve(path: &Path, curve: &[LossPoint]) -> Result<()> {
    write_loss_curve(std::fs::File::create(path)?, curve)
}

struct Job {
    episode: usize,
    start: usize,
    q0: Option<Tensor>,
}

fn run_jobs(model: &Model, set: &TrainingSet, unroll: usize, jobs: &[Job], threads: usize) -> Result<Vec<(f64, Vec<Tensor>)>> {
    let eval = |j: &Job| {
        let ep = &set.episodes[j.episode];
        window_loss(model, &ep[j.start..(j.start + unroll).min(ep.len())], j.q0.as_ref())
    };
    if threads <= 1 || jobs.len() <= 1 {
        return jobs.iter().map(eval).collect();
    }
    let chunk = jobs.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(eval).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(jobs.len());
        for h in handles {
            out.extend(h.join().map_err(|_| Error::invalid("gradient worker panicked"))??);
        }
        Ok(out)
    })
}

/// Trains `model` in place. `progress` is called at every loss-curve sample.
pub fn train(
    model: &mut Model,
    set: &TrainingSet,
    config: &TrainConfig,
    mut progress: impl FnMut(&LossPoint),
) -> Result<TrainReport> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let set = if config.data_fraction < 1.0 {
        set.subset(config.data_fraction, config.seed)
    } else {
        set.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = OptimizerState::new(config.optimizer, &model.params);
    let states = model.config.states();
    let mut curve = Vec::new();
    let mut last = f64::NAN;
    for it in 0..config.iterations {
        let jobs: Vec<Job> = (0..config.batch_size)
            .map(|_| {
                let episode = rng.random_range(0..set.episodes.len());
                let len = set.episodes[episode].len();
                let start = rng.random_range(0..=len.saturating_sub(config.unroll));
                let q0 = states.map(|n| init_state_with(n, config.q_init, &mut rng).map(|q| q.to_tensor()));
                Ok(Job {
                    episode,
                    start,
                    q0: q0.transpose()?,
                })
            })
            .collect::<Result<_>>()?;
        let results = run_jobs(model, &set, config.unroll, &jobs, config.jobs).map_err(|e| match e {
            Error::NonFinite(what) => Error::NonFinite(format!("{what} at iteration {it}; training diverged")),
            other => other,
        })?;
        let m = results.len() as f64;
        let mut grads: Vec<Tensor> = model.params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l / m;
            for (acc, gi) in grads.iter_mut().zip(g) {
                acc.data_mut().iter_mut().zip(gi.data()).for_each(|(a, b)| *a += b / m);
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at iteration {it}; training diverged")));
        }
        opt.step(&mut model.params, &grads)?;
        last = loss;
        if it % config.log_every == 0 || it + 1 == config.iterations {
            let p = LossPoint { iteration: it, loss };
            progress(&p);
            curve.push(p);
        }
    }
    Ok(TrainReport {
        curve,
        final_batch_loss: last,
    })
}
