//! Closed-loop driving metrics and the evaluation loop over validation
//! scenes and seeds.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::sim::rollout::{rollout, RolloutTrace};
use crate::sim::scene::Scene;
use crate::sim::{CONTROL_DT, HORIZON};
use crate::vagn::QInit;

/// Centre-to-centre ego/ado distance counted as a close encounter.
pub const CLOSE_ENCOUNTER_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scene_id: String,
    pub seed: u64,
    pub close_encounter_pct: f64,
    pub max_accel: f64,
    pub ade: f64,
    pub goal_distance: f64,
}

pub fn compute_metrics(scene: &Scene, trace: &RolloutTrace, radius: f64) -> Result<MetricsRow> {
    if trace.steps.len() != HORIZON || scene.expert.len() != HORIZON {
        return Err(Error::invalid("trace and demonstration must cover the full horizon"));
    }
    let close = trace
        .steps
        .iter()
        .filter(|s| scene.ado_poses(s.t).any(|a| a.position.dist(s.ego.position) < radius))
        .count();

    let mut max_accel: f64 = 0.0;
    let mut v = scene.ego_init.speed;
    for s in &trace.steps {
        max_accel = max_accel.max((s.decision.control.v - v).abs() / CONTROL_DT);
        v = s.decision.control.v;
    }

    let ours = trace.positions();
    let expert = scene.expert_positions();
    let ade = ours.iter().zip(&expert).map(|(a, b)| a.dist(*b)).sum::<f64>() / ours.len() as f64;

    Ok(MetricsRow {
        scene_id: scene.id.clone(),
        seed: trace.seed,
        close_encounter_pct: 100.0 * close as f64 / HORIZON as f64,
        max_accel,
        ade,
        goal_distance: trace.final_ego.position.dist(scene.goal.position),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics; zero spread for a single value.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

/// Means over scenes, then mean and spread of those means across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub close_encounter_pct: MeanStd,
    pub max_accel: MeanStd,
    pub ade: MeanStd,
    pub goal_distance: MeanStd,
}

pub fn summarize(rows: &[MetricsRow]) -> Summary {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let per_seed = |f: fn(&MetricsRow) -> f64| {
        let means: Vec<f64> = seeds
            .iter()
            .map(|s| {
                let v: Vec<f64> = rows.iter().filter(|r| r.seed == *s).map(f).collect();
                MeanStd::of(&v).mean
            })
            .collect();
        MeanStd::of(&means)
    };
    Summary {
        close_encounter_pct: per_seed(|r| r.close_encounter_pct),
        max_accel: per_seed(|r| r.max_accel),
        ade: per_seed(|r| r.ade),
        goal_distance: per_seed(|r| r.goal_distance),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub radius: f64,
    pub q_init: QInit,
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            radius: CLOSE_ENCOUNTER_RADIUS,
            q_init: QInit::Uniform,
            jobs: 1,
        }
    }
}

/// Rolls the model out on every scene for every seed. Rows come back in
/// `(seed, scene)` order regardless of `jobs`.
pub fn evaluate(model: &Model, scenes: &[Scene], seeds: &[u64], cfg: &EvalConfig) -> Result<Vec<MetricsRow>> {
    if scenes.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("evaluation needs scenes and seeds"));
    }
    if let Some(s) = scenes.iter().find(|s| s.expert.len() != HORIZON) {
        return Err(Error::Schema(format!("scene {} has no full demonstration", s.id)));
    }
    let cells: Vec<(u64, &Scene)> = seeds.iter().flat_map(|&seed| scenes.iter().map(move |s| (seed, s))).collect();
    let run = |&(seed, scene): &(u64, &Scene)| -> Result<MetricsRow> {
        let mut policy = model.policy();
        policy.q_init = cfg.q_init;
        let trace = rollout(scene, &mut policy, seed)?;
        compute_metrics(scene, &trace, cfg.radius)
    };
    let jobs = cfg.jobs.max(1);
    if jobs == 1 {
        return cells.iter().map(run).collect();
    }
    let chunk = cells.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = cells
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(run).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(cells.len());
        for h in handles {
            out.extend(h.join().map_err(|_| Error::invalid("evaluation worker panicked"))??);
        }
        Ok(out)
    })
}

pub fn write_metrics<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_metrics(std::fs::File::create(path)?, rows)
}
