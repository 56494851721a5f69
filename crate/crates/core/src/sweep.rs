//! Train/evaluate grids: data fraction (ours against the regressor
//! baseline), automaton size, and controller ablations.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineConfig;
use crate::controller::{ControllerConfig, Variant};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, summarize, EvalConfig};
use crate::model::{Model, ModelConfig};
use crate::sim::scene::Scene;
use crate::train::{train, TrainConfig, TrainingSet};
use crate::vagn::QInit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Sample,
    Qstates,
    Ablation,
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(SweepKind::Sample),
            "qstates" => Ok(SweepKind::Qstates),
            "ablation" => Ok(SweepKind::Ablation),
            _ => Err(Error::invalid(format!("unknown sweep kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub train: TrainConfig,
    /// Automaton initialisation during sweep training; replaces `train.q_init`.
    pub q_init: QInit,
    pub controller: ControllerConfig,
    pub baseline: BaselineConfig,
    pub seeds: Vec<u64>,
    pub fractions: Vec<f64>,
    pub states: Vec<usize>,
    pub variants: Vec<Variant>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            train: TrainConfig::default(),
            q_init: QInit::Random,
            controller: ControllerConfig::default(),
            baseline: BaselineConfig::default(),
            seeds: vec![0, 1, 2],
            fractions: vec![0.25, 0.5, 0.75, 1.0],
            states: vec![3, 6, 9, 12],
            variants: vec![Variant::Full, Variant::VagnOnly, Variant::DmpOnly],
        }
    }
}

/// One grid cell: which model, on how much data.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub label: String,
    pub model: ModelConfig,
    pub fraction: f64,
}

pub fn cells(kind: SweepKind, cfg: &SweepConfig) -> Vec<Cell> {
    let ours = |c: ControllerConfig| ModelConfig::Controller(c);
    match kind {
        SweepKind::Sample => cfg
            .fractions
            .iter()
            .flat_map(|&f| {
                [
                    Cell {
                        label: format!("ours@{f}"),
                        model: ours(cfg.controller.clone()),
                        fraction: f,
                    },
                    Cell {
                        label: format!("baseline@{f}"),
                        model: ModelConfig::Baseline(cfg.baseline.clone()),
                        fraction: f,
                    },
                ]
            })
            .collect(),
        SweepKind::Qstates => cfg
            .states
            .iter()
            .map(|&n| Cell {
                label: format!("states={n}"),
                model: ours(ControllerConfig {
                    states: n,
                    ..cfg.controller.clone()
                }),
                fraction: 1.0,
            })
            .collect(),
        SweepKind::Ablation => cfg
            .variants
            .iter()
            .map(|&v| Cell {
                label: v.name().to_string(),
                model: ours(ControllerConfig {
                    variant: v,
                    ..cfg.controller.clone()
                }),
                fraction: 1.0,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: String,
    pub seed: u64,
    pub fraction: f64,
    pub params: usize,
    pub final_loss: f64,
    pub close_encounter_pct: f64,
    pub max_accel: f64,
    pub ade: f64,
    pub goal_distance: f64,
}

/// Trains and evaluates one cell for one seed. The seed drives parameter
/// initialisation, minibatch sampling, the data subset and evaluation.
pub fn run_cell(cell: &Cell, seed: u64, cfg: &SweepConfig, train_scenes: &[Scene], val: &[Scene], eval: &EvalConfig) -> Result<SweepRow> {
    let set = TrainingSet::from_scenes(train_scenes, &cell.model);
    let mut model = Model::new(cell.model.clone(), seed)?;
    let tcfg = TrainConfig {
        seed,
        data_fraction: cell.fraction,
        q_init: cfg.q_init,
        ..cfg.train.clone()
    };
    let report = train(&mut model, &set, &tcfg, |_| {})?;
    let s = summarize(&evaluate(&model, val, &[seed], eval)?);
    Ok(SweepRow {
        cell: cell.label.clone(),
        seed,
        fraction: cell.fraction,
        params: model.param_count(),
        final_loss: report.final_batch_loss,
        close_encounter_pct: s.close_encounter_pct.mean,
        max_accel: s.max_accel.mean,
        ade: s.ade.mean,
        goal_distance: s.goal_distance.mean,
    })
}

/// Runs every `(cell, seed)` pair, `jobs` at a time. Rows are ordered by
/// cell, then seed.
pub fn run_sweep(
    kind: SweepKind,
    cfg: &SweepConfig,
    train_scenes: &[Scene],
    val: &[Scene],
    eval: &EvalConfig,
    jobs: usize,
    progress: impl Fn(&SweepRow) + Sync,
) -> Result<Vec<SweepRow>> {
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("a sweep needs at least one seed"));
    }
    let grid = cells(kind, cfg);
    let tasks: Vec<(&Cell, u64)> = grid.iter().flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    let run = |&(cell, seed): &(&Cell, u64)| {
        let row = run_cell(cell, seed, cfg, train_scenes, val, eval)?;
        progress(&row);
        Ok(row)
    };
    if jobs <= 1 {
        return tasks.iter().map(run).collect();
    }
    let chunk = tasks.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = tasks
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(run).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(tasks.len());
        for h in handles {
            out.extend(h.join().map_err(|_| Error::invalid("sweep worker panicked"))??);
        }
        Ok(out)
    })
}

/// Seed-averaged row per cell, in first-appearance order.
pub fn cell_means(rows: &[SweepRow]) -> Vec<SweepRow> {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.cell.as_str()) {
            labels.push(&r.cell);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.cell == label).collect();
            let n = group.len() as f64;
            let mean = |f: fn(&SweepRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            SweepRow {
                cell: label.to_string(),
                seed: group[0].seed,
                fraction: group[0].fraction,
                params: group[0].params,
                final_loss: mean(|r| r.final_loss),
                close_encounter_pct: mean(|r| r.close_encounter_pct),
                max_accel: mean(|r| r.max_accel),
                ade: mean(|r| r.ade),
                goal_distance: mean(|r| r.goal_distance),
            }
        })
        .collect()
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_sweep(std::fs::File::create(path)?, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::RasterSpec;
    use crate::sim::dataset::generate_scenes;

    #[test]
    fn grid_shapes() {
        let cfg = SweepConfig::default();
        assert_eq!(cells(SweepKind::Sample, &cfg).len(), 8);
        assert_eq!(cells(SweepKind::Qstates, &cfg).len(), 4);
        let ab = cells(SweepKind::Ablation, &cfg);
        assert_eq!(ab.iter().map(|c| c.label.as_str()).collect::<Vec<_>>(), ["full", "vagn_only", "dmp_only"]);
    }

    #[test]
    fn one_row_per_cell_and_seed_deterministically() {
        let raster = RasterSpec {
            channels: 5,
            size: 16,
            resolution: 2.0,
        };
        let cfg = SweepConfig {
            train: TrainConfig {
                iterations: 4,
                batch_size: 2,
                ..TrainConfig::default()
            },
            controller: ControllerConfig {
                raster,
                states: 3,
                ..ControllerConfig::default()
            },
            seeds: vec![0, 1],
            variants: vec![Variant::Full, Variant::DmpOnly],
            ..SweepConfig::default()
        };
        let scenes = generate_scenes(3, 2).unwrap();
        let go = |jobs| run_sweep(SweepKind::Ablation, &cfg, &scenes[..2], &scenes[2..], &EvalConfig::default(), jobs, |_| {}).unwrap();
        let a = go(1);
        assert_eq!(a.len(), 4);
        assert_eq!(a, go(2));
        assert_eq!(cell_means(&a).len(), 2);
    }
}
