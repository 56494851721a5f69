use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use automaton_drive::perception::RasterSpec;
use automaton_drive::pipeline::{self, PipelineConfig};
use automaton_drive::sweep::SweepKind;
use automaton_drive::vagn::QInit;
use automaton_drive::{Error, Result};

#[derive(Parser)]
#[command(name = "automaton-drive", version, about = "Train and evaluate automaton-modulated driving controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset with expert demonstrations.
    GenData {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 80)]
        scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Config file; its model raster sets the raster recorded in the index.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Behaviour-clone a model on a dataset's training split.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `train.iterations`.
        #[arg(long)]
        iterations: Option<usize>,
        /// Worker threads for per-sample gradients (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Roll a checkpoint out on one scene and write the trace CSV.
    Rollout {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Automaton initialisation: uniform or random.
        #[arg(long, default_value = "uniform", value_parser = parse_q_init)]
        q_init: QInit,
    },
    /// Evaluate a checkpoint on the validation split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Number of evaluation seeds.
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        /// Metrics CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// First evaluation seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Close-encounter radius in metres.
        #[arg(long, default_value_t = 3.0)]
        radius: f64,
        #[arg(long, default_value = "uniform", value_parser = parse_q_init)]
        q_init: QInit,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Train and evaluate a grid of models.
    Sweep {
        /// sample, qstates or ablation.
        #[arg(long, value_parser = parse_kind)]
        kind: SweepKind,
        #[arg(long)]
        data: PathBuf,
        /// Sweep CSV to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `sweep.train.iterations`.
        #[arg(long)]
        iterations: Option<usize>,
        /// Number of seeds, starting at 0; overrides `sweep.seeds`.
        #[arg(long)]
        seeds: Option<usize>,
        /// Cells trained in parallel (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Export per-step, per-state saliency maps plus q and gain traces.
    Saliency {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_q_init(s: &str) -> std::result::Result<QInit, String> {
    match s {
        "uniform" => Ok(QInit::Uniform),
        "random" => Ok(QInit::Random),
        _ => Err(format!("expected uniform or random, got {s:?}")),
    }
}

fn parse_kind(s: &str) -> std::result::Result<SweepKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn cores(jobs: Option<usize>) -> usize {
    jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { out, scenes, seed, config } => {
            let raster: RasterSpec = PipelineConfig::load(config.as_deref())?.model.raster();
            let m = pipeline::gen_data(&out, scenes, seed, raster)?;
            println!("wrote {} scenes to {}", m.outputs.len() - 1, out.display());
        }
        Command::Train {
            data,
            out,
            config,
            seed,
            iterations,
            jobs,
        } => {
            let mut cfg = PipelineConfig::load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(i) = iterations {
                cfg.train.iterations = i;
            }
            cfg.train.jobs = cores(jobs);
            let every = (cfg.train.iterations / 20).max(1);
            let m = pipeline::train_cmd(&data, &out, &cfg, |p| {
                if p.iteration % every == 0 {
                    eprintln!("iter {:>6}  loss {:.6}", p.iteration, p.loss);
                }
            })?;
            println!("{}", serde_json::to_string(&m.summary)?);
        }
        Command::Rollout {
            ckpt,
            scene,
            trace,
            seed,
            q_init,
        } => {
            pipeline::rollout_cmd(&ckpt, &scene, &trace, seed, q_init)?;
            println!("wrote {}", trace.display());
        }
        Command::Eval {
            ckpt,
            data,
            seeds,
            out,
            seed,
            radius,
            q_init,
            jobs,
        } => {
            let settings = pipeline::EvalSettings { radius, q_init, seeds };
            let (_, s) = pipeline::eval_cmd(&ckpt, &data, &out, &settings, seed, cores(jobs))?;
            println!("metric,mean,std");
            for (name, v) in [
                ("close_encounter_pct", s.close_encounter_pct),
                ("max_accel", s.max_accel),
                ("ade", s.ade),
                ("goal_distance", s.goal_distance),
            ] {
                println!("{name},{:.4},{:.4}", v.mean, v.std);
            }
        }
        Command::Sweep {
            kind,
            data,
            out,
            config,
            iterations,
            seeds,
            jobs,
        } => {
            let mut cfg = PipelineConfig::load(config.as_deref())?;
            if let Some(i) = iterations {
                cfg.sweep.train.iterations = i;
            }
            if let Some(n) = seeds {
                cfg.sweep.seeds = (0..n as u64).collect();
            }
            pipeline::sweep_cmd(kind, &data, &out, &cfg, cores(jobs), |r| {
                eprintln!("{} seed {}: ade {:.3} goal {:.3}", r.cell, r.seed, r.ade, r.goal_distance)
            })?;
            println!("wrote {}", out.display());
        }
        Command::Saliency { ckpt, scene, out, seed } => {
            let m = pipeline::saliency_cmd(&ckpt, &scene, &out, seed)?;
            println!("wrote {} files to {}", m.outputs.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "code": e.exit_code(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
