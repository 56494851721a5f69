//! End-to-end commands behind the executable. Every artifact-producing
//! command writes exactly one [`RunManifest`] next to its outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::explain::export_saliency;
use crate::metrics::{evaluate, save_metrics, summarize, EvalConfig, Summary, CLOSE_ENCOUNTER_RADIUS};
use crate::model::{Model, ModelConfig};
use crate::perception::RasterSpec;
use crate::sim::dataset::{generate_dataset, Dataset};
use crate::sim::rollout::rollout;
use crate::sim::scene::Scene;
use crate::sweep::{run_sweep, save_sweep, SweepConfig, SweepKind};
use crate::train::{dataset_loss, save_loss_curve, train, TrainConfig, TrainingSet};
use crate::vagn::QInit;

impl Error {
    /// Process exit status: 2 usage, 3 schema, 4 numeric, 5 io.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::Schema(_) | Error::Parse(_) | Error::Shape(_) => 3,
            Error::NonFinite(_) | Error::Domain(_) => 4,
            Error::Io(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "usage",
            Error::Schema(_) | Error::Parse(_) | Error::Shape(_) => "schema",
            Error::NonFinite(_) | Error::Domain(_) => "numeric",
            Error::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub radius: f64,
    pub q_init: QInit,
    pub seeds: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            radius: CLOSE_ENCOUNTER_RADIUS,
            q_init: QInit::Uniform,
            seeds: 3,
        }
    }
}

/// Contents of a `--config` file; every field is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub sweep: SweepConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {}", e.message())))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => PipelineConfig::from_toml(&std::fs::read_to_string(p)?),
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub checkpoint_sha256: Option<String>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Schema(format!("manifest: {e}")))
    }
}

/// `<file>.manifest.json` beside a file output.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn checkpoint_digest(path: &Path) -> Result<String> {
    Ok(checkpoint::digest(&std::fs::read(path)?))
}

fn require_raster(model: &Model, raster: RasterSpec) -> Result<()> {
    if model.config.raster() != raster {
        return Err(Error::Schema(format!(
            "checkpoint expects raster {:?} but the data was generated with {:?}",
            model.config.raster(),
            raster
        )));
    }
    Ok(())
}

pub fn gen_data(out: &Path, scenes: usize, seed: u64, raster: RasterSpec) -> Result<RunManifest> {
    let start = Instant::now();
    let ds = generate_dataset(out, scenes, seed, raster)?;
    let mut outputs = vec![out.join("index.json")];
    outputs.extend(Dataset::scene_paths(out, &ds.index.train));
    outputs.extend(Dataset::scene_paths(out, &ds.index.val));
    let manifest = RunManifest {
        command: "gen-data".into(),
        config: serde_json::json!({ "scenes": scenes, "raster": raster }),
        seed,
        checkpoint_sha256: None,
        outputs,
        wall_clock_s: start.elapsed().as_secs_f64(),
        summary: None,
    };
    manifest.save(&out.join("manifest.json"))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub params: usize,
}

/// Trains on the dataset's training split. The loss curve goes to
/// `<ckpt>.loss.csv`.
pub fn train_cmd(data: &Path, ckpt: &Path, cfg: &PipelineConfig, progress: impl FnMut(&crate::train::LossPoint)) -> Result<RunManifest> {
    let start = Instant::now();
    let ds = Dataset::load(data)?;
    if cfg.model.raster() != ds.index.raster {
        return Err(Error::Schema(format!(
            "model raster {:?} disagrees with the dataset's {:?}",
            cfg.model.raster(),
            ds.index.raster
        )));
    }
    let set = TrainingSet::from_scenes(&ds.train, &cfg.model);
    let mut model = Model::new(cfg.model.clone(), cfg.train.seed)?;
    let initial_loss = dataset_loss(&model, &set)?;
    let report = train(&mut model, &set, &cfg.train, progress)?;
    let final_loss = dataset_loss(&model, &set)?;
    let digest = model.save(ckpt)?;
    let mut curve = ckpt.as_os_str().to_os_string();
    curve.push(".loss.csv");
    let curve = PathBuf::from(curve);
    save_loss_curve(&curve, &report.curve)?;
    let manifest = RunManifest {
        command: "train".into(),
        config: serde_json::to_value(cfg)?,
        seed: cfg.train.seed,
        checkpoint_sha256: Some(digest),
        outputs: vec![ckpt.to_path_buf(), curve],
        wall_clock_s: start.elapsed().as_secs_f64(),
        summary: Some(serde_json::to_value(TrainSummary {
            initial_loss,
            final_loss,
            params: model.param_count(),
        })?),
    };
    manifest.save(&manifest_path(ckpt))?;
    Ok(manifest)
}

pub fn rollout_cmd(ckpt: &Path, scene: &Path, trace_out: &Path, seed: u64, q_init: QInit) -> Result<RunManifest> {
    let start = Instant::now();
    let model = Model::load(ckpt)?;
    let scene = Scene::load(scene)?;
    let mut policy = model.policy();
    policy.q_init = q_init;
    let trace = rollout(&scene, &mut policy, seed)?;
    trace.save_csv(trace_out)?;
    let manifest = RunManifest {
        command: "rollout".into(),
        config: serde_json::json!({ "scene": scene.id, "q_init": q_init }),
        seed,
        checkpoint_sha256: Some(checkpoint_digest(ckpt)?),
        outputs: vec![trace_out.to_path_buf()],
        wall_clock_s: start.elapsed().as_secs_f64(),
        summary: None,
    };
    manifest.save(&manifest_path(trace_out))?;
    Ok(manifest)
}

/// Evaluates on the validation split with seeds `seed .. seed + eval.seeds`.
pub fn eval_cmd(ckpt: &Path, data: &Path, out: &Path, eval: &EvalSettings, seed: u64, jobs: usize) -> Result<(RunManifest, Summary)> {
    let start = Instant::now();
    if eval.seeds == 0 {
        return Err(Error::invalid("--seeds must be at least 1"));
    }
    let model = Model::load(ckpt)?;
    let ds = Dataset::load(data)?;
    require_raster(&model, ds.index.raster)?;
    let seeds: Vec<u64> = (0..eval.seeds as u64).map(|i| seed + i).collect();
    let cfg = EvalConfig {
        radius: eval.radius,
        q_init: eval.q_init,
        jobs,
    };
    let rows = evaluate(&model, &ds.val, &seeds, &cfg)?;
    save_metrics(out, &rows)?;
    let summary = summarize(&rows);
    let manifest = RunManifest {
        command: "eval".into(),
        config: serde_json::to_value(eval)?,
        seed,
        checkpoint_sha256: Some(checkpoint_digest(ckpt)?),
        outputs: vec![out.to_path_buf()],
        wall_clock_s: start.elapsed().as_secs_f64(),
        summary: Some(serde_json::to_value(summary)?),
    };
    manifest.save(&manifest_path(out))?;
    Ok((manifest, summary))
}

pub fn sweep_cmd(
    kind: SweepKind,
    data: &Path,
    out: &Path,
    cfg: &PipelineConfig,
    jobs: usize,
    progress: impl Fn(&crate::sweep::SweepRow) + Sync,
) -> Result<RunManifest> {
    let start = Instant::now();
    let ds = Dataset::load(data)?;
    let sweep = &cfg.sweep;
    if sweep.controller.raster != ds.index.raster || sweep.baseline.raster != ds.index.raster {
        return Err(Error::Schema("sweep model raster disagrees with the dataset".into()));
    }
    let eval = EvalConfig {
        radius: cfg.eval.radius,
        q_init: cfg.eval.q_init,
        jobs: 1,
    };
    let rows = run_sweep(kind, sweep, &ds.train, &ds.val, &eval, jobs, progress)?;
    save_sweep(out, &rows)?;
    let manifest = RunManifest {
        command: "sweep".into(),
        config: serde_json::json!({ "kind": kind, "sweep": sweep, "eval": cfg.eval }),
        seed: sweep.seeds.first().copied().unwrap_or(0),
        checkpoint_sha256: None,
        outputs: vec![out.to_path_buf()],
        wall_clock_s: start.elapsed().as_secs_f64(),
        summary: None,
    };
    manifest.save(&manifest_path(out))?;
    Ok(manifest)
}

pub fn saliency_cmd(ckpt: &Path, scene: &Path, dir: &Path, seed: u64) -> Result<RunManifest> {
    let start = Instant::now();
    let model = Model::load(ckpt)?;
    let scene = Scene::load(scene)?;
    let (_, files) = export_saliency(&model, &scene, seed, dir)?;
    let manifest = RunManifest {
        command: "saliency".into(),
        config: serde_json::json!({ "scene": scene.id }),
        seed,
        checkpoint_sha256: Some(checkpoint_digest(ckpt)?),
        outputs: files.all(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        summary: None,
    };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerConfig;

    #[test]
    fn config_defaults_and_overrides() {
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
        let c = PipelineConfig::from_toml("[train]\niterations = 7\n[model]\nmodel = \"controller\"\nstates = 3\n").unwrap();
        assert_eq!(c.train.iterations, 7);
        assert_eq!(c.train.batch_size, 16);
        match c.model {
            ModelConfig::Controller(m) => assert_eq!(m, ControllerConfig { states: 3, ..ControllerConfig::default() }),
            _ => panic!("wrong model"),
        }
        assert!(matches!(PipelineConfig::from_toml("bogus = 1"), Err(Error::Parse(_))));
    }

    #[test]
    fn manifest_names() {
        assert_eq!(manifest_path(Path::new("out/m.ckpt")), PathBuf::from("out/m.ckpt.manifest.json"));
    }

    #[test]
    fn exit_codes_are_distinct_per_kind() {
        let codes = [
            Error::invalid("x").exit_code(),
            Error::Schema("x".into()).exit_code(),
            Error::NonFinite("x".into()).exit_code(),
            Error::Io(std::io::Error::other("x")).exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4, 5]);
    }
}
