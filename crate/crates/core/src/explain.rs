//! Per-step explanation traces of a closed-loop rollout: one saliency map
//! per automaton state, the state distribution and the attractor gains.

use std::path::{Path, PathBuf};

use crate::autodiff::Tape;
use crate::controller::Variant;
use crate::dmp::damping_ratio;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::perception::{encode, qstate_saliency, write_pgm};
use crate::sim::raster::rasterize;
use crate::sim::rollout::{rollout, RolloutTrace};
use crate::sim::scene::Scene;
use crate::tensor::Tensor;

/// Feature maps of the encoder for one raster.
fn feature_maps(model: &Model, raster: &Tensor) -> Result<Tensor> {
    let ModelConfig::Controller(cfg) = &model.config else {
        return Err(Error::invalid("only the automaton controller has saliency maps"));
    };
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let x = tape.constant(raster.clone());
    let f = encode(&mut tape, &bound, &cfg.encoder, x)?;
    Ok(tape.value(f).clone())
}

/// Files written by [`export_saliency`].
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyFiles {
    pub maps: Vec<PathBuf>,
    pub index: PathBuf,
    pub q: PathBuf,
    pub params: PathBuf,
    pub trace: PathBuf,
}

impl SaliencyFiles {
    pub fn all(&self) -> Vec<PathBuf> {
        let mut out = vec![self.index.clone(), self.q.clone(), self.params.clone(), self.trace.clone()];
        out.extend(self.maps.iter().cloned());
        out
    }
}

/// Rolls `model` out on `scene` and writes, into `dir`:
/// `saliency_tXX_qN.pgm` for every step and state, `saliency.csv`
/// (step, state, probability, file), `q.csv`, `params.csv` and `trace.csv`.
pub fn export_saliency(model: &Model, scene: &Scene, seed: u64, dir: &Path) -> Result<(RolloutTrace, SaliencyFiles)> {
    let cfg = match &model.config {
        ModelConfig::Controller(c) if c.variant != Variant::DmpOnly => c,
        _ => return Err(Error::invalid("saliency export needs a model with an automaton")),
    };
    let param = |name: &str| {
        model
            .params
            .get(name)
            .ok_or_else(|| Error::Schema(format!("model has no parameter {name}")))
    };
    let transitions = param("vagn.transitions")?;
    let linear = param("predicate.weight")?;
    std::fs::create_dir_all(dir)?;
    let trace = rollout(scene, &mut model.policy(), seed)?;

    let mut maps = Vec::new();
    let index = dir.join("saliency.csv");
    let mut idx = csv::Writer::from_path(&index)?;
    idx.write_record(["t", "state", "q", "file"])?;
    for step in &trace.steps {
        let raster = rasterize(scene, &step.ego, step.t, cfg.raster);
        let features = feature_maps(model, &raster.to_tensor())?;
        for n in 0..cfg.states {
            let map = qstate_saliency(&features, linear, transitions, &step.decision.pv, n, cfg.raster.size)?;
            let name = format!("saliency_t{:02}_q{n}.pgm", step.t);
            let path = dir.join(&name);
            write_pgm(std::io::BufWriter::new(std::fs::File::create(&path)?), &map)?;
            idx.write_record([step.t.to_string(), n.to_string(), step.decision.q[n].to_string(), name])?;
            maps.push(path);
        }
    }
    idx.flush()?;

    let q = dir.join("q.csv");
    let mut w = csv::Writer::from_path(&q)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..cfg.states).map(|n| format!("q{n}")));
    w.write_record(&header)?;
    for step in &trace.steps {
        let mut rec = vec![step.t.to_string()];
        rec.extend(step.decision.q.iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let params = dir.join("params.csv");
    let mut w = csv::Writer::from_path(&params)?;
    w.write_record(["t", "alpha_y", "beta_y", "alpha_q", "beta_q", "zeta_y", "zeta_q"])?;
    for step in &trace.steps {
        let rec = match &step.decision.params {
            Some(p) => vec![
                step.t.to_string(),
                p.alpha_y.to_string(),
                p.beta_y.to_string(),
                p.alpha_q.to_string(),
                p.beta_q.to_string(),
                damping_ratio(p.alpha_y, p.beta_y)?.to_string(),
                damping_ratio(p.alpha_q, p.beta_q)?.to_string(),
            ],
            None => {
                let mut r = vec![step.t.to_string()];
                r.extend(std::iter::repeat_n(String::new(), 6));
                r
            }
        };
        w.write_record(&rec)?;
    }
    w.flush()?;

    let trace_path = dir.join("trace.csv");
    trace.save_csv(&trace_path)?;
    Ok((
        trace,
        SaliencyFiles {
            maps,
            index,
            q,
            params,
            trace: trace_path,
        },
    ))
}
