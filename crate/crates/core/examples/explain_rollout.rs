//! Trains a small controller briefly, then exports the per-step saliency
//! maps of every automaton state together with the state distribution and
//! attractor gains along one rollout.
//!
//!     cargo run --release --example explain_rollout [-- out_dir]

use std::path::PathBuf;

use automaton_drive::explain::export_saliency;
use automaton_drive::model::{Model, ModelConfig};
use automaton_drive::sim::dataset::generate_scenes;
use automaton_drive::sim::{generate_scene, SceneKind};
use automaton_drive::train::{train, TrainConfig, TrainingSet};

fn main() -> automaton_drive::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "saliency_out".into()));
    let scenes = generate_scenes(15, 1)?;
    let config = ModelConfig::default();
    let mut model = Model::new(config.clone(), 1)?;
    let set = TrainingSet::from_scenes(&scenes, &config);
    train(
        &mut model,
        &set,
        &TrainConfig {
            iterations: 300,
            ..TrainConfig::default()
        },
        |_| {},
    )?;

    let scene = generate_scene(SceneKind::CutIn, 99)?;
    let (trace, files) = export_saliency(&model, &scene, 0, &dir)?;
    println!("{} saliency maps in {}", files.maps.len(), dir.display());
    for step in trace.steps.iter().step_by(8) {
        let dominant = step
            .decision
            .q
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let p = step.decision.params.unwrap();
        println!(
            "t={:>2} dominant state {dominant} v={:.2} alpha_y={:.2} beta_y={:.2}",
            step.t, step.decision.control.v, p.alpha_y, p.beta_y
        );
    }
    Ok(())
}
