//! Behaviour cloning on synthetic demonstrations followed by closed-loop
//! evaluation on held-out scenes. Defaults run in a few seconds; pass
//! `full` to use the 80-scene dataset and 5000 iterations.
//!
//!     cargo run --release --example train_and_evaluate [-- full]

use automaton_drive::metrics::{evaluate, summarize, EvalConfig};
use automaton_drive::model::{Model, ModelConfig};
use automaton_drive::sim::dataset::{generate_scenes, validation_count};
use automaton_drive::train::{dataset_loss, train, TrainConfig, TrainingSet};

fn main() -> automaton_drive::Result<()> {
    let full = std::env::args().any(|a| a == "full");
    let (scenes, iterations) = if full { (80, 5000) } else { (20, 300) };
    let mut train_scenes = generate_scenes(scenes, 0)?;
    let val = train_scenes.split_off(scenes - validation_count(scenes));

    let config = ModelConfig::default();
    let set = TrainingSet::from_scenes(&train_scenes, &config);
    let mut model = Model::new(config, 0)?;
    println!("{} parameters, {} training samples", model.param_count(), set.len());
    println!("initial loss {:.4}", dataset_loss(&model, &set)?);

    let cfg = TrainConfig {
        iterations,
        log_every: iterations / 10,
        ..TrainConfig::default()
    };
    train(&mut model, &set, &cfg, |p| println!("iter {:>5}  batch loss {:.5}", p.iteration, p.loss))?;
    println!("final loss {:.4}", dataset_loss(&model, &set)?);

    let rows = evaluate(&model, &val, &[0, 1, 2], &EvalConfig::default())?;
    let s = summarize(&rows);
    println!("on {} validation scenes:", val.len());
    println!("  goal distance {:.2} m", s.goal_distance.mean);
    println!("  ADE           {:.2} m", s.ade.mean);
    println!("  max accel     {:.2} m/s^2", s.max_accel.mean);
    println!("  close enc.    {:.2} %", s.close_encounter_pct.mean);
    Ok(())
}
