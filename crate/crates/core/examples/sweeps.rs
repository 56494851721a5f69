//! Small versions of the three experiment grids: data fraction (against the
//! direct regressor), automaton size and controller ablations.
//!
//!     cargo run --release --example sweeps [-- iterations]

use automaton_drive::metrics::EvalConfig;
use automaton_drive::sim::dataset::generate_scenes;
use automaton_drive::sweep::{cell_means, run_sweep, SweepConfig, SweepKind};
use automaton_drive::train::TrainConfig;

fn main() -> automaton_drive::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let mut train_scenes = generate_scenes(30, 0)?;
    let val = train_scenes.split_off(25);
    let cfg = SweepConfig {
        train: TrainConfig {
            iterations,
            ..TrainConfig::default()
        },
        seeds: vec![0],
        fractions: vec![0.25, 1.0],
        states: vec![3, 12],
        ..SweepConfig::default()
    };
    for kind in [SweepKind::Sample, SweepKind::Qstates, SweepKind::Ablation] {
        let rows = run_sweep(kind, &cfg, &train_scenes, &val, &EvalConfig::default(), 1, |_| {})?;
        println!("{kind:?}");
        for r in cell_means(&rows) {
            println!(
                "  {:<14} params {:>6}  ade {:>6.2}  goal {:>6.2}  close {:>5.1}%",
                r.cell, r.params, r.ade, r.goal_distance, r.close_encounter_pct
            );
        }
    }
    Ok(())
}
