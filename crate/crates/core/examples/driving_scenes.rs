//! Generates one scene of every kind, replays the scripted expert and a
//! constant-speed policy, and writes the first bird's-eye raster of each
//! scene as a PGM strip (channels side by side).
//!
//!     cargo run --example driving_scenes [-- out_dir]

use std::io::Write;
use std::path::PathBuf;

use automaton_drive::metrics::{compute_metrics, CLOSE_ENCOUNTER_RADIUS};
use automaton_drive::perception::RasterSpec;
use automaton_drive::sim::raster::rasterize;
use automaton_drive::sim::rollout::{rollout, ConstantPolicy, ExpertReplay};
use automaton_drive::sim::{generate_scene, SceneKind};
use automaton_drive::vehicle::Control;

fn main() -> automaton_drive::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenes_out".into()));
    std::fs::create_dir_all(&dir)?;
    let spec = RasterSpec::default();
    println!("{:<13} {:>6} {:>5} {:>10} {:>10}", "kind", "route", "ados", "expert_gd", "const_ade");
    for kind in SceneKind::ALL {
        let scene = generate_scene(kind, 7)?;
        let expert = rollout(&scene, &mut ExpertReplay, 0)?;
        let cruise = rollout(&scene, &mut ConstantPolicy(Control::new(6.0, 0.0)), 0)?;
        let e = compute_metrics(&scene, &expert, CLOSE_ENCOUNTER_RADIUS)?;
        let c = compute_metrics(&scene, &cruise, CLOSE_ENCOUNTER_RADIUS)?;
        println!(
            "{:<13} {:>5.1}m {:>5} {:>9.2}m {:>9.2}m",
            kind.name(),
            scene.route.length(),
            scene.ados.len(),
            e.goal_distance,
            c.ade
        );
        scene.save(&dir.join(format!("{}.json", kind.name())))?;

        let raster = rasterize(&scene, &scene.ego_init, 0, spec);
        let (s, ch) = (spec.size, spec.channels);
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{}.pgm", kind.name())))?);
        write!(f, "P5\n{} {}\n255\n", s * ch, s)?;
        for r in 0..s {
            for c in 0..ch {
                let row: Vec<u8> = (0..s).map(|col| if raster.get(c, r, col) { 255 } else { 0 }).collect();
                f.write_all(&row)?;
            }
        }
    }
    println!("scenes and rasters written to {}", dir.display());
    Ok(())
}
