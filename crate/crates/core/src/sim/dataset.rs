//! Dataset directories: `index.json` plus one `scene_XXX.json` per scene.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::RasterSpec;
use crate::sim::scene::{generate_scene, scene_seed, Scene, SceneKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub raster: RasterSpec,
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub index: DatasetIndex,
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
}

/// Validation share of a generated dataset (16 of 80 by default).
pub fn validation_count(scenes: usize) -> usize {
    scenes / 5
}

/// Scenes cycle through every kind; the last fifth is held out.
pub fn generate_scenes(count: usize, seed: u64) -> Result<Vec<Scene>> {
    (0..count)
        .map(|i| generate_scene(SceneKind::ALL[i % SceneKind::ALL.len()], scene_seed(seed, i)))
        .collect()
}

pub fn generate_dataset(dir: &Path, count: usize, seed: u64, raster: RasterSpec) -> Result<Dataset> {
    if count < 2 {
        return Err(Error::invalid("a dataset needs at least two scenes"));
    }
    std::fs::create_dir_all(dir)?;
    let scenes = generate_scenes(count, seed)?;
    let n_val = validation_count(count).max(1);
    let names: Vec<String> = (0..count).map(|i| format!("scene_{i:03}.json")).collect();
    for (scene, name) in scenes.iter().zip(&names) {
        scene.save(&dir.join(name))?;
    }
    let index = DatasetIndex {
        raster,
        seed,
        train: names[..count - n_val].to_vec(),
        val: names[count - n_val..].to_vec(),
    };
    std::fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
    let mut train = scenes;
    let val = train.split_off(count - n_val);
    Ok(Dataset { index, train, val })
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join("index.json");
        let text = std::fs::read_to_string(&index_path)?;
        let index: DatasetIndex = serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", index_path.display())))?;
        let load = |names: &[String]| -> Result<Vec<Scene>> { names.iter().map(|n| Scene::load(&dir.join(n))).collect() };
        let train = load(&index.train)?;
        let val = load(&index.val)?;
        Ok(Dataset { index, train, val })
    }

    pub fn scene_paths(dir: &Path, names: &[String]) -> Vec<PathBuf> {
        names.iter().map(|n| dir.join(n)).collect()
    }
}
