//! Synthetic driving world: scenes, rasteriser, scripted expert, rollouts
//! and on-disk datasets.

pub mod dataset;
pub mod expert;
pub mod raster;
pub mod rollout;
pub mod scene;

/// Control period in seconds (2 Hz).
pub const CONTROL_DT: f64 = 0.5;
/// Steps per scene.
pub const HORIZON: usize = 40;

pub use dataset::{generate_dataset, Dataset, DatasetIndex};
pub use raster::rasterize;
pub use rollout::{rollout, ConstantPolicy, Decision, ExpertReplay, Observation, Policy, RolloutTrace};
pub use scene::{generate_scene, Scene, SceneKind};
