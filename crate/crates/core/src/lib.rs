pub mod autodiff;
pub mod baseline;
pub mod checkpoint;
pub mod controller;
pub mod dmp;
pub mod error;
pub mod explain;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod perception;
pub mod pipeline;
pub mod quaternion;
pub mod sim;
pub mod sweep;
pub mod tensor;
pub mod train;
pub mod vagn;
pub mod vehicle;

pub use error::{Error, Result};
pub use tensor::Tensor;
