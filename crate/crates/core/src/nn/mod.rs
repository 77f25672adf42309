//! Network building blocks and the dual-branch detector.

pub mod blocks;
pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod model;
pub mod params;

pub use config::NedbConfig;
pub use model::{denormalize, normalize_input, NedbModel, Outputs};
pub use params::{Ctx, Param, ParamId, ParamStore};
