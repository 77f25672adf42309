//! Manipulation detection from noise residuals.
//!
//! A learnable high-pass front end ([`constrained`]) feeds a dual-branch
//! network ([`nn`]) whose context branch carries distance-weighted
//! self-attention ([`attention`]). Region and edge predictions are trained
//! jointly with soft Dice losses ([`loss`]) against edge targets derived by
//! binary morphology ([`data::morphology`]).

pub mod attention;
pub mod constrained;
pub mod data;
pub mod error;
pub mod harness;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Shape, Tape, Tensor, Var};
