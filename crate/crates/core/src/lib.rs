//! Physics-based model augmentation with an additive neural network,
//! trained on truncated simulation windows with an orthogonal projection
//! penalty that keeps the network out of the span of the baseline model.

pub mod ann;
pub mod artifact;
pub mod augmented;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod projection;
pub mod training;

pub use error::{Error, Result};
