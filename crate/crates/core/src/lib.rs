//! Sequential news recommendation with coverage-aware attention and a
//! diversity-oriented training objective.

pub mod commands;
pub mod config;
pub mod coverage;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod model;
pub mod news_encoder;
pub mod nn;
pub mod numerics;
pub mod training;
pub mod user_encoder;

pub use error::{Error, Result};
pub use model::CoverageRecommender;

/// Seeded generator used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;
