//! Exponential-family Langevin dynamics (EFLD): noisy mini-batch optimizers
//! whose update direction is drawn from an exponential family parameterized by
//! the scaled gradient, together with exact divergence oracles and an online
//! meter for gradient-discrepancy generalization bounds.

pub mod bound;
pub mod data;
pub mod divergence;
pub mod engine;
pub mod error;
pub mod expfam;
pub mod idx;
pub mod models;
pub mod quad;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use expfam::{ExpFamily, NoiseDraw, ScaledParam, Support};
