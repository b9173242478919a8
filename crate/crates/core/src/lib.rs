//! Likelihood ratio statistics for Gaussian models with singular parameter
//! spaces, and samplers for their tangent-cone limit laws.
//!
//! The crate is organised bottom-up:
//!
//! * [`symkit`]: vech coordinates, Gaussian Fisher information, matrix roots.
//! * [`laws`]: exact samplers and empirical distributions for the limit laws.
//! * [`cones`]: squared Euclidean distances to the tangent and algebraic cones.
//! * [`curves`], [`factor`], [`feedback`]: the three model families.
//! * [`harness`]: reproducible Monte Carlo experiments over those models.

pub mod cones;
pub mod curves;
mod error;
pub mod factor;
pub mod feedback;
pub mod harness;
pub mod laws;
pub mod optim;
pub mod rng;
pub mod symkit;

pub use error::{Error, Result};
