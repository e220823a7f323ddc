//! Multiplex latent trade-off (MLT) model for directed multiplex networks.
//!
//! The crate covers the full pipeline: graph loading and preprocessing
//! ([`graph`]), simplex and hierarchy parameterization ([`simplex`]), the
//! likelihood with analytic gradients ([`model`]), AdamW training with a
//! plateau scheduler ([`train`]), cross-validated link prediction
//! ([`eval`]), post-fit statistics ([`analysis`]) and planted synthetic
//! networks ([`synth`]).

pub mod analysis;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod rng;
pub mod simplex;
pub mod synth;
pub mod train;

pub use error::{MltError, Result};
