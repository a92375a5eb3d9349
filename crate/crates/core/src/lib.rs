//! Desk-scale radio map estimation from sparse observations.
//!
//! The crate covers the whole experimental loop: synthetic or on-disk
//! scenes ([`scene`]), observation samplers ([`sampling`]), a dual-stream
//! transformer with cross-attention fusion and hand-written gradients
//! ([`model`]), training and evaluation protocols ([`train`]) and image
//! metrics with an inverse-distance-weighting baseline ([`metrics`]).

pub mod error;
pub mod grid;
pub mod imageio;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod model;
pub mod sampling;
pub mod scene;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
