//! Exposure-mapping graph neural network for heterogeneous peer effect
//! estimation under network interference.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: attributed graphs, ego networks and local structure statistics
//! - [`netgen`]: BA / WS / SBM generators and edge-noise augmentation
//! - [`sim`]: treatment, outcome and ground-truth peer effect simulation
//! - [`autodiff`]: a small dense tensor tape with reverse-mode gradients
//! - [`model`]: the ego-network exposure model, its losses and training loop
//! - [`baselines`]: fraction-of-treated and motif-count exposure estimators
//! - [`eval`]: metrics and seeded experiment orchestration

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod netgen;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
