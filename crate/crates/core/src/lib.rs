//! Additive Gaussian noise in feed-forward optical neural networks.
//!
//! * [`net`]: networks and their noiseless evaluation.
//! * [`noise`], [`monte_carlo`]: the noisy forward pass and sampling statistics.
//! * [`linear`]: exact covariance propagation for diagonal-linear networks.
//! * [`design_a`], [`design_b`]: the tree-replication and combine/split designs.
//! * [`experiments`], [`idx`]: calibration, sweeps and dataset ingestion.

// `!(x > 0.0)` style checks are how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design_a;
pub mod design_b;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod idx;
pub mod linalg;
pub mod linear;
pub mod monte_carlo;
pub mod net;
pub mod noise;
pub mod rng;
pub mod stats;

pub use design_a::DesignASpec;
pub use design_b::DesignBSpec;
pub use error::{Error, Result};
pub use exec::Exec;
pub use net::{Activation, Layer, LipschitzReport, Network, ValidationIssue};
pub use noise::{CovSpec, NoiseProfile};
pub use rng::RngStream;
