//! Local learning rules for layered networks: backpropagation, direct
//! feedback alignment, direct Kolen-Pollack, predictive coding and the
//! DKP-PC hybrid, together with the diagnostics that check their dynamics.
//!
//! Everything numeric is generic over [`numkit::Scalar`] (`f32` or `f64`);
//! the aliases below fix the two concrete precisions.

pub mod dataio;
pub mod diagnostics;
mod error;
pub mod learners;
pub mod netgraph;
pub mod numkit;
pub mod optim;

pub use error::{Error, Result};

pub type Tensor32 = numkit::Tensor<f32>;
pub type Tensor64 = numkit::Tensor<f64>;
pub type Network32 = netgraph::Network<f32>;
pub type Network64 = netgraph::Network<f64>;
