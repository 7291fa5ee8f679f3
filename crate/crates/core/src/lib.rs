//! Data-driven distributionally robust model predictive control for unknown
//! linear time-invariant systems.
//!
//! The pipeline: simulate or load trajectory data ([`lifting`]), fit a
//! multi-step predictor and its residual ensemble ([`identification`]), size a
//! Wasserstein ambiguity radius ([`radius`]), build and solve the robust
//! finite-horizon program ([`dro`]), and run it in closed loop ([`mpc`]).

pub mod dro;
pub mod error;
pub mod identification;
pub mod lifting;
pub mod lp;
pub mod mpc;
pub mod radius;
pub mod transport;

pub use error::{DrmpcError, Result};
