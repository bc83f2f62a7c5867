//! Spatiotemporal forecasting of gridded scalar fields.
//!
//! The pipeline reads a stack of 2-D fields ([`grid::GridSeries`]), estimates
//! dense optical flow between consecutive frames ([`flow`]), reconstructs a
//! delay-embedded attractor for one target cell ([`phase_space`]) and trains a
//! flow-gated encoder/decoder ([`model`]) on a small reverse-mode
//! differentiation engine ([`tensor`]). [`train`] holds the loss, optimizer,
//! metrics and experiment harnesses.

pub mod error;
pub mod flow;
pub mod grid;
pub mod model;
pub mod phase_space;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
