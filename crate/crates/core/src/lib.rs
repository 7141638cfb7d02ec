//! Sensor-aided block matching.
//!
//! Motion vectors for a translating camera are predicted from accelerometer
//! data and a per-block depth map instead of being searched for. A training
//! phase builds and consolidates the depth map from classical block matching;
//! the prediction phase then only refines predicted vectors with a small
//! search window.
// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod appshell;
pub mod blockmatch;
pub mod depthmap;
pub mod error;
pub mod exec;
pub mod frame;
pub mod geometry;
pub mod metrics;
pub mod predictor;
pub mod sensor;
pub mod simulator;

pub use error::{Error, Result};
