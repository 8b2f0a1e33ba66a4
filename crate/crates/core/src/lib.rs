//! Radio-channel representations for vehicle positioning.
//!
//! The pipeline runs in stages that only communicate through [`dataset::Dataset`]:
//! [`sim`] synthesizes pose-labelled CSI snapshots from a multipath drive,
//! [`wiometrics`] maps each snapshot to one of four real-valued channel
//! representations, [`nn`] regresses position and heading from them, and
//! [`eval`] reports percentile errors against a k-NN baseline.

pub mod array;
pub mod container;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod nn;
pub mod ofdm;
pub mod pipeline;
pub mod pose;
pub mod scenario;
pub mod sim;
pub mod wiometrics;

pub use error::{Error, LoadError, Result};
pub use pose::Pose;

/// Meters per second.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
