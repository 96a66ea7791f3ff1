//! Probe-guidance engine: a parametric body model fused from multi-frame
//! camera-posed estimates, anatomy-referenced probe poses on the fused torso,
//! and the pose-error metrics used to evaluate them.

pub mod body;
pub mod cli;
pub mod consensus;
pub mod error;
pub mod fitting;
pub mod geometry;
pub mod guidance;
pub mod jsonio;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod session;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
