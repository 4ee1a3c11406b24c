//! Scalar abstraction for the whole pipeline.
//!
//! Every numeric stage (rolling statistics, thresholds, kinematics, the
//! simulator) is generic over [`Real`], implemented for `f32` and `f64`.
//! `f64` is the default for desk-scale analysis; `f32` mirrors what a
//! small embedded target would run.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + FromStr
    + Display
    + Debug
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for literals and RNG draws.
    fn from_f64_lossy(v: f64) -> Self;

    /// Lossy conversion from `usize` (sample counts, window lengths).
    fn from_usize_lossy(v: usize) -> Self;

    /// Widen to `f64` for reporting and metrics.
    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    fn from_usize_lossy(v: usize) -> Self {
        v as f32
    }

    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    fn from_usize_lossy(v: usize) -> Self {
        v as f64
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}
