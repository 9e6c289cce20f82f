//! Floating-point element abstraction.
//!
//! All numeric kernels are generic over [`Real`] so that training runs in
//! `f32` while oracle and finite-difference tests instantiate the exact same
//! code paths in `f64`.

use ndarray::NdFloat;

/// Scalar element type of every tensor in the crate. Implemented for `f32`
/// and `f64` only.
pub trait Real: NdFloat {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
