//! Scalar abstraction: every numeric kernel in this crate is generic over
//! `Scalar`, instantiated at `f32` or `f64`.
//!
//! Double precision is the reference build (gradient checking needs the
//! headroom); single precision is for throughput runs.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
///
/// The atomic hooks back the lock-free shared parameter store used by the
/// asynchronous trainer. Each slot is read and written as a whole (no torn
/// values), with relaxed ordering: readers may observe a mix of old and new
/// elements across slots, which is the accepted hogwild behavior.
pub trait Scalar:
    Float
    + NumAssignOps
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + Default
    + 'static
{
    type Atomic: Send + Sync;

    fn atomic_new(v: Self) -> Self::Atomic;
    fn atomic_load(cell: &Self::Atomic) -> Self;
    fn atomic_store(cell: &Self::Atomic, v: Self);

    /// Conversion from configuration space (configs hold `f64`).
    fn from_config(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to any Scalar")
    }
}

impl Scalar for f32 {
    type Atomic = AtomicU32;

    fn atomic_new(v: f32) -> AtomicU32 {
        AtomicU32::new(v.to_bits())
    }

    fn atomic_load(cell: &AtomicU32) -> f32 {
        f32::from_bits(cell.load(Ordering::Relaxed))
    }

    fn atomic_store(cell: &AtomicU32, v: f32) {
        cell.store(v.to_bits(), Ordering::Relaxed);
    }
}

impl Scalar for f64 {
    type Atomic = AtomicU64;

    fn atomic_new(v: f64) -> AtomicU64 {
        AtomicU64::new(v.to_bits())
    }

    fn atomic_load(cell: &AtomicU64) -> f64 {
        f64::from_bits(cell.load(Ordering::Relaxed))
    }

    fn atomic_store(cell: &AtomicU64, v: f64) {
        cell.store(v.to_bits(), Ordering::Relaxed);
    }
}
