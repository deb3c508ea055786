//! Scalar precision abstraction.
//!
//! Every state vector, register and accumulator of a solve uses one IEEE type,
//! selected plan-wide. Compile-time constants are held as `f64` and converted
//! when a program is instantiated for a precision.

use std::fmt::{Debug, Display};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::Float;

/// Selected floating-point precision of a solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" | "float" => Ok(Precision::F32),
            "f64" | "double" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
        }
    }
}

pub trait Real:
    Float + Default + Debug + Display + Send + Sync + std::iter::Sum + 'static
{
    /// Atomic cell with the same size and alignment as `Self`.
    type Atomic: Send + Sync;

    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Reinterprets a mutable slice as atomic cells for concurrent scatter-adds.
    fn as_atomic(slice: &mut [Self]) -> &[Self::Atomic];

    /// Floating-point add through a compare-and-swap loop.
    fn atomic_add(cell: &Self::Atomic, v: Self);
}

impl Real for f32 {
    type Atomic = AtomicU32;
    const PRECISION: Precision = Precision::F32;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn as_atomic(slice: &mut [Self]) -> &[AtomicU32] {
        const _: () = assert!(std::mem::size_of::<f32>() == std::mem::size_of::<AtomicU32>());
        const _: () = assert!(std::mem::align_of::<f32>() == std::mem::align_of::<AtomicU32>());
        // SAFETY: same size and alignment, and the exclusive borrow guarantees no
        // non-atomic access for the lifetime of the returned view.
        unsafe { std::slice::from_raw_parts(slice.as_mut_ptr() as *const AtomicU32, slice.len()) }
    }

    #[inline]
    fn atomic_add(cell: &AtomicU32, v: Self) {
        let mut cur = cell.load(Ordering::Relaxed);
        loop {
            let next = (f32::from_bits(cur) + v).to_bits();
            match cell.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
                Ok(_) => return,
                Err(seen) => cur = seen,
            }
        }
    }
}

impl Real for f64 {
    type Atomic = AtomicU64;
    const PRECISION: Precision = Precision::F64;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    fn as_atomic(slice: &mut [Self]) -> &[AtomicU64] {
        const _: () = assert!(std::mem::size_of::<f64>() == std::mem::size_of::<AtomicU64>());
        const _: () = assert!(std::mem::align_of::<f64>() == std::mem::align_of::<AtomicU64>());
        // SAFETY: see the f32 impl.
        unsafe { std::slice::from_raw_parts(slice.as_mut_ptr() as *const AtomicU64, slice.len()) }
    }

    #[inline]
    fn atomic_add(cell: &AtomicU64, v: Self) {
        let mut cur = cell.load(Ordering::Relaxed);
        loop {
            let next = (f64::from_bits(cur) + v).to_bits();
            match cell.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
                Ok(_) => return,
                Err(seen) => cur = seen,
            }
        }
    }
}
