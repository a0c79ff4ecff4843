//! Floating-point scalar abstraction shared by the link model and the network engine.

use std::fmt::{Debug, Display};

use ndarray::NdFloat;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar used throughout the crate: `f32` or `f64`.
///
/// Besides the arithmetic bounds needed by `ndarray` it carries a fixed-width
/// little-endian codec so checkpoints can be written bit-exactly.
pub trait Scalar: NdFloat + Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + 'static {
    /// Width in bytes of the serialized form.
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);

    /// Decodes from exactly `Self::BYTES` little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;

    /// Lossy conversion used for constants and sampled values.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any float scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bits().to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(&bytes[..4]);
        f32::from_bits(u32::from_le_bytes(buf))
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bits().to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&bytes[..8]);
        f64::from_bits(u64::from_le_bytes(buf))
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`: `ln(e^y - 1)`.
pub fn softplus_inverse<T: Scalar>(y: T) -> T {
    // y + ln(1 - e^{-y}) avoids overflow for large y
    y + (-(-y).exp_m1()).ln()
}
