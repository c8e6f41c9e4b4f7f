//! Floating-point scalar abstraction shared by the vector, ranking and
//! statistics code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// A real number type the search core can be instantiated with: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumCast + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Width in bytes of the little-endian encoding.
    const BYTES: usize;
    /// Short name written into file headers.
    const NAME: &'static str;

    fn write_le(self, out: &mut Vec<u8>);
    /// Decodes from exactly `Self::BYTES` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).unwrap_or_else(Self::nan)
    }

    fn from_usize_lossy(v: usize) -> Self {
        <Self as NumCast>::from(v).unwrap_or_else(Self::infinity)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const NAME: &'static str = "f32";

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(&bytes[..4]);
        f32::from_le_bytes(buf)
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const NAME: &'static str = "f64";

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&bytes[..8]);
        f64::from_le_bytes(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn le_roundtrip() {
        let mut out = Vec::new();
        1.5f32.write_le(&mut out);
        (-2.25f64).write_le(&mut out);
        assert_eq!(out.len(), 12);
        assert_eq!(f32::read_le(&out[..4]), 1.5);
        assert_eq!(f64::read_le(&out[4..]), -2.25);
    }
}
