//! Element and accumulator types.
//!
//! Inputs are `i8`, `i16` or `i32`. Every dot product, every LHS/RHS
//! combination and every output accumulation runs in the widened accumulator
//! of the element type, so Strassen schedules and the standard schedule agree
//! bit for bit.
//!
//! Accumulator arithmetic wraps. Strassen's identities hold in any ring, so
//! results are exact modulo `2^ACC_BITS`; because the accumulator is wide
//! enough to hold every true result for `k <= MAX_INNER_DIM`, they are exact
//! integers.

use std::fmt::Debug;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Largest inner dimension for which the accumulator widths are sized.
pub const MAX_INNER_DIM: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElemType {
    I8,
    I16,
    I32,
}

impl ElemType {
    pub const ALL: [ElemType; 3] = [ElemType::I8, ElemType::I16, ElemType::I32];

    pub fn bits(self) -> u32 {
        match self {
            ElemType::I8 => 8,
            ElemType::I16 => 16,
            ElemType::I32 => 32,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    pub fn acc_bits(self) -> u32 {
        match self {
            ElemType::I8 => i32::BITS,
            ElemType::I16 => i64::BITS,
            ElemType::I32 => i128::BITS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElemType::I8 => "i8",
            ElemType::I16 => "i16",
            ElemType::I32 => "i32",
        }
    }
}

impl std::fmt::Display for ElemType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ElemType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "i8" | "int8" => Ok(ElemType::I8),
            "i16" | "int16" => Ok(ElemType::I16),
            "i32" | "int32" => Ok(ElemType::I32),
            other => Err(format!("unknown element type '{other}'")),
        }
    }
}

/// A signed integer that can live in a [`crate::Matrix`] and in a matrix file.
pub trait Scalar: Copy + Default + PartialEq + Eq + Debug + Send + Sync + 'static {
    /// Type code in the matrix file header.
    const CODE: u8;
    const BYTES: usize;

    fn to_i128(self) -> i128;
    /// Two's-complement truncation of `v`.
    fn from_i128_wrapping(v: i128) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    /// `bytes.len()` must equal `BYTES`.
    fn read_le(bytes: &[u8]) -> Self;
}

/// Widened accumulator with wrapping ring arithmetic.
pub trait Accumulator: Scalar {
    const ZERO: Self;
    const ONE: Self;

    fn wadd(self, rhs: Self) -> Self;
    fn wsub(self, rhs: Self) -> Self;
    fn wmul(self, rhs: Self) -> Self;
    fn wneg(self) -> Self;
}

/// An input element type together with its accumulator.
pub trait Element: Scalar {
    const TYPE: ElemType;
    type Acc: Accumulator;

    fn widen(self) -> Self::Acc;
    /// Uniform over the full range of the type.
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_scalar {
    ($($t:ty => $code:expr),* $(,)?) => {$(
        impl Scalar for $t {
            const CODE: u8 = $code;
            const BYTES: usize = std::mem::size_of::<$t>();

            #[inline]
            fn to_i128(self) -> i128 {
                self as i128
            }

            #[inline]
            fn from_i128_wrapping(v: i128) -> Self {
                v as $t
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; std::mem::size_of::<$t>()];
                buf.copy_from_slice(bytes);
                <$t>::from_le_bytes(buf)
            }
        }
    )*};
}

impl_scalar!(i8 => 1, i16 => 2, i32 => 3, i64 => 4, i128 => 5);

macro_rules! impl_acc {
    ($($t:ty),*) => {$(
        impl Accumulator for $t {
            const ZERO: Self = 0;
            const ONE: Self = 1;

            #[inline(always)]
            fn wadd(self, rhs: Self) -> Self {
                self.wrapping_add(rhs)
            }

            #[inline(always)]
            fn wsub(self, rhs: Self) -> Self {
                self.wrapping_sub(rhs)
            }

            #[inline(always)]
            fn wmul(self, rhs: Self) -> Self {
                self.wrapping_mul(rhs)
            }

            #[inline(always)]
            fn wneg(self) -> Self {
                self.wrapping_neg()
            }
        }
    )*};
}

impl_acc!(i32, i64, i128);

macro_rules! impl_elem {
    ($($t:ty => $variant:ident, $acc:ty);*) => {$(
        impl Element for $t {
            const TYPE: ElemType = ElemType::$variant;
            type Acc = $acc;

            #[inline(always)]
            fn widen(self) -> $acc {
                self as $acc
            }

            fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.gen::<$t>()
            }
        }
    )*};
}

impl_elem!(i8 => I8, i32; i16 => I16, i64; i32 => I32, i128);

/// Human-readable name of a scalar file code.
pub fn code_name(code: u8) -> Option<&'static str> {
    match code {
        1 => Some("i8"),
        2 => Some("i16"),
        3 => Some("i32"),
        4 => Some("i64"),
        5 => Some("i128"),
        _ => None,
    }
}
