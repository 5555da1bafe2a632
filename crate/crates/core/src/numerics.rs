//! Signed fixed-point arithmetic with configurable Q-formats.
//!
//! This is the substrate for the bit-accurate datapath: saturating
//! add/multiply, truncating or round-to-nearest-even requantization,
//! leading-one detection, arithmetic shifts, and a wide accumulator that
//! models a complex multiply-accumulate tree (accumulate exactly, quantize
//! once per output).
//!
//! Conventions:
//! * A `QFormat` with `integer_bits = i` and `fraction_bits = f` stores
//!   values in `[-2^i, 2^i - 2^-f]` on a two's-complement mantissa of
//!   `1 + i + f` bits (sign implicit), so `i + f <= 63`.
//! * `Truncate` drops fraction bits (two's-complement floor), the cheapest
//!   hardware rounding. `NearestEven` rounds half-way cases to even.
//! * Overflow always saturates; wrapping would corrupt gradient descent.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::{Error, Result};

/// Rounding applied when discarding fraction bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Drop bits (two's-complement floor).
    #[default]
    Truncate,
    /// Round to nearest, ties to even.
    NearestEven,
}

/// Signed fixed-point format: `integer_bits` and `fraction_bits` per
/// real/imaginary component, sign bit implicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QFormat {
    pub integer_bits: u32,
    pub fraction_bits: u32,
}

impl QFormat {
    pub const fn new(integer_bits: u32, fraction_bits: u32) -> Self {
        assert!(integer_bits + fraction_bits <= 63);
        Self { integer_bits, fraction_bits }
    }

    pub fn validate(&self) -> Result<()> {
        if self.integer_bits + self.fraction_bits > 63 {
            return Err(Error::InvalidConfig(format!(
                "{self} exceeds the 64-bit mantissa budget"
            )));
        }
        Ok(())
    }

    /// Mantissa width including the sign bit.
    pub fn total_bits(&self) -> u32 {
        1 + self.integer_bits + self.fraction_bits
    }

    /// Largest representable raw mantissa, `2^(i+f) - 1`.
    pub fn max_raw(&self) -> i64 {
        ((1i128 << (self.integer_bits + self.fraction_bits)) - 1) as i64
    }

    /// Smallest representable raw mantissa, `-2^(i+f)`.
    pub fn min_raw(&self) -> i64 {
        -((1i128 << (self.integer_bits + self.fraction_bits)) as i64)
    }

    fn saturate(&self, wide: i128) -> i64 {
        wide.clamp(self.min_raw() as i128, self.max_raw() as i128) as i64
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.integer_bits, self.fraction_bits)
    }
}

/// Index of the most significant set bit; `None` for zero.
pub fn lod(x: u64) -> Option<u32> {
    if x == 0 {
        None
    } else {
        Some(63 - x.leading_zeros())
    }
}

/// Arithmetic right shift of a wide value with explicit rounding.
/// `shift` must be in `1..=126`.
fn shift_right_rounded(v: i128, shift: u32, rounding: Rounding) -> i128 {
    debug_assert!(shift >= 1 && shift <= 126);
    let q = v >> shift;
    match rounding {
        Rounding::Truncate => q,
        Rounding::NearestEven => {
            let rem = v - (q << shift);
            let half = 1i128 << (shift - 1);
            if rem > half || (rem == half && (q & 1) == 1) {
                q + 1
            } else {
                q
            }
        }
    }
}

/// Left shift that saturates instead of overflowing i128.
fn shift_left_saturating(v: i128, shift: u32) -> i128 {
    if v == 0 {
        return 0;
    }
    if shift >= 127 {
        return if v > 0 { i128::MAX } else { i128::MIN };
    }
    if v > i128::MAX >> shift {
        i128::MAX
    } else if v < i128::MIN >> shift {
        i128::MIN
    } else {
        v << shift
    }
}

/// Rescale a wide mantissa with `from_frac` fraction bits into `to`,
/// rounding dropped bits and saturating the result.
fn requantize_wide(value: i128, from_frac: u32, to: QFormat, rounding: Rounding) -> i64 {
    let shift = from_frac as i64 - to.fraction_bits as i64;
    let shifted = if shift > 0 {
        shift_right_rounded(value, shift as u32, rounding)
    } else if shift < 0 {
        shift_left_saturating(value, (-shift) as u32)
    } else {
        value
    };
    to.saturate(shifted)
}

/// One signed fixed-point sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedScalar {
    raw: i64,
    fmt: QFormat,
}

impl FixedScalar {
    /// Wrap a raw mantissa, saturating it into the format's range.
    pub fn from_raw(raw: i64, fmt: QFormat) -> Self {
        Self { raw: fmt.saturate(raw as i128), fmt }
    }

    pub fn zero(fmt: QFormat) -> Self {
        Self { raw: 0, fmt }
    }

    pub fn max_value(fmt: QFormat) -> Self {
        Self { raw: fmt.max_raw(), fmt }
    }

    pub fn min_value(fmt: QFormat) -> Self {
        Self { raw: fmt.min_raw(), fmt }
    }

    /// Quantize a float, rounding per `rounding` and saturating.
    pub fn from_f64(value: f64, fmt: QFormat, rounding: Rounding) -> Self {
        let scaled = value * (fmt.fraction_bits as f64).exp2();
        let raw = match rounding {
            Rounding::Truncate => scaled.floor(),
            Rounding::NearestEven => {
                let fl = scaled.floor();
                let rem = scaled - fl;
                if rem > 0.5 || (rem == 0.5 && (fl as i64) & 1 == 1) {
                    fl + 1.0
                } else {
                    fl
                }
            }
        };
        let wide = if raw >= i128::MAX as f64 {
            i128::MAX
        } else if raw <= i128::MIN as f64 {
            i128::MIN
        } else {
            raw as i128
        };
        Self { raw: fmt.saturate(wide), fmt }
    }

    pub fn to_f64(self) -> f64 {
        self.raw as f64 * (-(self.fmt.fraction_bits as f64)).exp2()
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    pub fn fmt(self) -> QFormat {
        self.fmt
    }

    /// Exact sum saturated to the shared format. Mismatched formats are a
    /// usage error.
    pub fn add_sat(self, rhs: Self) -> Result<Self> {
        if self.fmt != rhs.fmt {
            return Err(Error::FormatMismatch { lhs: self.fmt, rhs: rhs.fmt });
        }
        let sum = self.raw as i128 + rhs.raw as i128;
        Ok(Self { raw: self.fmt.saturate(sum), fmt: self.fmt })
    }

    /// Convert to another format; dropped bits round per `rounding`,
    /// overflow saturates. Exactly representable values pass unchanged.
    pub fn requantize(self, to: QFormat, rounding: Rounding) -> Self {
        Self {
            raw: requantize_wide(self.raw as i128, self.fmt.fraction_bits, to, rounding),
            fmt: to,
        }
    }

    /// Multiply by `2^k` within the same format: left shifts saturate,
    /// right shifts round per `rounding` (sign-preserving).
    pub fn shift(self, k: i32, rounding: Rounding) -> Self {
        let raw = if k >= 0 {
            self.fmt.saturate(shift_left_saturating(self.raw as i128, k as u32))
        } else {
            shift_right_rounded(self.raw as i128, (-k) as u32, rounding) as i64
        };
        Self { raw, fmt: self.fmt }
    }

    /// Multiply by `2^k` truncating toward zero on right shifts, so
    /// magnitudes never grow. Pseudonormalization relies on this to keep
    /// the scaled maximum strictly below 2.
    pub fn shift_toward_zero(self, k: i32) -> Self {
        let raw = if k >= 0 {
            self.fmt.saturate(shift_left_saturating(self.raw as i128, k as u32))
        } else {
            let mag = (self.raw as i128).unsigned_abs() >> (-k).min(126) as u32;
            let mag = mag as i64;
            if self.raw < 0 {
                -mag
            } else {
                mag
            }
        };
        Self { raw, fmt: self.fmt }
    }
}

/// Complex fixed-point sample; both components share one format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedComplex {
    pub re: FixedScalar,
    pub im: FixedScalar,
}

impl FixedComplex {
    pub fn new(re: FixedScalar, im: FixedScalar) -> Self {
        assert_eq!(re.fmt, im.fmt, "components must share a format");
        Self { re, im }
    }

    pub fn zero(fmt: QFormat) -> Self {
        Self { re: FixedScalar::zero(fmt), im: FixedScalar::zero(fmt) }
    }

    pub fn from_f64(re: f64, im: f64, fmt: QFormat, rounding: Rounding) -> Self {
        Self {
            re: FixedScalar::from_f64(re, fmt, rounding),
            im: FixedScalar::from_f64(im, fmt, rounding),
        }
    }

    pub fn to_c64(self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn fmt(self) -> QFormat {
        self.re.fmt
    }

    pub fn conj(self) -> Self {
        Self {
            re: self.re,
            im: FixedScalar { raw: self.re.fmt.saturate(-(self.im.raw as i128)), fmt: self.im.fmt },
        }
    }

    pub fn requantize(self, to: QFormat, rounding: Rounding) -> Self {
        Self { re: self.re.requantize(to, rounding), im: self.im.requantize(to, rounding) }
    }

    pub fn shift(self, k: i32, rounding: Rounding) -> Self {
        Self { re: self.re.shift(k, rounding), im: self.im.shift(k, rounding) }
    }

    /// Full-precision complex product quantized once into `out_fmt`.
    pub fn mul_into(a: Self, b: Self, out_fmt: QFormat, rounding: Rounding) -> Self {
        let mut acc = WideComplexAcc::new(a.fmt().fraction_bits + b.fmt().fraction_bits);
        acc.mac(a, b);
        acc.quantize(out_fmt, rounding)
    }

    /// Product with a real scalar, quantized once into `out_fmt`.
    pub fn scale_real(v: Self, r: FixedScalar, out_fmt: QFormat, rounding: Rounding) -> Self {
        let frac = v.fmt().fraction_bits + r.fmt.fraction_bits;
        let re = v.re.raw as i128 * r.raw as i128;
        let im = v.im.raw as i128 * r.raw as i128;
        WideComplexAcc { re, im, frac_bits: frac }.quantize(out_fmt, rounding)
    }
}

/// Exact wide accumulator for complex MAC trees.
///
/// Products and sums are held exactly in 128-bit mantissas with
/// `frac_bits` fraction bits; quantization happens once per output.
/// Callers are responsible for headroom (see [`mac_headroom_ok`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WideComplexAcc {
    pub re: i128,
    pub im: i128,
    pub frac_bits: u32,
}

impl WideComplexAcc {
    pub fn new(frac_bits: u32) -> Self {
        Self { re: 0, im: 0, frac_bits }
    }

    /// Seed the accumulator with a value, aligned exactly.
    pub fn from_value(v: FixedComplex, frac_bits: u32) -> Self {
        let mut acc = Self::new(frac_bits);
        acc.add_value(v);
        acc
    }

    /// Add a value, aligned exactly (the accumulator must be at least as
    /// fine-grained).
    pub fn add_value(&mut self, v: FixedComplex) {
        debug_assert!(self.frac_bits >= v.fmt().fraction_bits);
        let up = self.frac_bits - v.fmt().fraction_bits;
        self.re += (v.re.raw as i128) << up;
        self.im += (v.im.raw as i128) << up;
    }

    /// Exact alignment shift from an operand pair's product grid to ours.
    fn product_up(&self, a: FixedComplex, b: FixedComplex) -> u32 {
        let product_frac = a.fmt().fraction_bits + b.fmt().fraction_bits;
        debug_assert!(
            self.frac_bits >= product_frac,
            "accumulator must be at least as fine-grained as the product"
        );
        self.frac_bits - product_frac
    }

    /// Accumulate `a * b`.
    pub fn mac(&mut self, a: FixedComplex, b: FixedComplex) {
        let up = self.product_up(a, b);
        let (ar, ai) = (a.re.raw as i128, a.im.raw as i128);
        let (br, bi) = (b.re.raw as i128, b.im.raw as i128);
        self.re += (ar * br - ai * bi) << up;
        self.im += (ar * bi + ai * br) << up;
    }

    /// Accumulate `conj(a) * b`.
    pub fn mac_conj(&mut self, a: FixedComplex, b: FixedComplex) {
        let up = self.product_up(a, b);
        let (ar, ai) = (a.re.raw as i128, a.im.raw as i128);
        let (br, bi) = (b.re.raw as i128, b.im.raw as i128);
        self.re += (ar * br + ai * bi) << up;
        self.im += (ar * bi - ai * br) << up;
    }

    /// Subtract `a * b`.
    pub fn mac_sub(&mut self, a: FixedComplex, b: FixedComplex) {
        let up = self.product_up(a, b);
        let (ar, ai) = (a.re.raw as i128, a.im.raw as i128);
        let (br, bi) = (b.re.raw as i128, b.im.raw as i128);
        self.re -= (ar * br - ai * bi) << up;
        self.im -= (ar * bi + ai * br) << up;
    }

    /// Accumulate `|a|^2` into the real part.
    pub fn mac_norm(&mut self, a: FixedComplex) {
        let up = self.product_up(a, a);
        let (ar, ai) = (a.re.raw as i128, a.im.raw as i128);
        self.re += (ar * ar + ai * ai) << up;
    }

    /// Fold another accumulator in (exact; formats must agree).
    pub fn merge(&mut self, other: &Self) {
        debug_assert_eq!(self.frac_bits, other.frac_bits);
        self.re += other.re;
        self.im += other.im;
    }

    pub fn quantize(&self, fmt: QFormat, rounding: Rounding) -> FixedComplex {
        FixedComplex {
            re: FixedScalar {
                raw: requantize_wide(self.re, self.frac_bits, fmt, rounding),
                fmt,
            },
            im: FixedScalar {
                raw: requantize_wide(self.im, self.frac_bits, fmt, rounding),
                fmt,
            },
        }
    }

    pub fn quantize_real(&self, fmt: QFormat, rounding: Rounding) -> FixedScalar {
        FixedScalar { raw: requantize_wide(self.re, self.frac_bits, fmt, rounding), fmt }
    }
}

/// True when `terms` products of `a`-by-`b` operands fit an i128
/// accumulator with headroom to spare.
pub fn mac_headroom_ok(a: QFormat, b: QFormat, terms: u32) -> bool {
    let bits = a.total_bits() + b.total_bits() + 32u32.saturating_sub(terms.leading_zeros());
    bits <= 126
}
