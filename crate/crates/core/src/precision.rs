//! Working precision for the multiple-precision float paths.
//!
//! Exact quantities are kept as [`rug::Rational`]; anything irrational
//! (square roots of variances, Gaussian weights, roots of the generating
//! function) is carried as a [`rug::Float`] with [`working`] bits of
//! mantissa and converted to `f64` only when reported.

use std::sync::atomic::{AtomicU32, Ordering};

use rug::{Float, Rational};

use crate::{Error, Result};

pub const DEFAULT_PRECISION: u32 = 160;
pub const MIN_PRECISION: u32 = 128;

static WORKING: AtomicU32 = AtomicU32::new(DEFAULT_PRECISION);

/// Current working precision in bits.
pub fn working() -> u32 {
    WORKING.load(Ordering::Relaxed)
}

/// Set the working precision. Meant to be called once at start-up.
pub fn set_working(bits: u32) -> Result<()> {
    if bits < MIN_PRECISION {
        return Err(Error::Domain(format!(
            "precision {bits} bits is below the minimum of {MIN_PRECISION}"
        )));
    }
    WORKING.store(bits, Ordering::Relaxed);
    Ok(())
}

pub fn float(value: f64) -> Float {
    Float::with_val(working(), value)
}

pub fn from_rational(r: &Rational) -> Float {
    Float::with_val(working(), r)
}

pub fn pi() -> Float {
    Float::with_val(working(), rug::float::Constant::Pi)
}

/// Standard normal density at `x`.
pub fn normal_density(x: &Float) -> Float {
    let prec = working();
    let sq = Float::with_val(prec, x * x);
    let e = Float::with_val(prec, -sq / 2u32).exp();
    let norm = Float::with_val(prec, pi() * 2u32).sqrt();
    e / norm
}

/// √r at working precision.
pub fn sqrt_rational(r: &Rational) -> Float {
    from_rational(r).sqrt()
}
