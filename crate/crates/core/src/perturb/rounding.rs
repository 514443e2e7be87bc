//! Round-trip of `f64` values through 16-bit float formats.
//!
//! Rounding is to nearest, ties to even, with IEEE gradual underflow. A
//! value whose rounded result does not fit the format is an overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HalfFormat {
    Fp16,
    Bf16,
}

impl HalfFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            HalfFormat::Fp16 => "fp16",
            HalfFormat::Bf16 => "bf16",
        }
    }

    fn mantissa_bits(self) -> i32 {
        match self {
            HalfFormat::Fp16 => 10,
            HalfFormat::Bf16 => 7,
        }
    }

    /// Exponent of the smallest normal number.
    fn min_exponent(self) -> i32 {
        match self {
            HalfFormat::Fp16 => -14,
            HalfFormat::Bf16 => -126,
        }
    }

    pub fn max_finite(self) -> f64 {
        match self {
            HalfFormat::Fp16 => 65504.0,
            HalfFormat::Bf16 => f64::from_bits(0x47EF_E000_0000_0000),
        }
    }
}

/// Unbiased binary exponent of a finite non-zero `x`; f64 subnormals report
/// the f64 minimum, which is far below either format's range.
fn exponent(x: f64) -> i32 {
    let biased = ((x.to_bits() >> 52) & 0x7ff) as i32;
    if biased == 0 {
        -1022
    } else {
        biased - 1023
    }
}

/// `x` rounded to the nearest value representable in `format`; `None` on overflow.
pub fn round_value(x: f64, format: HalfFormat) -> Option<f64> {
    if x == 0.0 || x.is_nan() {
        return Some(x);
    }
    if x.is_infinite() {
        return None;
    }
    let e = exponent(x).max(format.min_exponent());
    let quantum = 2f64.powi(e - format.mantissa_bits());
    let r = (x / quantum).round_ties_even() * quantum;
    (r.abs() <= format.max_finite()).then_some(r)
}

pub fn round_trip(values: &[f64], format: HalfFormat) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value.is_nan() {
                return Err(Error::NonFinite { index, op: "round_trip" });
            }
            round_value(value, format).ok_or(Error::Overflow { index, value, format: format.as_str() })
        })
        .collect()
}
