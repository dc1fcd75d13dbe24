//! 12-bit absolute encoder counts and joint angles.

use std::f64::consts::{PI, TAU};

use super::SessionError;

pub const COUNTS_PER_REV: u16 = 4096;
/// One count in radians, 2π/4096.
pub const LSB: f64 = TAU / COUNTS_PER_REV as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderSpec {
    pub zero_offset: u16,
    /// +1 or -1.
    pub sign: i8,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self { zero_offset: 0, sign: 1 }
    }
}

/// Wraps into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// `sign * ((count - offset) mod 4096) * 2π/4096`, wrapped into (-π, π].
pub fn count_to_radians(count: u16, spec: &EncoderSpec) -> Result<f64, SessionError> {
    if count >= COUNTS_PER_REV {
        return Err(SessionError::CountOutOfRange(count));
    }
    let m = (count as i32 - spec.zero_offset as i32).rem_euclid(COUNTS_PER_REV as i32);
    Ok(wrap_angle(spec.sign.signum() as f64 * m as f64 * LSB))
}

/// Nearest count to `angle`; the inverse of [`count_to_radians`] on its
/// image.
pub fn radians_to_count(angle: f64, spec: &EncoderSpec) -> u16 {
    let steps = (spec.sign.signum() as f64 * wrap_angle(angle) / LSB).round() as i64;
    (steps + spec.zero_offset as i64).rem_euclid(COUNTS_PER_REV as i64) as u16
}
