use serde::{Deserialize, Serialize};

use super::SensorError;

/// Out-of-range handling. Only saturation is modeled; wraparound would fold
/// tail samples into the opposite end of the range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ClampPolicy {
    #[default]
    Saturate,
}

/// Uniform quantizer over `[range_lo, range_hi]` with `bin_count` codes.
///
/// `value(code) = range_lo + (code + 0.5) * (range_hi - range_lo) / bin_count`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcModel {
    bin_count: u32,
    range_lo: f64,
    range_hi: f64,
    clamp_policy: ClampPolicy,
}

impl AdcModel {
    pub fn new(bin_count: u32, range_lo: f64, range_hi: f64) -> Result<Self, SensorError> {
        if bin_count < 2 {
            return Err(SensorError::TooFewBins(bin_count));
        }
        if !(range_lo.is_finite() && range_hi.is_finite() && range_lo < range_hi) {
            return Err(SensorError::InvalidAdcRange {
                lo: range_lo,
                hi: range_hi,
            });
        }
        Ok(Self {
            bin_count,
            range_lo,
            range_hi,
            clamp_policy: ClampPolicy::Saturate,
        })
    }

    pub fn with_bits(bits: u32, range_lo: f64, range_hi: f64) -> Result<Self, SensorError> {
        if !(1..=31).contains(&bits) {
            return Err(SensorError::InvalidBits(bits));
        }
        Self::new(1 << bits, range_lo, range_hi)
    }

    /// 12-bit converter spanning `mean +/- 4 sigma`.
    pub fn centered_12bit(mean: f64, sigma: f64) -> Result<Self, SensorError> {
        Self::with_bits(12, mean - 4.0 * sigma, mean + 4.0 * sigma)
    }

    pub fn bin_count(&self) -> u32 {
        self.bin_count
    }

    pub fn range_lo(&self) -> f64 {
        self.range_lo
    }

    pub fn range_hi(&self) -> f64 {
        self.range_hi
    }

    pub fn clamp_policy(&self) -> ClampPolicy {
        self.clamp_policy
    }

    /// Width of one code.
    pub fn lsb(&self) -> f64 {
        (self.range_hi - self.range_lo) / f64::from(self.bin_count)
    }

    pub fn quantize(&self, x: f64) -> u32 {
        let pos = (x - self.range_lo) / (self.range_hi - self.range_lo) * f64::from(self.bin_count);
        if pos.is_nan() || pos < 0.0 {
            return 0;
        }
        // `as` saturates on overflow
        (pos.floor() as u64).min(u64::from(self.bin_count - 1)) as u32
    }

    pub fn value(&self, code: u32) -> f64 {
        self.range_lo + (f64::from(code) + 0.5) * self.lsb()
    }
}
