//! Virtual noise source: a Gaussian process whose mean and sigma drift with
//! temperature and supply voltage, read through a saturating ADC. Recorded
//! traces can be stored and replayed in place of generated ones.

mod adc;
mod grid;
mod trace;

pub use adc::{AdcModel, ClampPolicy};
pub use grid::{
    load_calibration, store_calibration, Axis, CalibrationGrid, NoiseParams,
    DEFAULT_TEMPERATURES_C, DEFAULT_VOLTAGES_V,
};
pub use trace::{
    dequantize, dequantize_with_jitter, generate_trace, load_trace, store_trace, SampleTrace,
    DEFAULT_SAMPLE_RATE_HZ,
};

use thiserror::Error;

use crate::distributions::DistributionError;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("ADC needs at least 2 bins, got {0}")]
    TooFewBins(u32),
    #[error("ADC resolution must be 1..=31 bits, got {0}")]
    InvalidBits(u32),
    #[error("ADC range requires lo < hi, got [{lo}, {hi}]")]
    InvalidAdcRange { lo: f64, hi: f64 },
    #[error("{axis} {value} outside calibrated range [{lo}, {hi}]")]
    OutOfRange {
        axis: Axis,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("calibration grid: {0}")]
    InvalidGrid(String),
    #[error("code {code} outside [0, {bins})")]
    CodeOutOfRange { code: u64, bins: u32 },
    #[error("sample rate must be > 0, got {0}")]
    InvalidSampleRate(f64),
    #[error("trace length must be >= 1")]
    EmptyTrace,
    #[error("source label must be a single line")]
    InvalidLabel,
    #[error("malformed trace header at line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("trace code at line {line}: {code} outside [0, {bins})")]
    TraceCodeOutOfRange { line: usize, code: String, bins: u32 },
    #[error("truncated trace body: {0}")]
    TruncatedBody(String),
    #[error("malformed calibration file: {0}")]
    MalformedCalibration(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
