//! Gaussian-to-Gaussian transform pipeline.
//!
//! Raw sensor codes are dequantized, standardized with the calibration
//! grid's parameters for the trace's operating point, and then retargeted to
//! any requested Gaussian with one multiplication and one addition per
//! variate. Retargeted variates are handed to consumers through a bounded
//! [`cache`].

pub mod cache;

pub use cache::{
    deliver, CacheConsumer, CacheError, CacheProducer, CacheStats, ReadMode, VariateCache,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::GaussianSpec;
use crate::rng::UniformSource;
use crate::samplers::OpCounter;
use crate::sensor::{dequantize_with_jitter, CalibrationGrid, SampleTrace, SensorError};
use crate::stats::{fit_gaussian, StatsError};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error("self-calibration failed: {0}")]
    Fit(#[from] StatsError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// `y = scale * x + offset`, mapping `src` onto `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformCoeffs {
    scale: f64,
    offset: f64,
    src: GaussianSpec,
    dst: GaussianSpec,
}

/// `scale = sigma_dst / sigma_src`, `offset = mu_dst - scale * mu_src`.
pub fn make_coeffs(src: &GaussianSpec, dst: &GaussianSpec) -> TransformCoeffs {
    let scale = dst.sigma() / src.sigma();
    TransformCoeffs {
        scale,
        offset: dst.mean() - scale * src.mean(),
        src: *src,
        dst: *dst,
    }
}

impl TransformCoeffs {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn source(&self) -> &GaussianSpec {
        &self.src
    }

    pub fn target(&self) -> &GaussianSpec {
        &self.dst
    }

    /// Charges one multiplication and one addition.
    #[inline]
    pub fn apply(&self, x: f64, ops: &mut OpCounter) -> f64 {
        ops.multiplications += 1;
        ops.additions += 1;
        self.scale * x + self.offset
    }

    pub fn apply_all(&self, xs: &[f64], ops: &mut OpCounter) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x, ops)).collect()
    }
}

/// Where compensation takes its source parameters from.
#[derive(Debug, Clone, Copy)]
pub enum Calibration<'a> {
    /// Grid lookup at the trace's recorded temperature and voltage.
    Grid(&'a CalibrationGrid),
    /// Fit mean and sigma on the trace itself.
    SelfFit,
}

/// Source parameters for compensating `trace` under `calibration`.
pub fn compensation_source(
    trace: &SampleTrace,
    calibration: Calibration<'_>,
) -> Result<GaussianSpec, TransformError> {
    match calibration {
        Calibration::Grid(grid) => Ok(grid
            .noise_params(trace.temperature(), trace.voltage())?
            .spec()),
        Calibration::SelfFit => {
            Ok(fit_gaussian(&crate::sensor::dequantize(trace))?.spec())
        }
    }
}

/// Dequantizes `trace` with jitter and maps it onto N(0, 1) using the noise
/// parameters for its operating point. Coefficients are fixed for the whole
/// trace.
pub fn compensate<S: UniformSource>(
    trace: &SampleTrace,
    calibration: Calibration<'_>,
    stream: &mut S,
    ops: &mut OpCounter,
) -> Result<Vec<f64>, TransformError> {
    let src = compensation_source(trace, calibration)?;
    let coeffs = make_coeffs(&src, &GaussianSpec::standard());
    let raw = dequantize_with_jitter(trace, stream);
    // jitter per sample: (2u - 1) * half + center
    let n = raw.len() as u64;
    ops.uniform_draws += n;
    ops.multiplications += 2 * n;
    ops.additions += 2 * n;
    Ok(coeffs.apply_all(&raw, ops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{FixedUniform, SeededStream};
    use crate::sensor::{generate_trace, AdcModel, NoiseParams};

    fn spec(m: f64, s: f64) -> GaussianSpec {
        GaussianSpec::new(m, s).unwrap()
    }

    #[test]
    fn coeff_examples() {
        let a = spec(3.0, 2.0);
        let id = make_coeffs(&a, &a);
        assert_eq!((id.scale(), id.offset()), (1.0, 0.0));

        let c = make_coeffs(&GaussianSpec::standard(), &spec(980.794, 7.178));
        assert_eq!((c.scale(), c.offset()), (7.178, 980.794));

        let c = make_coeffs(&spec(5.0, 2.0), &GaussianSpec::standard());
        assert_eq!((c.scale(), c.offset()), (0.5, -2.5));
    }

    #[test]
    fn apply_examples_and_cost() {
        let mut ops = OpCounter::default();
        let a = spec(3.0, 2.0);
        assert_eq!(make_coeffs(&a, &a).apply(3.7, &mut ops), 3.7);
        let c = make_coeffs(&GaussianSpec::standard(), &spec(980.794, 7.178));
        assert_eq!(c.apply(0.0, &mut ops), 980.794);
        assert_eq!(ops.multiplications, 2);
        assert_eq!(ops.additions, 2);
        assert_eq!(ops.arithmetic_ops(), 4);
    }

    #[test]
    fn round_trip() {
        let (a, b) = (spec(-4.0, 0.3), spec(980.794, 7.178));
        let there = make_coeffs(&a, &b);
        let back = make_coeffs(&b, &a);
        let mut ops = OpCounter::default();
        for x in [-10.0, -1.0, 0.0, 0.5, 3.7, 1000.0] {
            let y = there.apply(back.apply(x, &mut ops), &mut ops);
            assert!((y - x).abs() < 1e-9, "{x} -> {y}");
        }
    }

    #[test]
    fn constant_grid_is_fixed_affine_map() {
        let p = NoiseParams { mean: 100.0, sigma: 4.0 };
        let grid = CalibrationGrid::constant(vec![0.0, 10.0, 20.0], vec![2.0, 3.0], p).unwrap();
        let adc = AdcModel::centered_12bit(100.0, 4.0).unwrap();
        let mut s = SeededStream::new(3);
        let coeffs = make_coeffs(&p.spec(), &GaussianSpec::standard());
        for (t, v) in [(0.0, 2.0), (7.0, 2.4), (20.0, 3.0)] {
            let trace = generate_trace(&mut s, &grid, t, v, &adc, 50).unwrap();
            let mut ops = OpCounter::default();
            let out = compensate(&trace, Calibration::Grid(&grid), &mut FixedUniform(0.5), &mut ops)
                .unwrap();
            let expected = coeffs.apply_all(&crate::sensor::dequantize(&trace), &mut ops);
            assert_eq!(out, expected);
        }
    }

    #[test]
    fn out_of_box_trace_errors() {
        let grid = CalibrationGrid::synthetic_default();
        let adc = AdcModel::centered_12bit(980.0, 7.0).unwrap();
        let trace = SampleTrace::new(vec![1, 2], adc, 40.0, 2.6, 1.0, "x").unwrap();
        let mut ops = OpCounter::default();
        assert!(matches!(
            compensate(&trace, Calibration::Grid(&grid), &mut SeededStream::new(1), &mut ops),
            Err(TransformError::Sensor(SensorError::OutOfRange { .. }))
        ));
    }

    #[test]
    fn self_fit_standardizes() {
        let grid = CalibrationGrid::synthetic_default();
        let p = grid.noise_params(25.0, 1.4).unwrap();
        let adc = AdcModel::centered_12bit(p.mean, p.sigma).unwrap();
        let mut s = SeededStream::new(10);
        let trace = generate_trace(&mut s, &grid, 25.0, 1.4, &adc, 20_000).unwrap();
        let mut ops = OpCounter::default();
        let out = compensate(&trace, Calibration::SelfFit, &mut s, &mut ops).unwrap();
        let fit = fit_gaussian(&out).unwrap();
        assert!(fit.mean.abs() < 1e-3);
        assert!((fit.sigma - 1.0).abs() < 1e-3);
    }
}
