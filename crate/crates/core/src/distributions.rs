//! Distribution parameter types, densities, CDFs and closed-form inverse CDFs.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("sigma must be finite and > 0, got {0}")]
    InvalidSigma(f64),
    #[error("uniform range requires lo < hi, got [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("exponential rate must be finite and > 0, got {0}")]
    InvalidRate(f64),
    #[error("mean must be finite, got {0}")]
    InvalidMean(f64),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("the {0} family has no closed-form inverse CDF")]
    NoClosedFormInverse(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    mean: f64,
    sigma: f64,
}

impl GaussianSpec {
    pub fn new(mean: f64, sigma: f64) -> Result<Self, DistributionError> {
        if !mean.is_finite() {
            return Err(DistributionError::InvalidMean(mean));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(DistributionError::InvalidSigma(sigma));
        }
        Ok(Self { mean, sigma })
    }

    pub fn standard() -> Self {
        Self {
            mean: 0.0,
            sigma: 1.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformSpec {
    lo: f64,
    hi: f64,
}

impl UniformSpec {
    pub fn new(lo: f64, hi: f64) -> Result<Self, DistributionError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(DistributionError::InvalidRange { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialSpec {
    rate: f64,
}

impl ExponentialSpec {
    pub fn new(rate: f64) -> Result<Self, DistributionError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(DistributionError::InvalidRate(rate));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// The univariate families the crate knows about.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Gaussian(GaussianSpec),
    Uniform(UniformSpec),
    Exponential(ExponentialSpec),
}

impl Distribution {
    pub fn family(&self) -> &'static str {
        match self {
            Distribution::Gaussian(_) => "gaussian",
            Distribution::Uniform(_) => "uniform",
            Distribution::Exponential(_) => "exponential",
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Distribution::Gaussian(g) => gaussian_pdf(x, g),
            Distribution::Uniform(u) => uniform_pdf(x, u),
            Distribution::Exponential(e) => {
                if x < 0.0 {
                    0.0
                } else {
                    e.rate * (-e.rate * x).exp()
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Distribution::Gaussian(g) => gaussian_cdf(x, g),
            Distribution::Uniform(u) => ((x - u.lo) / u.width()).clamp(0.0, 1.0),
            Distribution::Exponential(e) => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-e.rate * x).exp_m1()
                }
            }
        }
    }
}

impl From<GaussianSpec> for Distribution {
    fn from(s: GaussianSpec) -> Self {
        Distribution::Gaussian(s)
    }
}

impl From<UniformSpec> for Distribution {
    fn from(s: UniformSpec) -> Self {
        Distribution::Uniform(s)
    }
}

impl From<ExponentialSpec> for Distribution {
    fn from(s: ExponentialSpec) -> Self {
        Distribution::Exponential(s)
    }
}

pub fn gaussian_pdf(x: f64, spec: &GaussianSpec) -> f64 {
    let z = (x - spec.mean) / spec.sigma;
    (-0.5 * z * z).exp() / (spec.sigma * (2.0 * PI).sqrt())
}

pub fn uniform_pdf(x: f64, spec: &UniformSpec) -> f64 {
    if x >= spec.lo && x <= spec.hi {
        1.0 / spec.width()
    } else {
        0.0
    }
}

pub fn gaussian_cdf(x: f64, spec: &GaussianSpec) -> f64 {
    let z = (x - spec.mean) / spec.sigma;
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Probability mass of `spec` on `[a, b]`.
///
/// Evaluated on whichever side of the mean keeps both tail terms small, so
/// bins far out in either tail do not cancel to zero.
pub fn gaussian_mass(a: f64, b: f64, spec: &GaussianSpec) -> f64 {
    if b <= a {
        return 0.0;
    }
    let za = (a - spec.mean) / spec.sigma;
    let zb = (b - spec.mean) / spec.sigma;
    let upper = |z: f64| 0.5 * libm::erfc(z / SQRT_2);
    let mass = if za >= 0.0 {
        upper(za) - upper(zb)
    } else if zb <= 0.0 {
        upper(-zb) - upper(-za)
    } else {
        1.0 - upper(-za) - upper(zb)
    };
    mass.max(0.0)
}

/// Closed-form inverse CDF. The Gaussian is rejected: it has none.
pub fn inverse_cdf(p: f64, dist: &Distribution) -> Result<f64, DistributionError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DistributionError::ProbabilityOutOfRange(p));
    }
    match dist {
        Distribution::Uniform(u) => Ok(u.lo + p * u.width()),
        Distribution::Exponential(e) => Ok(-(-p).ln_1p() / e.rate),
        Distribution::Gaussian(_) => Err(DistributionError::NoClosedFormInverse("gaussian")),
    }
}
