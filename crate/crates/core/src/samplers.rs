//! Software baseline generators: inversion, accept-reject and a polar-method
//! reference Gaussian. Every generator charges its arithmetic to an
//! [`OpCounter`] so costs can be compared from counts alone.

use std::f64::consts::PI;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{
    gaussian_pdf, inverse_cdf, Distribution, DistributionError, GaussianSpec, UniformSpec,
};
use crate::rng::UniformSource;

/// Points used to scan a proposal support when checking an envelope.
pub const ENVELOPE_GRID_POINTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("{0} has no closed-form inverse CDF and cannot be sampled by inversion")]
    UnsupportedFamily(&'static str),
    #[error("envelope constant c = {0} must be finite and >= 1")]
    InvalidEnvelopeConstant(f64),
    #[error("envelope violated at x = {x}: f(x) = {density} > c*u(x) = {bound}")]
    EnvelopeViolated { x: f64, density: f64, bound: f64 },
    #[error("proposal [{lo}, {hi}] does not overlap the target's mu +/- 8 sigma")]
    NoOverlap { lo: f64, hi: f64 },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

/// Arithmetic charged by a generation session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub multiplications: u64,
    pub additions: u64,
    pub divisions: u64,
    pub comparisons: u64,
    pub transcendental_evals: u64,
    pub uniform_draws: u64,
    pub rejections: u64,
}

impl OpCounter {
    /// Multiplications, additions/subtractions, divisions, comparisons and
    /// transcendental evaluations (exp, ln, sqrt).
    pub fn arithmetic_ops(&self) -> u64 {
        self.multiplications
            + self.additions
            + self.divisions
            + self.comparisons
            + self.transcendental_evals
    }

    pub fn merge(&mut self, other: &OpCounter) {
        *self += *other;
    }
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, o: OpCounter) {
        self.multiplications += o.multiplications;
        self.additions += o.additions;
        self.divisions += o.divisions;
        self.comparisons += o.comparisons;
        self.transcendental_evals += o.transcendental_evals;
        self.uniform_draws += o.uniform_draws;
        self.rejections += o.rejections;
    }
}

/// Inversion-method sampler for families with a closed-form inverse CDF.
#[derive(Debug, Clone)]
pub struct Inversion {
    dist: Distribution,
    ops: OpCounter,
}

impl Inversion {
    pub fn new(dist: impl Into<Distribution>) -> Result<Self, SamplerError> {
        let dist = dist.into();
        if let Distribution::Gaussian(_) = dist {
            return Err(SamplerError::UnsupportedFamily(dist.family()));
        }
        Ok(Self {
            dist,
            ops: OpCounter::default(),
        })
    }

    pub fn sample<S: UniformSource>(&mut self, src: &mut S) -> f64 {
        let u = src.next_uniform();
        self.ops.uniform_draws += 1;
        match self.dist {
            // lo + p * width
            Distribution::Uniform(_) => {
                self.ops.multiplications += 1;
                self.ops.additions += 1;
            }
            // -ln(1 - p) / rate
            Distribution::Exponential(_) => {
                self.ops.additions += 1;
                self.ops.transcendental_evals += 1;
                self.ops.divisions += 1;
            }
            Distribution::Gaussian(_) => unreachable!("rejected at construction"),
        }
        inverse_cdf(u, &self.dist).expect("uniform draw lies in [0, 1)")
    }

    pub fn ops(&self) -> &OpCounter {
        &self.ops
    }
}

/// Acceptance rule for [`AcceptReject`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AcceptTest {
    /// Accept when `U <= f(X) / (c u(X))`. Produces the target density.
    #[default]
    Standard,
    /// Accept when `U * T <= 1` with `T = c f(X) / u(X)`, a common misreading
    /// of the standard test. Kept for comparison only: it
    /// accepts with probability proportional to `u / (c f)` and does not
    /// reproduce the target.
    InvertedRatio,
}

/// Accept-reject sampler of a Gaussian target under a uniform proposal.
///
/// The returned variates follow the target truncated to the proposal
/// support.
#[derive(Debug, Clone)]
pub struct AcceptReject {
    target: GaussianSpec,
    proposal: UniformSpec,
    c: f64,
    test: AcceptTest,
    attempts: u64,
    ops: OpCounter,
}

impl AcceptReject {
    pub fn new(target: GaussianSpec, proposal: UniformSpec, c: f64) -> Result<Self, SamplerError> {
        Self::with_test(target, proposal, c, AcceptTest::Standard)
    }

    pub fn with_test(
        target: GaussianSpec,
        proposal: UniformSpec,
        c: f64,
        test: AcceptTest,
    ) -> Result<Self, SamplerError> {
        if !(c.is_finite() && c >= 1.0) {
            return Err(SamplerError::InvalidEnvelopeConstant(c));
        }
        let (m, s) = (target.mean(), target.sigma());
        if proposal.hi() < m - 8.0 * s || proposal.lo() > m + 8.0 * s {
            return Err(SamplerError::NoOverlap {
                lo: proposal.lo(),
                hi: proposal.hi(),
            });
        }
        let u = 1.0 / proposal.width();
        for x in envelope_grid(&proposal) {
            let density = gaussian_pdf(x, &target);
            let bound = c * u;
            if density > bound * (1.0 + 1e-12) {
                return Err(SamplerError::EnvelopeViolated { x, density, bound });
            }
        }
        Ok(Self {
            target,
            proposal,
            c,
            test,
            attempts: 0,
            ops: OpCounter::default(),
        })
    }

    pub fn sample<S: UniformSource>(&mut self, src: &mut S) -> f64 {
        let (mean, sigma) = (self.target.mean(), self.target.sigma());
        let (lo, width) = (self.proposal.lo(), self.proposal.width());
        loop {
            self.attempts += 1;
            let u = src.next_uniform();
            let v = src.next_uniform();
            self.ops.uniform_draws += 2;

            // candidate from the proposal: lo + width * v
            let x = lo + width * v;
            // target density f(x)
            let z = (x - mean) / sigma;
            let e = (-0.5 * (z * z)).exp();
            let f = e / (sigma * (2.0 * PI).sqrt());
            // proposal density u(x) and envelope c * u(x)
            let ux = 1.0 / width;
            let accept = match self.test {
                AcceptTest::Standard => u <= f / (self.c * ux),
                AcceptTest::InvertedRatio => u * (self.c * f / ux) <= 1.0,
            };
            // 2 add/sub, 5 mul, 4 div, exp + sqrt, 1 comparison
            self.ops.additions += 2;
            self.ops.multiplications += 5;
            self.ops.divisions += 4;
            self.ops.transcendental_evals += 2;
            self.ops.comparisons += 1;

            if accept {
                return x;
            }
            self.ops.rejections += 1;
        }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn ops(&self) -> &OpCounter {
        &self.ops
    }
}

fn envelope_grid(proposal: &UniformSpec) -> impl Iterator<Item = f64> + '_ {
    let step = proposal.width() / (ENVELOPE_GRID_POINTS - 1) as f64;
    (0..ENVELOPE_GRID_POINTS).map(move |i| {
        if i == ENVELOPE_GRID_POINTS - 1 {
            proposal.hi()
        } else {
            proposal.lo() + i as f64 * step
        }
    })
}

/// Smallest `c` with `c u(x) >= f(x)` over the proposal support, found by
/// scanning the envelope grid plus the target mode when it lies inside.
pub fn tight_envelope_constant(target: &GaussianSpec, proposal: &UniformSpec) -> f64 {
    let mut peak = envelope_grid(proposal)
        .map(|x| gaussian_pdf(x, target))
        .fold(0.0, f64::max);
    if (proposal.lo()..=proposal.hi()).contains(&target.mean()) {
        peak = peak.max(gaussian_pdf(target.mean(), target));
    }
    peak * proposal.width()
}

/// Marsaglia polar-method Gaussian, the software comparator.
#[derive(Debug, Clone)]
pub struct ReferenceGaussian {
    spec: GaussianSpec,
    spare: Option<f64>,
    ops: OpCounter,
}

impl ReferenceGaussian {
    pub fn new(spec: GaussianSpec) -> Self {
        Self {
            spec,
            spare: None,
            ops: OpCounter::default(),
        }
    }

    pub fn spec(&self) -> &GaussianSpec {
        &self.spec
    }

    /// One standard-normal variate.
    pub fn standard<S: UniformSource>(&mut self, src: &mut S) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let v1 = 2.0 * src.next_uniform() - 1.0;
            let v2 = 2.0 * src.next_uniform() - 1.0;
            let s = v1 * v1 + v2 * v2;
            self.ops.uniform_draws += 2;
            self.ops.multiplications += 4;
            self.ops.additions += 3;
            self.ops.comparisons += 2;
            if s < 1.0 && s > 0.0 {
                let k = (-2.0 * s.ln() / s).sqrt();
                self.ops.transcendental_evals += 2;
                self.ops.multiplications += 3;
                self.ops.divisions += 1;
                self.spare = Some(v2 * k);
                return v1 * k;
            }
            self.ops.rejections += 1;
        }
    }

    pub fn sample<S: UniformSource>(&mut self, src: &mut S) -> f64 {
        let z = self.standard(src);
        self.ops.multiplications += 1;
        self.ops.additions += 1;
        self.spec.mean() + self.spec.sigma() * z
    }

    pub fn ops(&self) -> &OpCounter {
        &self.ops
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ExponentialSpec;
    use crate::rng::{FixedUniform, SeededStream};

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    fn standard_ar() -> AcceptReject {
        let c = 12.0 / (2.0 * PI).sqrt();
        AcceptReject::new(
            GaussianSpec::standard(),
            UniformSpec::new(-6.0, 6.0).unwrap(),
            c,
        )
        .unwrap()
    }

    #[test]
    fn inversion_forced_draws() {
        let mut src = FixedUniform(0.5);
        let mut unif = Inversion::new(UniformSpec::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(unif.sample(&mut src), 0.5);
        let mut exp = Inversion::new(ExponentialSpec::new(1.0).unwrap()).unwrap();
        assert!((exp.sample(&mut src) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(exp.ops().uniform_draws, 1);
    }

    #[test]
    fn inversion_rejects_gaussian() {
        let err = Inversion::new(GaussianSpec::standard()).unwrap_err();
        assert_eq!(err, SamplerError::UnsupportedFamily("gaussian"));
        assert!(err.to_string().contains("gaussian"));
    }

    #[test]
    fn inversion_exponential_mean() {
        // CLT: sd of the mean = 1/sqrt(1e5) = 0.00316; 5 sd = 0.0158 < 0.02
        let mut s = SeededStream::new(11);
        let mut exp = Inversion::new(ExponentialSpec::new(1.0).unwrap()).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| exp.sample(&mut s)).collect();
        let (m, _) = moments(&xs);
        assert!((0.98..=1.02).contains(&m), "{m}");
    }

    #[test]
    fn accept_reject_moments() {
        // mean sd 0.00316, sigma sd 1/sqrt(2e5) = 0.00224; 0.02 > 6 sd
        let mut ar = standard_ar();
        let mut s = SeededStream::new(5);
        let xs: Vec<f64> = (0..100_000).map(|_| ar.sample(&mut s)).collect();
        let (m, sd) = moments(&xs);
        assert!(m.abs() < 0.02, "{m}");
        assert!((sd - 1.0).abs() < 0.02, "{sd}");
        assert!(xs.iter().all(|x| (-6.0..=6.0).contains(x)));
    }

    #[test]
    fn accept_reject_acceptance_rate() {
        let mut ar = standard_ar();
        let mut s = SeededStream::new(99);
        let mut accepted = 0u64;
        while ar.attempts() < 100_000 {
            ar.sample(&mut s);
            accepted += 1;
        }
        let attempts = ar.attempts() as f64;
        let p = 1.0 / ar.c();
        let se = (p * (1.0 - p) / attempts).sqrt();
        let rate = accepted as f64 / attempts;
        assert!((rate - p).abs() < 3.0 * se, "rate {rate} vs {p}");
    }

    #[test]
    fn accept_reject_op_accounting() {
        let mut ar = standard_ar();
        let mut s = SeededStream::new(3);
        for _ in 0..1000 {
            ar.sample(&mut s);
        }
        let ops = ar.ops();
        assert!(ops.arithmetic_ops() >= 10 * ar.attempts());
        assert_eq!(ops.uniform_draws, 2 * ar.attempts());
        assert_eq!(ops.rejections, ar.attempts() - 1000);
    }

    #[test]
    fn no_overlap_rejected() {
        let target = GaussianSpec::standard();
        let far = UniformSpec::new(9.0, 12.0).unwrap();
        assert!(matches!(
            AcceptReject::new(target, far, 10.0),
            Err(SamplerError::NoOverlap { .. })
        ));
    }

    #[test]
    fn envelope_violation_rejected() {
        let target = GaussianSpec::standard();
        let proposal = UniformSpec::new(-6.0, 6.0).unwrap();
        assert!(matches!(
            AcceptReject::new(target, proposal, 2.0),
            Err(SamplerError::EnvelopeViolated { .. })
        ));
        assert!(matches!(
            AcceptReject::new(target, proposal, 0.5),
            Err(SamplerError::InvalidEnvelopeConstant(_))
        ));
    }

    #[test]
    fn tight_constant_matches_closed_form() {
        let c = tight_envelope_constant(
            &GaussianSpec::standard(),
            &UniformSpec::new(-6.0, 6.0).unwrap(),
        );
        assert!((c - 12.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
        let target = GaussianSpec::new(980.794, 7.178).unwrap();
        let proposal = UniformSpec::new(980.794 - 5.0 * 7.178, 980.794 + 5.0 * 7.178).unwrap();
        let c = tight_envelope_constant(&target, &proposal);
        assert!(AcceptReject::new(target, proposal, c).is_ok());
    }

    #[test]
    fn inverted_ratio_test_distorts_target() {
        // accepting with probability ~ u/(c f) favours low-density regions
        let c = 12.0 / (2.0 * PI).sqrt();
        let mut ar = AcceptReject::with_test(
            GaussianSpec::standard(),
            UniformSpec::new(-6.0, 6.0).unwrap(),
            c,
            AcceptTest::InvertedRatio,
        )
        .unwrap();
        let mut s = SeededStream::new(8);
        let xs: Vec<f64> = (0..20_000).map(|_| ar.sample(&mut s)).collect();
        let (_, sd) = moments(&xs);
        assert!(sd > 2.0, "{sd}");
    }

    #[test]
    fn reference_gaussian_deterministic() {
        let spec = GaussianSpec::new(980.794, 7.178).unwrap();
        let mut a = ReferenceGaussian::new(spec);
        let mut b = ReferenceGaussian::new(spec);
        let (mut sa, mut sb) = (SeededStream::new(7), SeededStream::new(7));
        for _ in 0..1000 {
            assert_eq!(a.sample(&mut sa).to_bits(), b.sample(&mut sb).to_bits());
        }
    }

    #[test]
    fn reference_gaussian_mean() {
        // 5 sigma / sqrt(N) = 5 * 7.178 / 316.2 = 0.1135
        let spec = GaussianSpec::new(980.794, 7.178).unwrap();
        let mut g = ReferenceGaussian::new(spec);
        let mut s = SeededStream::new(2024);
        let xs: Vec<f64> = (0..100_000).map(|_| g.sample(&mut s)).collect();
        let (m, _) = moments(&xs);
        assert!((m - 980.794).abs() < 0.114, "{m}");
    }

    #[test]
    fn reference_gaussian_one_sigma_fraction() {
        // P(|Z| <= 1) = 0.682689; binomial sd = sqrt(p(1-p)/N) = 0.00147, 5 sd = 0.0074
        let mut g = ReferenceGaussian::new(GaussianSpec::standard());
        let mut s = SeededStream::new(31);
        let inside = (0..100_000)
            .filter(|_| g.sample(&mut s).abs() <= 1.0)
            .count();
        let frac = inside as f64 / 100_000.0;
        assert!((frac - 0.6827).abs() < 0.0075, "{frac}");
    }
}
