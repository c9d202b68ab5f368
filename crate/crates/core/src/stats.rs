//! Histograms, Gaussian fits, KL divergence, quantization sweeps and 90%
//! confidence intervals.
//!
//! KL values are in nats throughout; [`nats_to_bits`] converts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{gaussian_mass, DistributionError, GaussianSpec, UniformSpec};
use crate::parallel;
use crate::rng::{SeededStream, UniformSource};
use crate::samplers::{Inversion, ReferenceGaussian};
use crate::sensor::{AdcModel, SampleTrace};

/// Two-sided 90% normal quantile.
pub const Z_90: f64 = 1.645;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no samples")]
    EmptyInput,
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("histogram range requires lo < hi, got [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite sample {0}")]
    NonFinite(f64),
    #[error("degenerate fit: all samples are equal")]
    DegenerateFit,
    #[error("Q is zero in bin {bin} where P > 0")]
    AbsoluteContinuity { bin: usize },
    #[error("repetitions must be >= 1")]
    NoRepetitions,
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`. Samples outside the range land in
    /// the nearest edge bin, like a saturating ADC.
    pub fn equal_width(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self, StatsError> {
        if bins < 2 {
            return Err(StatsError::TooFewBins(bins));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(StatsError::InvalidRange { lo, hi });
        }
        if samples.is_empty() {
            return Err(StatsError::EmptyInput);
        }
        let scale = bins as f64 / (hi - lo);
        let mut counts = vec![0u64; bins];
        for &x in samples {
            if x.is_nan() {
                return Err(StatsError::NonFinite(x));
            }
            let pos = ((x - lo) * scale).floor();
            let idx = if pos < 0.0 { 0 } else { (pos as usize).min(bins - 1) };
            counts[idx] += 1;
        }
        Ok(Self {
            edges: equal_edges(bins, lo, hi),
            counts,
            total: samples.len() as u64,
        })
    }

    /// One unit-width bin per integer over the span of the rounded samples,
    /// edges at `k +/- 0.5`.
    pub fn integer_bins(samples: &[f64]) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::EmptyInput);
        }
        let mut rounded = Vec::with_capacity(samples.len());
        for &x in samples {
            if !x.is_finite() {
                return Err(StatsError::NonFinite(x));
            }
            rounded.push(x.round() as i64);
        }
        let min = *rounded.iter().min().expect("non-empty");
        let max = *rounded.iter().max().expect("non-empty");
        // a single occupied integer still gets two bins
        let bins = ((max - min + 1) as usize).max(2);
        let mut counts = vec![0u64; bins];
        for r in rounded {
            counts[(r - min) as usize] += 1;
        }
        let edges = (0..=bins).map(|k| min as f64 - 0.5 + k as f64).collect();
        Ok(Self {
            edges,
            counts,
            total: samples.len() as u64,
        })
    }

    /// One bin per ADC code over the full converter range.
    pub fn adc_codes(adc: &AdcModel, codes: &[u32]) -> Result<Self, StatsError> {
        if codes.is_empty() {
            return Err(StatsError::EmptyInput);
        }
        let bins = adc.bin_count() as usize;
        let mut counts = vec![0u64; bins];
        for &c in codes {
            counts[(c as usize).min(bins - 1)] += 1;
        }
        Ok(Self {
            edges: equal_edges(bins, adc.range_lo(), adc.range_hi()),
            counts,
            total: codes.len() as u64,
        })
    }

    /// Native binning of a trace: one bin per ADC code over the span of
    /// codes actually observed.
    pub fn trace_native(trace: &SampleTrace) -> Result<Self, StatsError> {
        let codes = trace.codes();
        let min = *codes.iter().min().ok_or(StatsError::EmptyInput)?;
        let max = *codes.iter().max().ok_or(StatsError::EmptyInput)?;
        let adc = trace.adc();
        // keep two bins when only one code occurs
        let (lo_code, hi_code) = if min == max {
            if max + 1 < adc.bin_count() {
                (min, max + 1)
            } else {
                (min - 1, max)
            }
        } else {
            (min, max)
        };
        let bins = (hi_code - lo_code + 1) as usize;
        let mut counts = vec![0u64; bins];
        for &c in codes {
            counts[(c - lo_code) as usize] += 1;
        }
        let half = 0.5 * adc.lsb();
        let edges = (0..=bins)
            .map(|k| {
                if k == bins {
                    adc.value(hi_code) + half
                } else {
                    adc.value(lo_code + k as u32) - half
                }
            })
            .collect();
        Ok(Self {
            edges,
            counts,
            total: codes.len() as u64,
        })
    }

    /// Builds a histogram from explicit edges and counts.
    pub fn from_counts(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self, StatsError> {
        if counts.len() < 2 {
            return Err(StatsError::TooFewBins(counts.len()));
        }
        if edges.len() != counts.len() + 1
            || edges.iter().any(|e| !e.is_finite())
            || edges.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(StatsError::InvalidRange {
                lo: edges.first().copied().unwrap_or(f64::NAN),
                hi: edges.last().copied().unwrap_or(f64::NAN),
            });
        }
        let total = counts.iter().sum();
        if total == 0 {
            return Err(StatsError::EmptyInput);
        }
        Ok(Self {
            edges,
            counts,
            total,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Index of the fullest bin (first one on ties).
    pub fn modal_bin(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|&c| c == max).unwrap_or(0)
    }
}

fn equal_edges(bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    (0..=bins)
        .map(|i| if i == bins { hi } else { lo + i as f64 * width })
        .collect()
}

/// Maximum-likelihood Gaussian fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mean: f64,
    /// Population (divide-by-n) standard deviation.
    pub sigma: f64,
    pub n: usize,
}

impl FitResult {
    pub fn spec(&self) -> GaussianSpec {
        GaussianSpec::new(self.mean, self.sigma).expect("fit sigma > 0")
    }
}

pub fn fit_gaussian(samples: &[f64]) -> Result<FitResult, StatsError> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if !mean.is_finite() || !var.is_finite() {
        return Err(StatsError::NonFinite(mean));
    }
    if var <= 0.0 {
        return Err(StatsError::DegenerateFit);
    }
    Ok(FitResult {
        mean,
        sigma: var.sqrt(),
        n,
    })
}

/// `D_KL(P || Q)` in nats, where `P` is the histogram's empirical bin mass and
/// `Q` the Gaussian mass of each bin renormalized over the histogram range.
/// Bins with `P = 0` contribute nothing.
pub fn kl_divergence(hist: &Histogram, q: &GaussianSpec) -> Result<f64, StatsError> {
    let masses: Vec<f64> = hist
        .edges
        .windows(2)
        .map(|w| gaussian_mass(w[0], w[1], q))
        .collect();
    let z: f64 = masses.iter().sum();
    let total = hist.total as f64;
    let mut kl = 0.0;
    for (bin, (&count, &mass)) in hist.counts.iter().zip(&masses).enumerate() {
        if count == 0 {
            continue;
        }
        if mass <= 0.0 || z <= 0.0 {
            return Err(StatsError::AbsoluteContinuity { bin });
        }
        let p = count as f64 / total;
        kl += p * (p * z / mass).ln();
    }
    Ok(kl.max(0.0))
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// Closed 90% confidence interval on the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// `mean +/- 1.645 s / sqrt(n)` with `s` the divide-by-(n-1) deviation.
pub fn confidence_interval_90(values: &[f64]) -> Result<Interval, StatsError> {
    let n = values.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let half = Z_90 * var.sqrt() / (n as f64).sqrt();
    Ok(Interval {
        lo: mean - half,
        hi: mean + half,
    })
}

/// Mean KL divergence for one bin count of a quantization sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub bins: usize,
    pub mean_kl: f64,
}

/// For each bin count: draw `n` Gaussian samples, quantize them into that
/// many equal bins over `mean +/- 4 sigma`, fit a Gaussian to the quantized
/// values and take the KL divergence. Averaged over `repetitions`.
///
/// Repetition `r` draws from its own stream derived from `seed`; the same
/// samples are reused for every bin count of that repetition.
pub fn quantization_sweep(
    spec: &GaussianSpec,
    n: usize,
    bin_counts: &[usize],
    repetitions: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<SweepPoint>, StatsError> {
    if n < 1000 {
        return Err(StatsError::TooFewSamples { needed: 1000, got: n });
    }
    if repetitions == 0 {
        return Err(StatsError::NoRepetitions);
    }
    if let Some(&b) = bin_counts.iter().find(|&&b| b < 2 || b > u32::MAX as usize) {
        return Err(StatsError::TooFewBins(b));
    }
    let lo = spec.mean() - 4.0 * spec.sigma();
    let hi = spec.mean() + 4.0 * spec.sigma();
    let per_rep = parallel::map_indexed(threads, repetitions, |rep| {
        let mut stream = SeededStream::derive(seed, "quantization-sweep", rep as u64);
        let mut gen = ReferenceGaussian::new(*spec);
        let samples: Vec<f64> = (0..n).map(|_| gen.sample(&mut stream)).collect();
        bin_counts
            .iter()
            .map(|&bins| quantized_fit_kl(&samples, bins, lo, hi))
            .collect::<Result<Vec<f64>, StatsError>>()
    })
    .map_err(StatsError::ThreadPool)?;

    let mut sums = vec![0.0; bin_counts.len()];
    for rep in per_rep {
        for (s, kl) in sums.iter_mut().zip(rep?) {
            *s += kl;
        }
    }
    Ok(bin_counts
        .iter()
        .zip(sums)
        .map(|(&bins, s)| SweepPoint {
            bins,
            mean_kl: s / repetitions as f64,
        })
        .collect())
}

fn quantized_fit_kl(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Result<f64, StatsError> {
    let adc = AdcModel::new(bins as u32, lo, hi).map_err(|_| StatsError::TooFewBins(bins))?;
    let codes: Vec<u32> = samples.iter().map(|&x| adc.quantize(x)).collect();
    let centers: Vec<f64> = codes.iter().map(|&c| adc.value(c)).collect();
    let fit = fit_gaussian(&centers)?;
    kl_divergence(&Histogram::adc_codes(&adc, &codes)?, &fit.spec())
}

/// KL of `samples` against their own Gaussian fit at native integer
/// resolution: samples are rounded to integer codes, fitted, and binned one
/// code per bin over the observed span.
pub fn native_kl(samples: &[f64]) -> Result<(f64, FitResult), StatsError> {
    let rounded: Vec<f64> = samples.iter().map(|x| x.round()).collect();
    let fit = fit_gaussian(&rounded)?;
    let hist = Histogram::integer_bins(&rounded)?;
    Ok((kl_divergence(&hist, &fit.spec())?, fit))
}

/// KL of a trace against its own Gaussian fit at the trace's ADC resolution.
pub fn trace_kl(trace: &SampleTrace) -> Result<(f64, FitResult), StatsError> {
    let values = crate::sensor::dequantize(trace);
    let fit = fit_gaussian(&values)?;
    let hist = Histogram::trace_native(trace)?;
    Ok((kl_divergence(&hist, &fit.spec())?, fit))
}

/// Synthetic sample sets compared against their fitted Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticSet {
    /// Draws from the spec itself.
    Gaussian,
    /// Uniform on `mean +/- half_width_sigmas * sigma`.
    Uniform { half_width_sigmas: f64 },
}

impl SyntheticSet {
    pub fn label(&self) -> String {
        match self {
            SyntheticSet::Gaussian => "gaussian".into(),
            SyntheticSet::Uniform { half_width_sigmas } => format!("uniform:{half_width_sigmas}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NativeKlSummary {
    pub mean_kl_nats: f64,
    pub mean_kl_bits: f64,
    pub repetitions: usize,
    pub mean_fit_mean: f64,
    pub mean_fit_sigma: f64,
}

/// [`native_kl`] of `n` synthetic samples, averaged over `repetitions`.
pub fn mean_native_kl(
    set: SyntheticSet,
    spec: &GaussianSpec,
    n: usize,
    repetitions: usize,
    seed: u64,
    threads: usize,
) -> Result<NativeKlSummary, StatsError> {
    if repetitions == 0 {
        return Err(StatsError::NoRepetitions);
    }
    let label = format!("native-kl/{}", set.label());
    let runs = parallel::map_indexed(threads, repetitions, |rep| {
        let mut stream = SeededStream::derive(seed, &label, rep as u64);
        let samples = draw_set(set, spec, n, &mut stream)?;
        native_kl(&samples)
    })
    .map_err(StatsError::ThreadPool)?;
    let (mut kl, mut m, mut s) = (0.0, 0.0, 0.0);
    for run in runs {
        let (k, fit) = run?;
        kl += k;
        m += fit.mean;
        s += fit.sigma;
    }
    let r = repetitions as f64;
    Ok(NativeKlSummary {
        mean_kl_nats: kl / r,
        mean_kl_bits: nats_to_bits(kl / r),
        repetitions,
        mean_fit_mean: m / r,
        mean_fit_sigma: s / r,
    })
}

fn draw_set<S: UniformSource>(
    set: SyntheticSet,
    spec: &GaussianSpec,
    n: usize,
    stream: &mut S,
) -> Result<Vec<f64>, StatsError> {
    Ok(match set {
        SyntheticSet::Gaussian => {
            let mut g = ReferenceGaussian::new(*spec);
            (0..n).map(|_| g.sample(stream)).collect()
        }
        SyntheticSet::Uniform { half_width_sigmas } => {
            let half = half_width_sigmas * spec.sigma();
            let mut u = Inversion::new(UniformSpec::new(spec.mean() - half, spec.mean() + half)?)
                .expect("uniform has a closed-form inverse");
            (0..n).map(|_| u.sample(stream)).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_basic() {
        let h = Histogram::equal_width(&[0.1, 0.4, 0.6, 0.9], 2, 0.0, 1.0).unwrap();
        assert_eq!(h.counts(), &[2, 2]);
        assert_eq!(h.total(), 4);
        assert_eq!(h.edges(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn histogram_saturates_and_handles_lo() {
        let h = Histogram::equal_width(&[0.0; 5], 4, 0.0, 1.0).unwrap();
        assert_eq!(h.counts(), &[5, 0, 0, 0]);
        let h = Histogram::equal_width(&[-3.0, 7.0, 1.0], 4, 0.0, 1.0).unwrap();
        assert_eq!(h.counts(), &[1, 0, 0, 2]);
        assert_eq!(h.counts().iter().sum::<u64>(), h.total());
    }

    #[test]
    fn histogram_errors() {
        assert_eq!(
            Histogram::equal_width(&[], 4, 0.0, 1.0),
            Err(StatsError::EmptyInput)
        );
        assert!(Histogram::equal_width(&[1.0], 1, 0.0, 1.0).is_err());
        assert!(Histogram::equal_width(&[1.0], 4, 1.0, 0.0).is_err());
        assert!(Histogram::equal_width(&[f64::NAN], 4, 0.0, 1.0).is_err());
    }

    #[test]
    fn integer_bins_span() {
        let h = Histogram::integer_bins(&[2.2, 3.9, 4.4, 4.0]).unwrap();
        assert_eq!(h.edges(), &[1.5, 2.5, 3.5, 4.5]);
        assert_eq!(h.counts(), &[1, 0, 3]);
    }

    #[test]
    fn fit_examples() {
        let f = fit_gaussian(&[-1.0, 1.0]).unwrap();
        assert_eq!((f.mean, f.sigma, f.n), (0.0, 1.0, 2));
        assert_eq!(fit_gaussian(&[5.0, 5.0, 5.0]), Err(StatsError::DegenerateFit));
        assert!(matches!(
            fit_gaussian(&[1.0]),
            Err(StatsError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn kl_zero_when_p_equals_q() {
        let q = GaussianSpec::new(1.0, 2.0).unwrap();
        let edges: Vec<f64> = (0..=20).map(|i| -7.0 + 0.8 * i as f64).collect();
        let masses: Vec<f64> = edges.windows(2).map(|w| gaussian_mass(w[0], w[1], &q)).collect();
        let z: f64 = masses.iter().sum();
        let counts = masses.iter().map(|m| (m / z * 1e15).round() as u64).collect();
        let h = Histogram::from_counts(edges, counts).unwrap();
        assert!(kl_divergence(&h, &q).unwrap() < 1e-12);

        let sym = Histogram::from_counts(vec![-1.0, 0.0, 1.0], vec![5, 5]).unwrap();
        assert!(kl_divergence(&sym, &GaussianSpec::standard()).unwrap() < 1e-15);
    }

    #[test]
    fn kl_absolute_continuity() {
        // 60 sigma out: bin mass underflows to zero
        let h = Histogram::from_counts(vec![60.0, 61.0, 62.0], vec![1, 1]).unwrap();
        assert_eq!(
            kl_divergence(&h, &GaussianSpec::standard()),
            Err(StatsError::AbsoluteContinuity { bin: 0 })
        );
    }

    #[test]
    fn kl_positive_for_mismatch() {
        let h = Histogram::from_counts(vec![-1.0, 0.0, 1.0], vec![9, 1]).unwrap();
        let kl = kl_divergence(&h, &GaussianSpec::standard()).unwrap();
        let expected = 0.9 * (0.9f64 / 0.5).ln() + 0.1 * (0.1f64 / 0.5).ln();
        assert!((kl - expected).abs() < 1e-12);
    }

    #[test]
    fn ci_examples() {
        let c = confidence_interval_90(&[3.0; 10]).unwrap();
        assert_eq!((c.lo, c.hi), (3.0, 3.0));
        let c = confidence_interval_90(&[0.0, 2.0]).unwrap();
        assert!((0.5 * (c.lo + c.hi) - 1.0).abs() < 1e-15);
        assert!((1.0 - c.lo - (c.hi - 1.0)).abs() < 1e-15);
        // s = sqrt(2), half = 1.645 * sqrt(2) / sqrt(2)
        assert!((c.hi - 1.0 - 1.645).abs() < 1e-12);
        assert!(confidence_interval_90(&[1.0]).is_err());
    }

    #[test]
    fn ci_coverage() {
        // 1e3 intervals from 1e3 N(0,1) values each; binomial sd of the
        // coverage is sqrt(0.09 / 1000) = 0.0095
        let mut hits = 0;
        for rep in 0..1000 {
            let mut s = SeededStream::derive(77, "coverage", rep);
            let mut g = ReferenceGaussian::new(GaussianSpec::standard());
            let xs: Vec<f64> = (0..1000).map(|_| g.sample(&mut s)).collect();
            if confidence_interval_90(&xs).unwrap().contains(0.0) {
                hits += 1;
            }
        }
        let coverage = hits as f64 / 1000.0;
        assert!((coverage - 0.90).abs() < 0.04, "{coverage}");
    }

    #[test]
    fn sweep_two_bins_near_zero() {
        let spec = GaussianSpec::new(980.794, 7.178).unwrap();
        let pts = quantization_sweep(&spec, 10_000, &[2], 4, 1, 1).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].mean_kl < 1e-4, "{}", pts[0].mean_kl);
    }

    #[test]
    fn sweep_validation() {
        let spec = GaussianSpec::standard();
        assert!(quantization_sweep(&spec, 999, &[16], 1, 0, 1).is_err());
        assert!(quantization_sweep(&spec, 1000, &[16], 0, 0, 1).is_err());
        assert!(quantization_sweep(&spec, 1000, &[1], 1, 0, 1).is_err());
    }

    #[test]
    fn bits_conversion() {
        assert!((nats_to_bits(std::f64::consts::LN_2) - 1.0).abs() < 1e-15);
    }
}
