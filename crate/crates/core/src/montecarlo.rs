//! Sorted-sample trapezoidal Monte Carlo integration and the benchmark
//! harness that compares uniform, reference-Gaussian and sensor-sourced
//! samples on the integral of a Gaussian density.

use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{gaussian_pdf, DistributionError, GaussianSpec, UniformSpec};
use crate::parallel;
use crate::rng::SeededStream;
use crate::samplers::{Inversion, OpCounter, ReferenceGaussian};
use crate::sensor::{generate_trace, AdcModel, CalibrationGrid, SampleTrace, SensorError};
use crate::stats::{confidence_interval_90, Interval};
use crate::transform::{compensate, deliver, make_coeffs, Calibration, TransformError};

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("repetitions must be >= 1")]
    NoRepetitions,
    #[error("threads must be >= 1")]
    NoThreads,
    #[error("unknown source {0:?} (expected uniform:<k>, gaussian, prva or replay)")]
    UnknownSource(String),
    #[error("replay source needs a trace")]
    MissingTrace,
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("report output: {0}")]
    Output(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationResult {
    pub area: f64,
    /// `|1 - area|`
    pub error: f64,
    pub elapsed: Duration,
    pub n: usize,
    pub source_label: String,
}

/// Sum of trapezoids under the target density between adjacent sorted
/// samples. Equal neighbours add zero-width trapezoids.
pub fn trapezoid_area(sorted: &[f64], target: &GaussianSpec) -> f64 {
    let mut area = 0.0;
    let mut prev_x = sorted[0];
    let mut prev_f = gaussian_pdf(prev_x, target);
    for &x in &sorted[1..] {
        let f = gaussian_pdf(x, target);
        area += (x - prev_x) * (f + prev_f) / 2.0;
        prev_x = x;
        prev_f = f;
    }
    area
}

/// Sorts `samples` ascending and integrates the target density over them.
/// `elapsed` covers the sort and the accumulation.
pub fn mc_integrate(
    mut samples: Vec<f64>,
    target: &GaussianSpec,
    source_label: &str,
) -> Result<IntegrationResult, MonteCarloError> {
    let start = Instant::now();
    let (area, n) = sort_and_integrate(&mut samples, target)?;
    Ok(IntegrationResult {
        area,
        error: (1.0 - area).abs(),
        elapsed: start.elapsed(),
        n,
        source_label: source_label.to_string(),
    })
}

fn sort_and_integrate(samples: &mut [f64], target: &GaussianSpec) -> Result<(f64, usize), MonteCarloError> {
    if samples.len() < 2 {
        return Err(MonteCarloError::TooFewSamples(samples.len()));
    }
    sort_ascending(samples);
    Ok((trapezoid_area(samples, target), samples.len()))
}

/// Total-order ascending sort; NaNs go last.
pub fn sort_ascending(samples: &mut [f64]) {
    samples.sort_unstable_by(f64::total_cmp);
}

/// Sensor-pipeline source: generate (or replay) a trace, compensate it with
/// the grid, retarget through the variate cache.
#[derive(Debug, Clone)]
pub struct PrvaSource {
    pub grid: CalibrationGrid,
    /// Defaults to a 12-bit converter spanning the grid's center cell
    /// `mean +/- 4 sigma`.
    pub adc: Option<AdcModel>,
    pub temperature: f64,
    pub voltage: f64,
    pub cache_capacity: usize,
    /// Codes to replay instead of generating; reused cyclically.
    pub replay: Option<SampleTrace>,
}

impl Default for PrvaSource {
    /// Synthetic grid read at 20 C and 3.0 V.
    fn default() -> Self {
        Self {
            grid: CalibrationGrid::synthetic_default(),
            adc: None,
            temperature: 20.0,
            voltage: 3.0,
            cache_capacity: 4096,
            replay: None,
        }
    }
}

impl PrvaSource {
    pub fn adc(&self) -> Result<AdcModel, SensorError> {
        match self.adc {
            Some(a) => Ok(a),
            None => default_adc(&self.grid),
        }
    }

    /// `n` variates following `target`, plus the operations charged after the
    /// analog noise source (jitter and the two affine maps).
    pub fn materialize(
        &self,
        target: &GaussianSpec,
        n: usize,
        stream: &mut SeededStream,
    ) -> Result<(Vec<f64>, OpCounter), MonteCarloError> {
        let trace = match &self.replay {
            Some(rec) => {
                if rec.is_empty() {
                    return Err(MonteCarloError::MissingTrace);
                }
                let codes = rec.codes().iter().copied().cycle().take(n).collect();
                SampleTrace::new(
                    codes,
                    *rec.adc(),
                    rec.temperature(),
                    rec.voltage(),
                    rec.sample_rate(),
                    rec.source_label(),
                )?
            }
            None => generate_trace(
                stream,
                &self.grid,
                self.temperature,
                self.voltage,
                &self.adc()?,
                n,
            )?,
        };
        let mut ops = OpCounter::default();
        let standard = compensate(&trace, Calibration::Grid(&self.grid), stream, &mut ops)?;
        let coeffs = make_coeffs(&GaussianSpec::standard(), target);
        let (out, _, cache_ops) = deliver(standard.into_iter(), &coeffs, self.cache_capacity)
            .map_err(TransformError::from)?;
        ops += cache_ops;
        Ok((out, ops))
    }
}

/// 12-bit ADC spanning `mean +/- 4 sigma` of the grid's center cell.
pub fn default_adc(grid: &CalibrationGrid) -> Result<AdcModel, SensorError> {
    let (t, v) = grid.center();
    let p = grid.noise_params(t, v)?;
    AdcModel::centered_12bit(p.mean, p.sigma)
}

#[derive(Debug, Clone)]
pub enum Source {
    /// Uniform on `target mean +/- half_width_sigmas * target sigma`.
    Uniform { half_width_sigmas: f64 },
    /// Polar-method Gaussian matched to the target.
    Gaussian,
    /// Modeled sensor pipeline.
    Prva(Box<PrvaSource>),
}

impl Source {
    pub fn label(&self) -> String {
        match self {
            Source::Uniform { half_width_sigmas } => format!("uniform:{half_width_sigmas}"),
            Source::Gaussian => "gaussian".into(),
            Source::Prva(p) if p.replay.is_some() => "replay".into(),
            Source::Prva(_) => "prva".into(),
        }
    }
}

impl FromStr for Source {
    type Err = MonteCarloError;

    /// `uniform:<k>`, `gaussian` or `prva`. `replay` needs a trace and is
    /// built by the caller.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(k) = s.strip_prefix("uniform:") {
            return match k.parse::<f64>() {
                Ok(k) if k.is_finite() && k > 0.0 => Ok(Source::Uniform { half_width_sigmas: k }),
                _ => Err(MonteCarloError::UnknownSource(s.to_string())),
            };
        }
        match s {
            "gaussian" => Ok(Source::Gaussian),
            "prva" => Ok(Source::Prva(Box::default())),
            "replay" => Err(MonteCarloError::MissingTrace),
            _ => Err(MonteCarloError::UnknownSource(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationReport {
    pub source: String,
    pub n: usize,
    pub repetitions: usize,
    pub mean_error: f64,
    pub error_ci90: Interval,
    pub mean_time_s: f64,
    pub time_ci90: Interval,
    pub ops: OpCounter,
    /// Arithmetic operations per delivered variate.
    pub ops_per_variate: f64,
    /// Per-repetition errors, in repetition order.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub target_mean: f64,
    pub target_sigma: f64,
    pub n: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub threads: usize,
    pub configurations: Vec<ConfigurationReport>,
}

impl BenchmarkReport {
    pub fn configuration(&self, source: &str) -> Option<&ConfigurationReport> {
        self.configurations.iter().find(|c| c.source == source)
    }

    /// Zeroes every wall-clock field (and the thread count, which only
    /// affects timing) so reports can be compared byte for byte.
    pub fn without_timing(mut self) -> Self {
        self.threads = 0;
        for c in &mut self.configurations {
            c.mean_time_s = 0.0;
            c.time_ci90 = Interval { lo: 0.0, hi: 0.0 };
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per configuration.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MonteCarloError> {
        let mut w = csv::Writer::from_writer(writer);
        let out = |e: csv::Error| MonteCarloError::Output(e.to_string());
        w.write_record([
            "source",
            "n",
            "repetitions",
            "mean_error",
            "error_ci90_lo",
            "error_ci90_hi",
            "mean_time_s",
            "time_ci90_lo",
            "time_ci90_hi",
            "arithmetic_ops",
            "uniform_draws",
            "rejections",
            "ops_per_variate",
        ])
        .map_err(out)?;
        for c in &self.configurations {
            w.write_record([
                c.source.clone(),
                c.n.to_string(),
                c.repetitions.to_string(),
                format!("{:e}", c.mean_error),
                format!("{:e}", c.error_ci90.lo),
                format!("{:e}", c.error_ci90.hi),
                format!("{:e}", c.mean_time_s),
                format!("{:e}", c.time_ci90.lo),
                format!("{:e}", c.time_ci90.hi),
                c.ops.arithmetic_ops().to_string(),
                c.ops.uniform_draws.to_string(),
                c.ops.rejections.to_string(),
                format!("{}", c.ops_per_variate),
            ])
            .map_err(out)?;
        }
        w.flush().map_err(|e| MonteCarloError::Output(e.to_string()))
    }
}

struct RepOutcome {
    error: f64,
    seconds: f64,
    ops: OpCounter,
}

/// Repeats the integration `repetitions` times per source with fresh
/// streams derived from `(seed, source label, repetition)`.
///
/// Results are independent of `threads` and of which other sources are in
/// the list; only the timing fields vary between hosts and runs.
pub fn run_benchmark(
    sources: &[Source],
    target: &GaussianSpec,
    n: usize,
    repetitions: usize,
    threads: usize,
    seed: u64,
) -> Result<BenchmarkReport, MonteCarloError> {
    if n < 2 {
        return Err(MonteCarloError::TooFewSamples(n));
    }
    if repetitions == 0 {
        return Err(MonteCarloError::NoRepetitions);
    }
    if threads == 0 {
        return Err(MonteCarloError::NoThreads);
    }
    let mut configurations = Vec::with_capacity(sources.len());
    for source in sources {
        let label = source.label();
        let outcomes = parallel::map_indexed(threads, repetitions, |rep| {
            run_repetition(source, &label, target, n, seed, rep as u64)
        })
        .map_err(MonteCarloError::ThreadPool)?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        configurations.push(summarize(label, n, outcomes));
    }
    Ok(BenchmarkReport {
        target_mean: target.mean(),
        target_sigma: target.sigma(),
        n,
        repetitions,
        seed,
        threads,
        configurations,
    })
}

fn run_repetition(
    source: &Source,
    label: &str,
    target: &GaussianSpec,
    n: usize,
    seed: u64,
    rep: u64,
) -> Result<RepOutcome, MonteCarloError> {
    let mut stream = SeededStream::derive(seed, label, rep);
    let (start, mut samples, ops) = match source {
        Source::Uniform { half_width_sigmas } => {
            let half = half_width_sigmas * target.sigma();
            let mut gen = Inversion::new(UniformSpec::new(target.mean() - half, target.mean() + half)?)
                .expect("uniform has a closed-form inverse");
            let start = Instant::now();
            let samples: Vec<f64> = (0..n).map(|_| gen.sample(&mut stream)).collect();
            (start, samples, *gen.ops())
        }
        Source::Gaussian => {
            let mut gen = ReferenceGaussian::new(*target);
            let start = Instant::now();
            let samples: Vec<f64> = (0..n).map(|_| gen.sample(&mut stream)).collect();
            (start, samples, *gen.ops())
        }
        Source::Prva(prva) => {
            // delivered ahead of time; the timed region reads them from memory
            let (ready, ops) = prva.materialize(target, n, &mut stream)?;
            let start = Instant::now();
            (start, ready.clone(), ops)
        }
    };
    let (area, _) = sort_and_integrate(&mut samples, target)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(RepOutcome {
        error: (1.0 - area).abs(),
        seconds,
        ops,
    })
}

fn summarize(source: String, n: usize, outcomes: Vec<RepOutcome>) -> ConfigurationReport {
    let repetitions = outcomes.len();
    let errors: Vec<f64> = outcomes.iter().map(|o| o.error).collect();
    let times: Vec<f64> = outcomes.iter().map(|o| o.seconds).collect();
    let mut ops = OpCounter::default();
    for o in &outcomes {
        ops += o.ops;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ci = |v: &[f64]| {
        confidence_interval_90(v).unwrap_or_else(|_| {
            let m = mean(v);
            Interval { lo: m, hi: m }
        })
    };
    ConfigurationReport {
        source,
        n,
        repetitions,
        mean_error: mean(&errors),
        error_ci90: ci(&errors),
        mean_time_s: mean(&times),
        time_ci90: ci(&times),
        ops_per_variate: ops.arithmetic_ops() as f64 / (n * repetitions) as f64,
        ops,
        errors,
    }
}
