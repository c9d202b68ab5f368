use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use prva_core::montecarlo::{default_adc, run_benchmark, PrvaSource, Source};
use prva_core::samplers::OpCounter;
use prva_core::sensor::{
    generate_trace, load_calibration, load_trace, store_trace, AdcModel, CalibrationGrid,
    SampleTrace,
};
use prva_core::stats::{
    fit_gaussian, kl_divergence, mean_native_kl, nats_to_bits, quantization_sweep, trace_kl,
    FitResult, Histogram, SyntheticSet,
};
use prva_core::transform::{compensate, deliver, make_coeffs, Calibration, CacheStats};
use prva_core::{GaussianSpec, SeededStream};

const DEFAULT_MEAN: f64 = 980.794;
const DEFAULT_SIGMA: f64 = 7.178;

#[derive(Parser)]
#[command(name = "prva", version, about = "Sensor-noise random variate generation and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the sensor at an operating point and write a trace file.
    Generate(GenerateArgs),
    /// KL divergence of a trace or synthetic set against its fitted Gaussian.
    Kl(KlArgs),
    /// Mean KL versus ADC bin count, as CSV.
    Sweep(SweepArgs),
    /// Compensate a trace and retarget it through the variate cache.
    Transform(TransformArgs),
    /// Monte Carlo integration benchmark across sample sources.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct GridArgs {
    /// Calibration grid CSV (temperature_c,voltage_v,mean,sigma); built-in grid if omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
}

impl GridArgs {
    fn load(&self) -> Result<CalibrationGrid> {
        match &self.grid {
            Some(p) => load_calibration(p).with_context(|| format!("loading grid {}", p.display())),
            None => Ok(CalibrationGrid::synthetic_default()),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    temp: f64,
    #[arg(long)]
    volt: f64,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// ADC resolution; the range spans the grid center's mean +/- 4 sigma.
    #[arg(long, default_value_t = 12)]
    bits: u32,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SyntheticKind {
    Gaussian,
    Uniform,
}

#[derive(Args)]
struct KlArgs {
    /// Trace file to analyse.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    trace: Option<PathBuf>,
    /// Synthetic set to analyse instead of a trace.
    #[arg(long)]
    synthetic: Option<SyntheticKind>,
    /// Uniform half-width in sigmas.
    #[arg(long, default_value_t = 3.0)]
    half_width: f64,
    #[arg(long, default_value_t = DEFAULT_MEAN)]
    mean: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(2..))]
    n: u64,
    #[arg(long, visible_alias = "repetitions", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 64, 256, 1024, 4096])]
    bins: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_MEAN)]
    mean: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, visible_alias = "repetitions", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    /// CSV output path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    /// Trace to transform; a trace is generated at --temp/--volt otherwise.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    temp: f64,
    #[arg(long, default_value_t = 2.6)]
    volt: f64,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(2..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MEAN)]
    target_mean: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    target_sigma: f64,
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u64).range(1..))]
    capacity: u64,
    /// Fit the source parameters on the trace instead of using the grid.
    #[arg(long)]
    self_calibrate: bool,
    /// Write the delivered variates here, one per line.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, default_value_t = DEFAULT_MEAN)]
    target_mean: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    target_sigma: f64,
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(2..))]
    n: u64,
    #[arg(long, visible_alias = "repetitions", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated: uniform:<k>, gaussian, prva, replay.
    #[arg(long, value_delimiter = ',', default_values_t = ["uniform:3".to_string(), "uniform:10".into(), "uniform:100".into(), "uniform:1000".into(), "gaussian".into(), "prva".into()])]
    sources: Vec<String>,
    /// JSON report path; printed to stdout if neither --json nor --csv is given.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Zero wall-clock fields so reports compare byte for byte.
    #[arg(long)]
    omit_timing: bool,
    /// Trace for the replay source.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Operating point of the prva source.
    #[arg(long, default_value_t = 20.0)]
    temp: f64,
    #[arg(long, default_value_t = 3.0)]
    volt: f64,
    #[command(flatten)]
    grid: GridArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Kl(a) => cmd_kl(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn adc_for(grid: &CalibrationGrid, bits: u32) -> Result<AdcModel> {
    let (t, v) = grid.center();
    let p = grid.noise_params(t, v)?;
    Ok(AdcModel::with_bits(bits, p.mean - 4.0 * p.sigma, p.mean + 4.0 * p.sigma)?)
}

#[derive(Serialize)]
struct TraceSummary<'a> {
    out: &'a Path,
    n: usize,
    temperature_c: f64,
    voltage_v: f64,
    bins: u32,
    fit: FitResult,
    kl_nats: f64,
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let grid = a.grid.load()?;
    let adc = adc_for(&grid, a.bits)?;
    let mut stream = SeededStream::derive(a.seed, "generate", 0);
    let trace = generate_trace(&mut stream, &grid, a.temp, a.volt, &adc, a.n as usize)?;
    store_trace(&trace, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let (kl, fit) = trace_kl(&trace)?;
    print_json(&TraceSummary {
        out: &a.out,
        n: trace.len(),
        temperature_c: a.temp,
        voltage_v: a.volt,
        bins: adc.bin_count(),
        fit,
        kl_nats: kl,
    })
}

#[derive(Serialize)]
struct KlReport {
    source: String,
    n: usize,
    repetitions: usize,
    kl_nats: f64,
    kl_bits: f64,
    fit_mean: f64,
    fit_sigma: f64,
}

fn cmd_kl(a: KlArgs) -> Result<()> {
    let report = if let Some(path) = &a.trace {
        let trace = load_trace(path).with_context(|| format!("reading {}", path.display()))?;
        let (kl, fit) = trace_kl(&trace)?;
        KlReport {
            source: path.display().to_string(),
            n: trace.len(),
            repetitions: 1,
            kl_nats: kl,
            kl_bits: nats_to_bits(kl),
            fit_mean: fit.mean,
            fit_sigma: fit.sigma,
        }
    } else {
        let set = match a.synthetic.expect("clap requires --trace or --synthetic") {
            SyntheticKind::Gaussian => SyntheticSet::Gaussian,
            SyntheticKind::Uniform => SyntheticSet::Uniform {
                half_width_sigmas: a.half_width,
            },
        };
        let spec = GaussianSpec::new(a.mean, a.sigma)?;
        let s = mean_native_kl(set, &spec, a.n as usize, a.reps as usize, a.seed, a.threads as usize)?;
        KlReport {
            source: set.label(),
            n: a.n as usize,
            repetitions: s.repetitions,
            kl_nats: s.mean_kl_nats,
            kl_bits: s.mean_kl_bits,
            fit_mean: s.mean_fit_mean,
            fit_sigma: s.mean_fit_sigma,
        }
    };
    print_json(&report)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    if a.bins.is_empty() {
        bail!("--bins needs at least one bin count");
    }
    let spec = GaussianSpec::new(a.mean, a.sigma)?;
    let points = quantization_sweep(&spec, a.n as usize, &a.bins, a.reps as usize, a.seed, a.threads as usize)?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(out, "bins,mean_kl_nats")?;
    for p in points {
        writeln!(out, "{},{:e}", p.bins, p.mean_kl)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TransformReport {
    n: usize,
    source_mean: f64,
    source_sigma: f64,
    target_mean: f64,
    target_sigma: f64,
    scale: f64,
    offset: f64,
    fit: FitResult,
    kl_256_nats: f64,
    cache: CacheStats,
    /// Affine retarget only; compensation charges are in `ops`.
    retarget_ops_per_variate: f64,
    ops: OpCounter,
}

fn cmd_transform(a: TransformArgs) -> Result<()> {
    let grid = a.grid.load()?;
    let target = GaussianSpec::new(a.target_mean, a.target_sigma)?;
    let mut stream = SeededStream::derive(a.seed, "transform", 0);
    let trace: SampleTrace = match &a.trace {
        Some(p) => load_trace(p).with_context(|| format!("reading {}", p.display()))?,
        None => generate_trace(&mut stream, &grid, a.temp, a.volt, &default_adc(&grid)?, a.n as usize)?,
    };
    let calibration = if a.self_calibrate {
        Calibration::SelfFit
    } else {
        Calibration::Grid(&grid)
    };
    let source = prva_core::transform::compensation_source(&trace, calibration)?;
    let mut ops = OpCounter::default();
    let standard = compensate(&trace, calibration, &mut stream, &mut ops)?;
    let coeffs = make_coeffs(&GaussianSpec::standard(), &target);
    let (variates, cache, retarget_ops) = deliver(standard.into_iter(), &coeffs, a.capacity as usize)?;
    let n = variates.len();
    let retarget_ops_per_variate = retarget_ops.arithmetic_ops() as f64 / n as f64;
    ops += retarget_ops;

    let fit = fit_gaussian(&variates)?;
    let (lo, hi) = (target.mean() - 4.0 * target.sigma(), target.mean() + 4.0 * target.sigma());
    let kl = kl_divergence(&Histogram::equal_width(&variates, 256, lo, hi)?, &target)?;

    if let Some(p) = &a.out {
        let mut w = create(p)?;
        for x in &variates {
            writeln!(w, "{x:?}")?;
        }
        w.flush()?;
    }
    print_json(&TransformReport {
        n,
        source_mean: source.mean(),
        source_sigma: source.sigma(),
        target_mean: target.mean(),
        target_sigma: target.sigma(),
        scale: coeffs.scale(),
        offset: coeffs.offset(),
        fit,
        kl_256_nats: kl,
        cache,
        retarget_ops_per_variate,
        ops,
    })
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let target = GaussianSpec::new(a.target_mean, a.target_sigma)?;
    let grid = a.grid.load()?;
    let prva = PrvaSource {
        grid,
        temperature: a.temp,
        voltage: a.volt,
        ..PrvaSource::default()
    };
    let mut sources = Vec::with_capacity(a.sources.len());
    for label in &a.sources {
        let src = match label.trim() {
            "prva" => Source::Prva(Box::new(prva.clone())),
            "replay" => {
                let Some(p) = &a.trace else {
                    bail!("source `replay` needs --trace");
                };
                let trace = load_trace(p).with_context(|| format!("reading {}", p.display()))?;
                Source::Prva(Box::new(PrvaSource {
                    replay: Some(trace),
                    ..prva.clone()
                }))
            }
            other => other.parse()?,
        };
        sources.push(src);
    }
    let mut report = run_benchmark(
        &sources,
        &target,
        a.n as usize,
        a.reps as usize,
        a.threads as usize,
        a.seed,
    )?;
    if a.omit_timing {
        report = report.without_timing();
    }
    if a.json.is_none() && a.csv.is_none() {
        return print_json(&report);
    }
    if let Some(p) = &a.json {
        let mut w = create(p)?;
        w.write_all(report.to_json().as_bytes())?;
        writeln!(w)?;
        w.flush()?;
    }
    if let Some(p) = &a.csv {
        report.write_csv(create(p)?)?;
    }
    Ok(())
}
