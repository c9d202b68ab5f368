use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AdcModel, CalibrationGrid, SensorError};
use crate::rng::UniformSource;
use crate::samplers::ReferenceGaussian;

/// Read-out rate of the modeled I2C accelerometer.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 1154.0;

const KEYS: [&str; 7] = [
    "bins",
    "range_lo",
    "range_hi",
    "temperature_c",
    "voltage_v",
    "sample_rate_hz",
    "source",
];

/// A recorded or generated sequence of ADC codes with its acquisition
/// conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    codes: Vec<u32>,
    adc: AdcModel,
    temperature: f64,
    voltage: f64,
    sample_rate: f64,
    source_label: String,
}

impl SampleTrace {
    pub fn new(
        codes: Vec<u32>,
        adc: AdcModel,
        temperature: f64,
        voltage: f64,
        sample_rate: f64,
        source_label: impl Into<String>,
    ) -> Result<Self, SensorError> {
        if let Some(&bad) = codes.iter().find(|&&c| c >= adc.bin_count()) {
            return Err(SensorError::CodeOutOfRange {
                code: u64::from(bad),
                bins: adc.bin_count(),
            });
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(SensorError::InvalidSampleRate(sample_rate));
        }
        let source_label = source_label.into();
        if source_label.contains(['\n', '\r']) {
            return Err(SensorError::InvalidLabel);
        }
        Ok(Self {
            codes,
            adc,
            temperature,
            voltage,
            sample_rate,
            source_label,
        })
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn adc(&self) -> &AdcModel {
        &self.adc
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn voltage(&self) -> f64 {
        self.voltage
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<(), SensorError> {
        let mut w = BufWriter::new(writer);
        let mut header = String::new();
        let _ = writeln!(header, "bins={}", self.adc.bin_count());
        let _ = writeln!(header, "range_lo={:?}", self.adc.range_lo());
        let _ = writeln!(header, "range_hi={:?}", self.adc.range_hi());
        let _ = writeln!(header, "temperature_c={:?}", self.temperature);
        let _ = writeln!(header, "voltage_v={:?}", self.voltage);
        let _ = writeln!(header, "sample_rate_hz={:?}", self.sample_rate);
        let _ = writeln!(header, "source={}", self.source_label);
        header.push('\n');
        w.write_all(header.as_bytes())?;
        let mut line = String::with_capacity(8);
        for &c in &self.codes {
            line.clear();
            let _ = writeln!(line, "{c}");
            w.write_all(line.as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self, SensorError> {
        let mut rdr = BufReader::new(reader);
        let mut values: [Option<String>; 7] = Default::default();
        let mut line = String::new();
        let mut lineno = 0usize;
        loop {
            line.clear();
            if rdr.read_line(&mut line)? == 0 {
                return Err(SensorError::TruncatedBody(
                    "end of file before the blank line ending the header".into(),
                ));
            }
            lineno += 1;
            if !line.ends_with('\n') {
                return Err(SensorError::TruncatedBody(format!(
                    "header cut off at line {lineno}"
                )));
            }
            let text = line.trim_end_matches(['\n', '\r']);
            if text.is_empty() {
                break;
            }
            let (key, value) = text.split_once('=').ok_or_else(|| SensorError::MalformedHeader {
                line: lineno,
                reason: format!("expected key=value, got {text:?}"),
            })?;
            let slot = KEYS
                .iter()
                .position(|&k| k == key)
                .ok_or_else(|| SensorError::MalformedHeader {
                    line: lineno,
                    reason: format!("unknown key {key:?}"),
                })?;
            if values[slot].replace(value.to_string()).is_some() {
                return Err(SensorError::MalformedHeader {
                    line: lineno,
                    reason: format!("duplicate key {key:?}"),
                });
            }
        }
        let header_end = lineno;
        let get = |i: usize| {
            values[i].as_deref().ok_or_else(|| SensorError::MalformedHeader {
                line: header_end,
                reason: format!("missing key {:?}", KEYS[i]),
            })
        };
        let num = |i: usize| -> Result<f64, SensorError> {
            let raw = get(i)?;
            raw.parse::<f64>().map_err(|_| SensorError::MalformedHeader {
                line: header_end,
                reason: format!("{} = {raw:?} is not a number", KEYS[i]),
            })
        };
        let bins_raw = get(0)?;
        let bins: u32 = bins_raw.parse().map_err(|_| SensorError::MalformedHeader {
            line: header_end,
            reason: format!("bins = {bins_raw:?} is not an integer"),
        })?;
        let adc = AdcModel::new(bins, num(1)?, num(2)?).map_err(|e| SensorError::MalformedHeader {
            line: header_end,
            reason: e.to_string(),
        })?;
        let (temperature, voltage, sample_rate) = (num(3)?, num(4)?, num(5)?);
        let source = get(6)?.to_string();

        let mut codes = Vec::new();
        let mut terminated = true;
        loop {
            line.clear();
            if rdr.read_line(&mut line)? == 0 {
                break;
            }
            lineno += 1;
            terminated = line.ends_with('\n');
            let text = line.trim_end_matches(['\n', '\r']);
            let code = match text.parse::<u64>() {
                Ok(c) if c < u64::from(bins) => c as u32,
                Ok(_) => {
                    return Err(SensorError::TraceCodeOutOfRange {
                        line: lineno,
                        code: text.to_string(),
                        bins,
                    })
                }
                Err(_) if !terminated => {
                    return Err(SensorError::TruncatedBody(format!(
                        "partial last line {lineno}: {text:?}"
                    )))
                }
                Err(_) => {
                    return Err(SensorError::TraceCodeOutOfRange {
                        line: lineno,
                        code: text.to_string(),
                        bins,
                    })
                }
            };
            codes.push(code);
        }
        if codes.is_empty() {
            return Err(SensorError::TruncatedBody("no codes after the header".into()));
        }
        if !terminated {
            return Err(SensorError::TruncatedBody(format!(
                "last line {lineno} is not newline-terminated"
            )));
        }
        Self::new(codes, adc, temperature, voltage, sample_rate, source).map_err(|e| match e {
            SensorError::InvalidSampleRate(r) => SensorError::MalformedHeader {
                line: header_end,
                reason: format!("sample_rate_hz = {r} must be > 0"),
            },
            SensorError::InvalidLabel => SensorError::MalformedHeader {
                line: header_end,
                reason: "invalid source label".into(),
            },
            other => other,
        })
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<SampleTrace, SensorError> {
    SampleTrace::read_from(std::fs::File::open(path)?)
}

pub fn store_trace(trace: &SampleTrace, path: impl AsRef<Path>) -> Result<(), SensorError> {
    trace.write_to(std::fs::File::create(path)?)
}

/// Draws `n` noise samples at the grid's parameters for `(temperature,
/// voltage)` and reads each one through `adc`.
pub fn generate_trace<S: UniformSource>(
    stream: &mut S,
    grid: &CalibrationGrid,
    temperature: f64,
    voltage: f64,
    adc: &AdcModel,
    n: usize,
) -> Result<SampleTrace, SensorError> {
    if n == 0 {
        return Err(SensorError::EmptyTrace);
    }
    let params = grid.noise_params(temperature, voltage)?;
    let mut noise = ReferenceGaussian::new(params.spec());
    let codes = (0..n).map(|_| adc.quantize(noise.sample(stream))).collect();
    SampleTrace::new(
        codes,
        *adc,
        temperature,
        voltage,
        DEFAULT_SAMPLE_RATE_HZ,
        "synthetic",
    )
}

/// Bin-center values of the trace codes.
pub fn dequantize(trace: &SampleTrace) -> Vec<f64> {
    trace.codes.iter().map(|&c| trace.adc.value(c)).collect()
}

/// Bin centers plus uniform jitter across the bin: `value(code) + u * lsb / 2`
/// with `u ~ U[-1, 1]`.
pub fn dequantize_with_jitter<S: UniformSource>(trace: &SampleTrace, stream: &mut S) -> Vec<f64> {
    let half = 0.5 * trace.adc.lsb();
    trace
        .codes
        .iter()
        .map(|&c| {
            let u = 2.0 * stream.next_uniform() - 1.0;
            trace.adc.value(c) + u * half
        })
        .collect()
}
