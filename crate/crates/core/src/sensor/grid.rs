use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SensorError;
use crate::distributions::GaussianSpec;

/// Acquisition order of the default temperature axis, degrees C.
pub const DEFAULT_TEMPERATURES_C: [f64; 7] = [25.0, 20.0, 15.0, 10.0, 5.0, 0.0, -5.0];
/// Acquisition order of the default supply axis, volts.
pub const DEFAULT_VOLTAGES_V: [f64; 12] = [3.6, 3.4, 3.2, 3.0, 2.8, 2.6, 2.4, 2.2, 2.0, 1.8, 1.6, 1.4];

// Synthetic surface anchored at the 10 C / 2.6 V operating point.
const ANCHOR_T: f64 = 10.0;
const ANCHOR_V: f64 = 2.6;
const ANCHOR_MEAN: f64 = 980.794;
const ANCHOR_SIGMA: f64 = 7.178;
const MEAN_PER_DEG: f64 = -0.08;
const MEAN_PER_VOLT: f64 = 0.5;
const SIGMA_PER_DEG: f64 = -0.03;
const SIGMA_PER_VOLT: f64 = -0.3;
const MEAN_OFFSET_AMPLITUDE: f64 = 0.02;
const SIGMA_OFFSET_AMPLITUDE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Temperature,
    Voltage,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Temperature => f.write_str("temperature"),
            Axis::Voltage => f.write_str("voltage"),
        }
    }
}

/// Noise mean and standard deviation at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub mean: f64,
    pub sigma: f64,
}

impl NoiseParams {
    pub fn spec(&self) -> GaussianSpec {
        GaussianSpec::new(self.mean, self.sigma).expect("grid cells hold sigma > 0")
    }
}

/// `(temperature, voltage) -> (mean, sigma)` table, rectangular and complete.
///
/// Axes are stored ascending; cells are temperature-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationGrid {
    temperatures: Vec<f64>,
    voltages: Vec<f64>,
    cells: Vec<NoiseParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationRow {
    temperature_c: f64,
    voltage_v: f64,
    mean: f64,
    sigma: f64,
}

impl CalibrationGrid {
    pub fn new(
        temperatures: Vec<f64>,
        voltages: Vec<f64>,
        cells: Vec<NoiseParams>,
    ) -> Result<Self, SensorError> {
        check_axis(&temperatures, Axis::Temperature)?;
        check_axis(&voltages, Axis::Voltage)?;
        if cells.len() != temperatures.len() * voltages.len() {
            return Err(SensorError::InvalidGrid(format!(
                "{} cells for a {}x{} grid",
                cells.len(),
                temperatures.len(),
                voltages.len()
            )));
        }
        for c in &cells {
            if !c.mean.is_finite() || !(c.sigma.is_finite() && c.sigma > 0.0) {
                return Err(SensorError::InvalidGrid(format!(
                    "cell (mean {}, sigma {}) needs finite mean and sigma > 0",
                    c.mean, c.sigma
                )));
            }
        }
        Ok(Self {
            temperatures,
            voltages,
            cells,
        })
    }

    /// Builds a grid from unordered `(temperature, voltage, params)` nodes,
    /// enforcing that every axis combination appears exactly once.
    pub fn from_nodes(nodes: &[(f64, f64, NoiseParams)]) -> Result<Self, SensorError> {
        let mut temps: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let mut volts: Vec<f64> = nodes.iter().map(|n| n.1).collect();
        for axis in [&mut temps, &mut volts] {
            axis.sort_by(f64::total_cmp);
            axis.dedup();
        }
        let nv = volts.len();
        let mut slots: Vec<Option<NoiseParams>> = vec![None; temps.len() * nv];
        for &(t, v, p) in nodes {
            let ti = temps.iter().position(|&x| x == t).expect("axis built from nodes");
            let vi = volts.iter().position(|&x| x == v).expect("axis built from nodes");
            if slots[ti * nv + vi].replace(p).is_some() {
                return Err(SensorError::InvalidGrid(format!(
                    "duplicate cell at {t} C, {v} V"
                )));
            }
        }
        let mut cells = Vec::with_capacity(slots.len());
        for (i, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(p) => cells.push(p),
                None => {
                    return Err(SensorError::InvalidGrid(format!(
                        "missing cell at {} C, {} V",
                        temps[i / nv],
                        volts[i % nv]
                    )))
                }
            }
        }
        Self::new(temps, volts, cells)
    }

    /// Same parameters at every node.
    pub fn constant(
        temperatures: Vec<f64>,
        voltages: Vec<f64>,
        params: NoiseParams,
    ) -> Result<Self, SensorError> {
        let n = temperatures.len() * voltages.len();
        Self::new(temperatures, voltages, vec![params; n])
    }

    /// Synthetic 7x12 grid over 25..-5 C and 3.6..1.4 V.
    ///
    /// Affine trends plus small fixed per-node offsets. Mean falls with
    /// temperature and rises with supply voltage; sigma falls with both.
    /// Offsets stay below half of the smallest trend step between adjacent
    /// nodes, so every trend is monotone along both axes.
    pub fn synthetic_default() -> Self {
        let mut temps = DEFAULT_TEMPERATURES_C.to_vec();
        let mut volts = DEFAULT_VOLTAGES_V.to_vec();
        temps.reverse();
        volts.reverse();
        let mut cells = Vec::with_capacity(temps.len() * volts.len());
        for &t in &temps {
            for &v in &volts {
                let a = (t - ANCHOR_T) / 5.0;
                let b = (v - ANCHOR_V) / 0.2;
                let mean = ANCHOR_MEAN
                    + MEAN_PER_DEG * (t - ANCHOR_T)
                    + MEAN_PER_VOLT * (v - ANCHOR_V)
                    + MEAN_OFFSET_AMPLITUDE * (1.3 * a + 0.7 * b).sin();
                let sigma = ANCHOR_SIGMA
                    + SIGMA_PER_DEG * (t - ANCHOR_T)
                    + SIGMA_PER_VOLT * (v - ANCHOR_V)
                    + SIGMA_OFFSET_AMPLITUDE * (0.9 * a - 1.1 * b).sin();
                cells.push(NoiseParams { mean, sigma });
            }
        }
        Self::new(temps, volts, cells).expect("synthetic grid is valid")
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temperatures
    }

    pub fn voltages(&self) -> &[f64] {
        &self.voltages
    }

    pub fn cell(&self, ti: usize, vi: usize) -> NoiseParams {
        self.cells[ti * self.voltages.len() + vi]
    }

    /// Midpoint of the calibrated box.
    pub fn center(&self) -> (f64, f64) {
        let mid = |a: &[f64]| 0.5 * (a[0] + a[a.len() - 1]);
        (mid(&self.temperatures), mid(&self.voltages))
    }

    /// Nodes in acquisition order: temperature descending, then voltage
    /// descending.
    pub fn nodes(&self) -> Vec<(f64, f64, NoiseParams)> {
        let mut out = Vec::with_capacity(self.cells.len());
        for ti in (0..self.temperatures.len()).rev() {
            for vi in (0..self.voltages.len()).rev() {
                out.push((self.temperatures[ti], self.voltages[vi], self.cell(ti, vi)));
            }
        }
        out
    }

    /// Bilinear interpolation of the noise parameters.
    pub fn noise_params(&self, temperature: f64, voltage: f64) -> Result<NoiseParams, SensorError> {
        let (ti, _) = locate(&self.temperatures, temperature, Axis::Temperature)?;
        let (vi, _) = locate(&self.voltages, voltage, Axis::Voltage)?;
        Ok(self.interpolate_in_cell(ti, vi, temperature, voltage))
    }

    /// Bilinear interpolation using the cell whose lower corner is node
    /// `(ti, vi)`. Points outside that cell are extrapolated.
    pub fn interpolate_in_cell(&self, ti: usize, vi: usize, temperature: f64, voltage: f64) -> NoiseParams {
        let (t0, t1, wt) = weight(&self.temperatures, ti, temperature);
        let (v0, v1, wv) = weight(&self.voltages, vi, voltage);
        let c00 = self.cell(t0, v0);
        let c01 = self.cell(t0, v1);
        let c10 = self.cell(t1, v0);
        let c11 = self.cell(t1, v1);
        let lerp = |a: f64, b: f64, w: f64| (1.0 - w) * a + w * b;
        let blend = |f: fn(&NoiseParams) -> f64| {
            lerp(
                lerp(f(&c00), f(&c01), wv),
                lerp(f(&c10), f(&c11), wv),
                wt,
            )
        };
        NoiseParams {
            mean: blend(|c| c.mean),
            sigma: blend(|c| c.sigma),
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SensorError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| SensorError::MalformedCalibration(e.to_string()))?;
        let expected = ["temperature_c", "voltage_v", "mean", "sigma"];
        if headers.iter().map(str::trim).ne(expected.iter().copied()) {
            return Err(SensorError::MalformedCalibration(format!(
                "header must be {}",
                expected.join(",")
            )));
        }
        let mut nodes = Vec::new();
        for row in rdr.deserialize::<CalibrationRow>() {
            let row = row.map_err(|e| SensorError::MalformedCalibration(e.to_string()))?;
            nodes.push((
                row.temperature_c,
                row.voltage_v,
                NoiseParams {
                    mean: row.mean,
                    sigma: row.sigma,
                },
            ));
        }
        if nodes.is_empty() {
            return Err(SensorError::MalformedCalibration("no rows".into()));
        }
        Self::from_nodes(&nodes)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SensorError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (t, v, p) in self.nodes() {
            wtr.serialize(CalibrationRow {
                temperature_c: t,
                voltage_v: v,
                mean: p.mean,
                sigma: p.sigma,
            })
            .map_err(|e| SensorError::MalformedCalibration(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn load_calibration(path: impl AsRef<Path>) -> Result<CalibrationGrid, SensorError> {
    CalibrationGrid::read_csv(std::fs::File::open(path)?)
}

pub fn store_calibration(grid: &CalibrationGrid, path: impl AsRef<Path>) -> Result<(), SensorError> {
    grid.write_csv(std::fs::File::create(path)?)
}

fn check_axis(axis: &[f64], which: Axis) -> Result<(), SensorError> {
    if axis.is_empty() {
        return Err(SensorError::InvalidGrid(format!("empty {which} axis")));
    }
    if axis.iter().any(|x| !x.is_finite()) || axis.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SensorError::InvalidGrid(format!(
            "{which} axis must be finite and strictly ascending"
        )));
    }
    Ok(())
}

/// Lower node index of the cell containing `x`, and the in-cell weight.
fn locate(axis: &[f64], x: f64, which: Axis) -> Result<(usize, f64), SensorError> {
    let (lo, hi) = (axis[0], axis[axis.len() - 1]);
    if !(x >= lo && x <= hi) {
        return Err(SensorError::OutOfRange {
            axis: which,
            value: x,
            lo,
            hi,
        });
    }
    if axis.len() == 1 {
        return Ok((0, 0.0));
    }
    let i = axis.partition_point(|&a| a <= x).saturating_sub(1).min(axis.len() - 2);
    Ok((i, (x - axis[i]) / (axis[i + 1] - axis[i])))
}

fn weight(axis: &[f64], i: usize, x: f64) -> (usize, usize, f64) {
    if axis.len() == 1 {
        return (0, 0, 0.0);
    }
    (i, i + 1, (x - axis[i]) / (axis[i + 1] - axis[i]))
}
