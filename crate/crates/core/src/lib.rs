//! Programmable non-uniform random variate generation from a modeled sensor
//! noise source.
//!
//! A temperature/voltage dependent Gaussian noise process is quantized by an
//! ADC model ([`sensor`]), compensated back to a standard normal using a
//! calibration grid and retargeted to any requested Gaussian with a single
//! multiply-add ([`transform`]). Classical software generators ([`samplers`])
//! are instrumented with operation counters so the two routes can be compared
//! without relying on wall-clock numbers. [`stats`] and [`montecarlo`] hold
//! the KL-divergence and Monte Carlo integration harnesses.

pub mod distributions;
pub mod montecarlo;
mod parallel;
pub mod rng;
pub mod samplers;
pub mod sensor;
pub mod stats;
pub mod transform;

pub use distributions::{Distribution, ExponentialSpec, GaussianSpec, UniformSpec};
pub use rng::{FixedUniform, SeededStream, UniformSource};
pub use samplers::OpCounter;
