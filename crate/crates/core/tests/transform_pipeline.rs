use proptest::prelude::*;

use prva_core::montecarlo::default_adc;
use prva_core::sensor::{generate_trace, CalibrationGrid};
use prva_core::stats::{fit_gaussian, kl_divergence, Histogram};
use prva_core::transform::{compensate, deliver, make_coeffs, Calibration};
use prva_core::{GaussianSpec, OpCounter, SeededStream};

const N: usize = 100_000;

fn target() -> GaussianSpec {
    GaussianSpec::new(980.794, 7.178).unwrap()
}

fn compensated_at(grid: &CalibrationGrid, t: f64, v: f64, seed: u64) -> Vec<f64> {
    let adc = default_adc(grid).unwrap();
    let mut s = SeededStream::new(seed);
    let trace = generate_trace(&mut s, grid, t, v, &adc, N).unwrap();
    compensate(&trace, Calibration::Grid(grid), &mut s, &mut OpCounter::default()).unwrap()
}

#[test]
fn corners_compensate_to_standard_normal() {
    let grid = CalibrationGrid::synthetic_default();
    for (i, (t, v)) in [(-5.0, 1.4), (-5.0, 3.6), (25.0, 1.4), (25.0, 3.6)].into_iter().enumerate() {
        let fit = fit_gaussian(&compensated_at(&grid, t, v, 20 + i as u64)).unwrap();
        assert!(fit.mean.abs() < 0.02, "({t}, {v}) mean {}", fit.mean);
        assert!((0.98..=1.02).contains(&fit.sigma), "({t}, {v}) sigma {}", fit.sigma);
    }
}

#[test]
fn drained_variates_match_requested_spec() {
    let grid = CalibrationGrid::synthetic_default();
    let z = compensated_at(&grid, 10.0, 2.6, 30);
    let coeffs = make_coeffs(&GaussianSpec::standard(), &target());
    let (out, stats, ops) = deliver(z.into_iter(), &coeffs, 1024).unwrap();
    assert_eq!(out.len(), N);
    assert_eq!(stats.consumed, N as u64);
    assert_eq!(ops.arithmetic_ops(), 2 * N as u64);

    let fit = fit_gaussian(&out).unwrap();
    assert!((fit.mean - 980.794).abs() < 0.114, "mean {}", fit.mean);
    assert!((fit.sigma - 7.178).abs() < 0.081, "sigma {}", fit.sigma);
    let t = target();
    let hist = Histogram::equal_width(&out, 256, t.mean() - 4.0 * t.sigma(), t.mean() + 4.0 * t.sigma()).unwrap();
    let kl = kl_divergence(&hist, &t).unwrap();
    assert!(kl < 0.01, "kl {kl}");
}

#[test]
fn compensation_suppresses_drift() {
    let grid = CalibrationGrid::synthetic_default();
    let (ts, vs) = (grid.temperatures().to_vec(), grid.voltages().to_vec());
    let (ct, cv) = grid.center();
    let center = grid.noise_params(ct, cv).unwrap().spec();
    let adc = default_adc(&grid).unwrap();
    let (mut comp_max, mut raw_max) = (0.0f64, 0.0f64);
    let mut seed = 100;
    for &t in &ts {
        for &v in &vs {
            seed += 1;
            let mut s = SeededStream::new(seed);
            let trace = generate_trace(&mut s, &grid, t, v, &adc, 20_000).unwrap();
            let mut ops = OpCounter::default();
            let z = compensate(&trace, Calibration::Grid(&grid), &mut s, &mut ops).unwrap();
            comp_max = comp_max.max(fit_gaussian(&z).unwrap().mean.abs());
            let fixed = make_coeffs(&center, &GaussianSpec::standard());
            let raw = prva_core::sensor::dequantize(&trace);
            let u = fixed.apply_all(&raw, &mut ops);
            raw_max = raw_max.max(fit_gaussian(&u).unwrap().mean.abs());
        }
    }
    assert!(raw_max >= 10.0 * comp_max, "raw {raw_max} vs compensated {comp_max}");
}

#[test]
fn retarget_costs_two_ops_per_variate() {
    let coeffs = make_coeffs(&GaussianSpec::new(3.0, 0.5).unwrap(), &target());
    let mut ops = OpCounter::default();
    for i in 0..1000 {
        coeffs.apply(f64::from(i), &mut ops);
    }
    assert_eq!(ops.multiplications, 1000);
    assert_eq!(ops.additions, 1000);
    assert_eq!(ops.arithmetic_ops(), 2000);
    assert_eq!(ops.uniform_draws, 0);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn affine_moment_law(
        xs in prop::collection::vec(-1e3f64..1e3, 2..200),
        (m1, s1, m2, s2) in (-1e3f64..1e3, 0.01f64..100.0, -1e3f64..1e3, 0.01f64..100.0),
    ) {
        prop_assume!(xs.iter().any(|&x| x != xs[0]));
        let c = make_coeffs(&GaussianSpec::new(m1, s1).unwrap(), &GaussianSpec::new(m2, s2).unwrap());
        let ys = c.apply_all(&xs, &mut OpCounter::default());
        let fx = fit_gaussian(&xs).unwrap();
        let fy = fit_gaussian(&ys).unwrap();
        // rounding scales with the magnitude of the data, not of the moment
        let mag = ys.iter().fold(1.0f64, |m, y| m.max(y.abs()));
        let tol = 1e-9 * mag;
        let want_mean = c.scale() * fx.mean + c.offset();
        let want_sigma = c.scale().abs() * fx.sigma;
        prop_assert!((fy.mean - want_mean).abs() <= tol, "{} vs {}", fy.mean, want_mean);
        prop_assert!((fy.sigma - want_sigma).abs() <= tol, "{} vs {}", fy.sigma, want_sigma);
    }
}
