//! One test per acceptance criterion. Each prints a `criterion N: PASS|FAIL`
//! line with the measured quantities before asserting.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use needlet_core::correlation::{
    correlation, decay_exponent_fit, needlet_covariance, persistence_radius, CorrelationQuery, CorrelationReport,
    EnvelopeConstants, Lattice,
};
use needlet_core::cubature::CubatureGrid;
use needlet_core::field::{
    needlet_coefficients_harmonic, needlet_coefficients_quadrature, sample_alm, synthesize_on_grid, monte_carlo_correlation,
    MonteCarloConfig,
};
use needlet_core::harmonics::{legendre_poly, spherical_harmonic, HarmonicIndex, SphericalPoint};
use needlet_core::kernels::{smhw_approximation_gap, smhw_gap_curve, NeedletKernel, SmhwProfile};
use needlet_core::spectra::PowerSpectrum;
use needlet_core::stats::{clt_experiment, gamma_monte_carlo, CltThresholds, SimulationSettings, StatisticConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-13;

/// Criteria run one at a time so their wall-clock budgets are meaningful.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, detail: String, start: Instant) {
    println!(
        "criterion {n}: {} ({detail}; {:.2} s)",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

fn mexican(p: u32) -> NeedletKernel {
    NeedletKernel::mexican(2.0, p).unwrap()
}

fn corr(kernel: NeedletKernel, spectrum: &PowerSpectrum, j: u32, theta: f64) -> f64 {
    let q = CorrelationQuery { kernel, spectrum: spectrum.clone(), j1: j, j2: j, theta, tolerance: TOL };
    correlation(&q).unwrap().corr
}

#[test]
fn criterion_01_partition_of_unity() {
    let _guard = serial();
    let start = Instant::now();
    let k = NeedletKernel::npw(2.0).unwrap();
    let mut worst = 0.0f64;
    for l in 1..=2000usize {
        let total: f64 = (0..=14).map(|j| k.npw_window(l as f64 / 2f64.powi(j)).unwrap().powi(2)).sum();
        worst = worst.max((total - 1.0).abs());
    }
    report(1, worst < 1e-10 && start.elapsed().as_secs_f64() < 1.0, format!("max deviation {worst:.3e}"), start);
}

#[test]
fn criterion_02_addition_theorem() {
    let _guard = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut point = || SphericalPoint::new(rng.random::<f64>() * PI, rng.random::<f64>() * 2.0 * PI).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (a, b) = (point(), point());
        let x = a.cos_distance(&b);
        for l in 0..=50usize {
            let sum: f64 = (-(l as i64)..=l as i64)
                .map(|m| {
                    let idx = HarmonicIndex::new(l, m).unwrap();
                    (spherical_harmonic(idx, &a) * spherical_harmonic(idx, &b).conj()).re
                })
                .sum();
            let want = (2 * l + 1) as f64 / (4.0 * PI) * legendre_poly(l, x).unwrap();
            worst = worst.max((sum - want).abs());
        }
    }
    report(2, worst < 1e-10 && start.elapsed().as_secs_f64() < 5.0, format!("max error {worst:.3e}"), start);
}

#[test]
fn criterion_03_cubature_exactness() {
    let _guard = serial();
    let start = Instant::now();
    let grid = CubatureGrid::build(2.0, 6, 65).unwrap();
    let err = grid.exactness_check(64).unwrap();
    report(3, err < 1e-10 && start.elapsed().as_secs_f64() < 10.0, format!("max error {err:.3e}, {} points", grid.len()), start);
}

#[test]
fn criterion_04_decorrelation_bound() {
    let _guard = serial();
    let start = Instant::now();
    let spectrum = PowerSpectrum::power_law(3.0).unwrap();
    let js: Vec<u32> = (4..=9).collect();
    let lattice = Lattice::square(&js, &[0.05, 0.1, 0.2, 0.5, 1.0]);
    let r = CorrelationReport::compute(&mexican(2), &spectrum, &lattice, TOL, Some(EnvelopeConstants { c0: 1.0, cg: 1.0 }))
        .unwrap();
    let all_bounded = r.entries.iter().all(|e| e.bound.is_some()) && r.bound_violations().is_empty();
    let slack = r.entries.iter().map(|e| e.bound.unwrap() / e.corr.abs().max(1e-300)).fold(f64::INFINITY, f64::min);
    report(
        4,
        all_bounded && start.elapsed().as_secs_f64() < 30.0,
        format!("{} rows, {} violations, min bound/|corr| {slack:.3e}", r.entries.len(), r.bound_violations().len()),
        start,
    );
}

#[test]
fn criterion_05_subcritical_decay_rate() {
    let _guard = serial();
    let start = Instant::now();
    let spectrum = PowerSpectrum::power_law(3.0).unwrap();
    let pts: Vec<(u32, f64)> = (5..=10).map(|j| (j, corr(mexican(2), &spectrum, j, 0.2))).collect();
    let fit = decay_exponent_fit(&pts, 2.0).unwrap();
    let pass = fit.exponent > 0.0 && fit.exponent <= 7.0 && fit.residual < 0.5;
    let corrs: Vec<String> = pts.iter().map(|(_, c)| format!("{c:.3e}")).collect();
    report(
        5,
        pass,
        format!("exponent {:.4}, rms residual {:.4}, corr [{}]", fit.exponent, fit.residual, corrs.join(", ")),
        start,
    );
}

#[test]
fn criterion_06_supercritical_persistence() {
    let _guard = serial();
    let start = Instant::now();
    let eps = 0.3;
    let delta = persistence_radius(eps, 8.0, 1, 1.0).unwrap();
    let theta = delta.min(0.05);
    let spectrum = PowerSpectrum::power_law(8.0).unwrap();
    let cs: Vec<f64> = (8..=14).map(|j| corr(mexican(1), &spectrum, j, theta)).collect();
    let above = cs.iter().all(|c| *c > 1.0 - eps);
    let worst_drop = cs.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    let monotone = worst_drop <= 1e-6;
    let shown: Vec<String> = cs.iter().map(|c| format!("{c:.8}")).collect();
    report(
        6,
        above && monotone && start.elapsed().as_secs_f64() < 30.0,
        format!(
            "delta {delta:.4}, theta {theta}, all > 1-eps: {above}, largest drop {worst_drop:.2e}, corr [{}]",
            shown.join(", ")
        ),
        start,
    );
}

#[test]
fn criterion_07_exponential_spectrum() {
    let _guard = serial();
    let start = Instant::now();
    let spectrum = PowerSpectrum::exponential(vec![1.0], 1.0).unwrap();
    let pts: Vec<(u32, f64)> = (6..=12).map(|j| (j, corr(mexican(1), &spectrum, j, 0.05))).collect();
    let fit = decay_exponent_fit(&pts, 2.0).unwrap();
    let above = pts.iter().all(|(_, c)| *c > 0.5);
    report(
        7,
        above && fit.exponent.abs() < 0.1,
        format!("min corr {:.6}, fitted exponent {:.2e}", pts.iter().map(|p| p.1).fold(1.0, f64::min), fit.exponent),
        start,
    );
}

#[test]
fn criterion_08_npw_cross_scale_zero() {
    let _guard = serial();
    let start = Instant::now();
    let k = NeedletKernel::npw(2.0).unwrap();
    let spectrum = PowerSpectrum::power_law(3.0).unwrap();
    let mut checked = 0;
    let mut nonzero = 0;
    for j1 in 1..=9u32 {
        for j2 in 1..=9u32 {
            if j1.abs_diff(j2) < 2 {
                continue;
            }
            for theta in [0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, PI] {
                checked += 1;
                if needlet_covariance(&k, &spectrum, j1, j2, theta, TOL).unwrap().value != 0.0 {
                    nonzero += 1;
                }
            }
        }
    }
    report(8, nonzero == 0, format!("{checked} covariances, {nonzero} nonzero"), start);
}

#[test]
fn criterion_09_monte_carlo_agreement() {
    let _guard = serial();
    let start = Instant::now();
    let spectrum = PowerSpectrum::power_law(3.0).unwrap();
    let (j, theta) = (6, 0.2);
    let a = SphericalPoint::new(1.2, 0.4).unwrap();
    let b = SphericalPoint::new(1.2 + theta, 0.4).unwrap();
    let cfg = MonteCarloConfig {
        replicates: 2000,
        seed: 20_240_601,
        kernel: mexican(2),
        spectrum: spectrum.clone(),
        j,
        points: (a, b),
        l_max: Some(256),
    };
    let mc = monte_carlo_correlation(&cfg).unwrap();
    let exact = corr(mexican(2), &spectrum, j, theta);
    let pass = (mc.corr - exact).abs() <= 3.0 * mc.standard_error && start.elapsed().as_secs_f64() < 120.0;
    report(9, pass, format!("empirical {:.4} +- {:.4}, analytic {exact:.3e}", mc.corr, mc.standard_error), start);
}

#[test]
fn criterion_10_gamma_unbiased() {
    let _guard = serial();
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for j in [4u32, 5, 6] {
        let settings = SimulationSettings {
            kernel: mexican(2),
            spectrum: PowerSpectrum::power_law(3.0).unwrap(),
            j,
            seed: 1000 + j as u64,
            l_max: None,
            tolerance: TOL,
        };
        let g = gamma_monte_carlo(&settings, 2000).unwrap();
        pass &= g.within(3.0);
        lines.push(format!("j={j}: {:.5e} +- {:.1e} vs {:.5e}", g.mean, g.standard_error, g.analytic));
    }
    pass &= start.elapsed().as_secs_f64() < 120.0;
    report(10, pass, lines.join("; "), start);
}

#[test]
fn criterion_11_hermite_clt() {
    let _guard = serial();
    let start = Instant::now();
    let r = 1000;
    let settings = SimulationSettings {
        kernel: mexican(2),
        spectrum: PowerSpectrum::power_law(3.0).unwrap(),
        j: 7,
        seed: 31_337,
        l_max: None,
        tolerance: TOL,
    };
    let config = StatisticConfig::single_orders(&[2, 4]).unwrap();
    let n = r as f64;
    let thresholds = CltThresholds { mean: 3.0 / n.sqrt() * 3.0, variance: 0.15, skewness: f64::INFINITY, kurtosis: f64::INFINITY, ks: 1.63 / n.sqrt() };
    let out = clt_experiment(&settings, &config, r, 3000, thresholds).unwrap();
    let parts: Vec<String> = out
        .report
        .components
        .iter()
        .map(|c| format!("u={}: mean {:.4} var {:.4} ks {:.4}", c.u, c.mean, c.variance, c.ks))
        .collect();
    let pass = out.report.pass && start.elapsed().as_secs_f64() < 300.0;
    report(11, pass, format!("N_j = {}, {}", out.points, parts.join("; ")), start);
}

#[test]
fn criterion_12_smhw_approximation() {
    let _guard = serial();
    let start = Instant::now();
    let kernel = mexican(1);
    let mut sup_scaled = Vec::new();
    let mut sup_ratio = Vec::new();
    for j in 4..=8u32 {
        let prof = SmhwProfile::new(2.0, j).unwrap();
        let t = prof.scale();
        let fit = smhw_approximation_gap(&prof, &kernel, &prof.default_fit_grid(401)).unwrap();
        // scale-relative near field (0, 8 B^-j] plus the far field up to 1
        let mut thetas: Vec<f64> = (1..=400).map(|i| 8.0 * t * i as f64 / 400.0).collect();
        thetas.extend((1..=400).map(|i| 8.0 * t + (1.0 - 8.0 * t) * i as f64 / 400.0));
        let gap = smhw_gap_curve(&prof, &kernel, fit.k_fit, &thetas).unwrap();
        let sup = gap.iter().fold(0.0f64, |m, g| m.max(*g));
        sup_scaled.push(sup / t);
        let ratio = thetas
            .iter()
            .zip(&gap)
            .map(|(th, g)| g / (th.powi(4) * 2f64.powi(4 * j as i32)).min(1.0))
            .fold(0.0f64, f64::max);
        sup_ratio.push(ratio);
    }
    let spread = |v: &[f64]| v.iter().cloned().fold(0.0f64, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
    // bounded uniformly in j: never grows past 3x its value at the first scale
    let bounded = sup_ratio.iter().all(|r| r.is_finite() && *r <= 3.0 * sup_ratio[0]);
    let pass = spread(&sup_scaled) < 3.0 && bounded && start.elapsed().as_secs_f64() < 60.0;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    report(12, pass, format!("sup gap/B^-j [{}], sup gap/min(theta^4 B^4j, 1) [{}]", fmt(&sup_scaled), fmt(&sup_ratio)), start);
}

#[test]
fn criterion_13_path_equivalence() {
    let _guard = serial();
    let start = Instant::now();
    let spectrum = PowerSpectrum::power_law(2.5).unwrap();
    let l_max = 64;
    let kernel = mexican(1);
    let j = 3;
    let l_t = kernel.truncation_degree(j);
    let fine = CubatureGrid::build(2.0, j, (2 * l_t).max(l_t + l_max) + 1).unwrap();
    let analysis = Arc::new(CubatureGrid::build_default(2.0, j).unwrap());
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let a = sample_alm(&spectrum, l_max, 500 + seed).unwrap();
        let t = synthesize_on_grid(&a, &fine);
        let q = needlet_coefficients_quadrature(&t, &fine, l_max, &kernel, j, &analysis).unwrap();
        let h = needlet_coefficients_harmonic(&a, &kernel, &analysis, j).unwrap();
        let scale = h.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in q.values.iter().zip(&h.values) {
            worst = worst.max((x - y).abs() / scale);
        }
    }
    report(13, worst < 1e-8 && start.elapsed().as_secs_f64() < 60.0, format!("max relative difference {worst:.3e}"), start);
}
