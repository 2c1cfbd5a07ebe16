use std::f64::consts::PI;

use needlet_core::correlation::{
    correlation, decay_exponent_fit, decorrelation_bound, needlet_covariance, CorrelationQuery,
};
use needlet_core::cubature::CubatureGrid;
use needlet_core::field::{sample_alm, synthesize_field};
use needlet_core::harmonics::{legendre_poly, spherical_harmonic, HarmonicIndex, SphericalPoint};
use needlet_core::kernels::NeedletKernel;
use needlet_core::spectra::PowerSpectrum;
use needlet_core::stats::{estimate_omega, hermite};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = SphericalPoint> {
    (0.0..=PI, 0.0..(2.0 * PI)).prop_map(|(t, p)| SphericalPoint::new(t, p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_of_unity(base in 1.2f64..4.0, l in 1usize..5000) {
        let k = NeedletKernel::npw(base).unwrap();
        let top = (l as f64).ln() / base.ln() + 2.0;
        let total: f64 = (0..=top.ceil() as i32).map(|j| k.npw_window(l as f64 / base.powi(j)).unwrap().powi(2)).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn legendre_bounded(l in 0usize..400, x in -1.0f64..=1.0) {
        prop_assert!(legendre_poly(l, x).unwrap().abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn harmonic_conjugate_symmetry(l in 0usize..60, m_frac in 0.0f64..1.0, p in point()) {
        let m = (m_frac * l as f64).floor() as i64;
        let pos = spherical_harmonic(HarmonicIndex::new(l, m).unwrap(), &p);
        let neg = spherical_harmonic(HarmonicIndex::new(l, -m).unwrap(), &p);
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((neg - pos.conj() * sign).norm() < 1e-12);
    }

    #[test]
    fn cubature_weights_sum(deg in 1usize..120) {
        let g = CubatureGrid::build(2.0, 3, deg).unwrap();
        prop_assert!(g.weights().iter().all(|w| *w > 0.0));
        prop_assert!((g.weights().iter().sum::<f64>() - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn hermite_power_identities(x in -6.0f64..6.0) {
        prop_assert!((hermite(3, x) + 3.0 * hermite(1, x) - x.powi(3)).abs() < 1e-10);
        prop_assert!((hermite(4, x) + 6.0 * hermite(2, x) - (x.powi(4) - 3.0)).abs() < 1e-9);
    }

    #[test]
    fn decay_fit_recovers_exponent(kappa in -2.0f64..12.0, base in 1.5f64..3.0, c in 0.01f64..10.0) {
        let pts: Vec<(u32, f64)> = (2..9u32)
            .map(|j| {
                let x = j as f64 - (j as f64).ln() / base.ln();
                (j, c * base.powf(-x * kappa))
            })
            .collect();
        let fit = decay_exponent_fit(&pts, base).unwrap();
        prop_assert!((fit.exponent - kappa).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn correlation_symmetric_and_bounded(
        p in 1u32..4,
        alpha in 2.1f64..14.0,
        j1 in 1u32..7,
        j2 in 1u32..7,
        theta in 0.0f64..=PI,
    ) {
        let kernel = NeedletKernel::mexican(2.0, p).unwrap();
        let spectrum = PowerSpectrum::power_law(alpha).unwrap();
        let q = |a, b| CorrelationQuery { kernel, spectrum: spectrum.clone(), j1: a, j2: b, theta, tolerance: 1e-13 };
        let c12 = correlation(&q(j1, j2)).unwrap().corr;
        let c21 = correlation(&q(j2, j1)).unwrap().corr;
        prop_assert!(c12.abs() <= 1.0);
        prop_assert!((c12 - c21).abs() < 1e-14);
    }

    #[test]
    fn decorrelation_bound_holds(
        p in 1u32..4,
        alpha_frac in 0.05f64..0.95,
        j1 in 3u32..9,
        j2 in 3u32..9,
        theta in 0.01f64..=PI,
    ) {
        let alpha = 2.0 + alpha_frac * (4.0 * p as f64 - 1.0);
        let kernel = NeedletKernel::mexican(2.0, p).unwrap();
        let spectrum = PowerSpectrum::power_law(alpha).unwrap();
        let c = correlation(&CorrelationQuery { kernel, spectrum, j1, j2, theta, tolerance: 1e-13 }).unwrap().corr;
        let bound = decorrelation_bound(p, alpha, 2.0, j1, j2, theta, 1.0, 1.0).unwrap();
        prop_assert!(c.abs() <= bound, "corr {} bound {}", c, bound);
    }

    #[test]
    fn npw_disjoint_support(j1 in 1u32..9, gap in 2u32..5, theta in 0.0f64..=PI, alpha in 2.1f64..9.0) {
        let k = NeedletKernel::npw(2.0).unwrap();
        let s = PowerSpectrum::power_law(alpha).unwrap();
        prop_assert_eq!(needlet_covariance(&k, &s, j1, j1 + gap, theta, 1e-13).unwrap().value, 0.0);
    }

    #[test]
    fn synthesized_fields_are_real_and_seeded(seed in any::<u64>(), pts in proptest::collection::vec(point(), 1..8)) {
        let s = PowerSpectrum::power_law(3.0).unwrap();
        let a = sample_alm(&s, 24, seed).unwrap();
        let v1 = synthesize_field(&a, &pts).unwrap();
        let v2 = synthesize_field(&sample_alm(&s, 24, seed).unwrap(), &pts).unwrap();
        prop_assert_eq!(v1, v2);
    }

    #[test]
    fn omega_symmetric_psd(rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 4..40)) {
        let o = estimate_omega(&rows).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                prop_assert!((o.matrix[r][c] - o.matrix[c][r]).abs() < 1e-12);
            }
        }
        prop_assert!(o.min_eigenvalue > -1e-10 * o.max_eigenvalue.abs().max(1.0));
    }
}
