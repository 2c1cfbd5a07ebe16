//! Exact covariance and correlation series for needlet coefficients of an
//! isotropic field, plus the closed-form decorrelation envelope and the
//! persistence radius of the fast-decay regime.
//!
//! All series here omit the cubature factor `sqrt(lambda_jk lambda_jk')`,
//! which cancels in every correlation:
//!
//! ```text
//! cov(j1, j2, theta) = sum_{l >= 1} w_{j1}(l) w_{j2}(l) (2l+1)/(4 pi) C_l P_l(cos theta)
//! ```

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::NeedletKernel;
use crate::spectra::{PowerSpectrum, SpectrumError};

/// Terms are accumulated in blocks of this many degrees.
pub const BLOCK: usize = 64;
/// Hard cap on the truncation degree.
pub const MAX_DEGREE: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error("series not converged to relative tolerance {tolerance:e} by l = {cap}")]
    Truncation { tolerance: f64, cap: usize },
    #[error("{0}")]
    Regime(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("variance at scale j = {j} is not positive")]
    DegenerateVariance { j: u32 },
    #[error("correlation {0} falls outside [-1, 1] beyond rounding")]
    OutOfRange(f64),
    #[error("decay fit: {0}")]
    DegenerateFit(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// A truncated series value with the last degree summed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    pub l_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationQuery {
    pub kernel: NeedletKernel,
    pub spectrum: PowerSpectrum,
    pub j1: u32,
    pub j2: u32,
    pub theta: f64,
    pub tolerance: f64,
}

fn check_tolerance(tolerance: f64) -> Result<(), CorrelationError> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(CorrelationError::InvalidQuery(format!("tolerance {tolerance} outside (0, 1)")));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<(), CorrelationError> {
    if !(0.0..=PI).contains(&theta) {
        return Err(CorrelationError::InvalidQuery(format!("theta {theta} outside [0, pi]")));
    }
    Ok(())
}

/// `sum_l w_{j1}(l) w_{j2}(l) (2l+1)/(4 pi) C_l P_l(cos theta)`, summed in
/// ascending `l` until past the window peak and a whole block of `BLOCK`
/// terms adds less than `tolerance` times the running absolute sum.
///
/// Tabulated spectra describe a field band-limited to the table, so the
/// series stops at the last tabulated degree.
pub fn needlet_covariance(
    kernel: &NeedletKernel,
    spectrum: &PowerSpectrum,
    j1: u32,
    j2: u32,
    theta: f64,
    tolerance: f64,
) -> Result<SeriesValue, CorrelationError> {
    check_tolerance(tolerance)?;
    check_theta(theta)?;
    let x = theta.cos();
    let peak = kernel.peak_degree(j1, j2);
    let top = spectrum.l_max_hint().unwrap_or(usize::MAX).min(MAX_DEGREE);
    let ln_4pi = (4.0 * PI).ln();

    let (mut p_prev, mut p_cur) = (1.0, x);
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    let mut block_abs = 0.0;
    let mut l = 1;
    loop {
        if l > 1 {
            let nf = (l - 1) as f64;
            let next = ((2.0 * nf + 1.0) * x * p_cur - nf * p_prev) / (nf + 1.0);
            p_prev = p_cur;
            p_cur = next;
        }
        if let (Some(a), Some(b)) = (kernel.ln_weight(l, j1), kernel.ln_weight(l, j2)) {
            let magnitude = (a + b + ((2 * l + 1) as f64).ln() - ln_4pi + spectrum.ln_evaluate(l)?).exp();
            sum += magnitude * p_cur;
            abs_sum += magnitude;
            block_abs += magnitude;
        }
        if l >= top {
            if top == MAX_DEGREE && spectrum.l_max_hint().is_none() {
                return Err(CorrelationError::Truncation { tolerance, cap: MAX_DEGREE });
            }
            break;
        }
        if l % BLOCK == 0 {
            if l > peak && block_abs <= tolerance * abs_sum {
                break;
            }
            block_abs = 0.0;
        }
        l += 1;
    }
    Ok(SeriesValue { value: sum, l_max: l })
}

/// Covariance at `j1 = j2 = j`, `theta = 0`.
pub fn needlet_variance(
    kernel: &NeedletKernel,
    spectrum: &PowerSpectrum,
    j: u32,
    tolerance: f64,
) -> Result<SeriesValue, CorrelationError> {
    let v = needlet_covariance(kernel, spectrum, j, j, 0.0, tolerance)?;
    if !(v.value > 0.0) {
        return Err(CorrelationError::DegenerateVariance { j });
    }
    Ok(v)
}

/// Variance of `beta_jk` for a point with cubature weight `lambda`.
pub fn coefficient_variance(
    kernel: &NeedletKernel,
    spectrum: &PowerSpectrum,
    j: u32,
    lambda: f64,
    tolerance: f64,
) -> Result<f64, CorrelationError> {
    if !(lambda > 0.0) {
        return Err(CorrelationError::InvalidQuery(format!("cubature weight {lambda} must be positive")));
    }
    Ok(lambda * needlet_variance(kernel, spectrum, j, tolerance)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationValue {
    pub corr: f64,
    pub l_max: usize,
}

/// `cov(j1, j2, theta) / sqrt(var(j1) var(j2))`.
pub fn correlation(query: &CorrelationQuery) -> Result<CorrelationValue, CorrelationError> {
    let cov = needlet_covariance(&query.kernel, &query.spectrum, query.j1, query.j2, query.theta, query.tolerance)?;
    let v1 = needlet_variance(&query.kernel, &query.spectrum, query.j1, query.tolerance)?;
    let v2 = if query.j2 == query.j1 { v1 } else { needlet_variance(&query.kernel, &query.spectrum, query.j2, query.tolerance)? };
    let corr = if query.j2 == query.j1 {
        cov.value / v1.value
    } else {
        cov.value / (v1.value.sqrt() * v2.value.sqrt())
    };
    let corr = if corr.abs() > 1.0 {
        if corr.abs() - 1.0 > 1e-12 {
            return Err(CorrelationError::OutOfRange(corr));
        }
        corr.signum()
    } else {
        corr
    };
    Ok(CorrelationValue { corr, l_max: cov.l_max.max(v1.l_max).max(v2.l_max) })
}

/// Relation of the spectral decay `alpha` to the critical value `4p + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Supercritical,
    Critical,
}

impl Regime {
    pub fn classify(alpha: f64, order: u32) -> Self {
        let critical = 4.0 * order as f64 + 2.0;
        if (alpha - critical).abs() <= 1e-12 * critical {
            Regime::Critical
        } else if alpha < critical {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }
}

/// Constant `C_M = 2^{2p} pi^{M+1} M^2 Gamma(M - 1) c0 C_g ln B` with
/// `M = 4p + 2 - alpha`.
pub fn envelope_constant(order: u32, alpha: f64, base: f64, c0: f64, cg: f64) -> Result<f64, CorrelationError> {
    let p = order as f64;
    let m = 4.0 * p + 2.0 - alpha;
    check_envelope_regime(order, alpha)?;
    if !(base > 1.0) {
        return Err(CorrelationError::InvalidQuery(format!("B = {base} violates B > 1")));
    }
    if !(c0 > 0.0) || !(cg > 0.0) {
        return Err(CorrelationError::InvalidQuery("c0 and C_g must be positive".into()));
    }
    Ok(4f64.powf(p) * PI.powf(m + 1.0) * m * m * libm::tgamma(m - 1.0) * c0 * cg * base.ln())
}

fn check_envelope_regime(order: u32, alpha: f64) -> Result<(), CorrelationError> {
    let p = order as f64;
    if !(alpha > 2.0) {
        return Err(CorrelationError::InvalidQuery(format!("alpha = {alpha} violates alpha > 2")));
    }
    if alpha >= 4.0 * p + 2.0 {
        return Err(CorrelationError::Regime(format!(
            "alpha >= 4p+2 ({alpha} >= {}): decorrelation bound unavailable",
            4.0 * p + 2.0
        )));
    }
    if alpha >= 4.0 * p + 1.0 {
        return Err(CorrelationError::Regime(format!(
            "alpha >= 4p+1 ({alpha} >= {}): Gamma(4p+1-alpha) in the bound constant is undefined or negative",
            4.0 * p + 1.0
        )));
    }
    Ok(())
}

/// Decorrelation envelope `C_M / (1 + B^e theta)^{4p+2-alpha}` with
/// `e = (j1 + j2)/2 - log_B(j1 + j2)/2`.
#[allow(clippy::too_many_arguments)]
pub fn decorrelation_bound(
    order: u32,
    alpha: f64,
    base: f64,
    j1: u32,
    j2: u32,
    theta: f64,
    c0: f64,
    cg: f64,
) -> Result<f64, CorrelationError> {
    check_theta(theta)?;
    let constant = envelope_constant(order, alpha, base, c0, cg)?;
    let m = 4.0 * order as f64 + 2.0 - alpha;
    let jsum = (j1 + j2) as f64;
    let scale_exponent = if jsum > 0.0 { jsum / 2.0 - jsum.ln() / base.ln() / 2.0 } else { 0.0 };
    Ok(constant / (1.0 + base.powf(scale_exponent) * theta).powf(m))
}

/// Radius `epsilon (1 + c0^2)^{-1/(alpha - 4p - 2)}` within which
/// correlations stay above `1 - epsilon` asymptotically when
/// `alpha > 4p + 2`.
pub fn persistence_radius(epsilon: f64, alpha: f64, order: u32, c0: f64) -> Result<f64, CorrelationError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CorrelationError::InvalidQuery(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let critical = 4.0 * order as f64 + 2.0;
    if alpha <= critical {
        return Err(CorrelationError::Regime(format!(
            "alpha <= 4p+2 ({alpha} <= {critical}): correlation persistence needs alpha > 4p+2"
        )));
    }
    if !(c0 > 0.0) {
        return Err(CorrelationError::InvalidQuery("c0 must be positive".into()));
    }
    Ok(epsilon * (1.0 + c0 * c0).powf(-1.0 / (alpha - critical)))
}

/// Least-squares line through `ln|corr|` against `(j - log_B j) ln B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Decay exponent `kappa` in `|corr| ~ B^{-(j - log_B j) kappa}`.
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log scale.
    pub residual: f64,
    pub max_residual: f64,
}

pub fn decay_exponent_fit(points: &[(u32, f64)], base: f64) -> Result<DecayFit, CorrelationError> {
    if points.len() < 4 {
        return Err(CorrelationError::DegenerateFit(format!("need at least 4 scales, got {}", points.len())));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    let ln_b = base.ln();
    for &(j, c) in points {
        if j == 0 {
            return Err(CorrelationError::DegenerateFit("scale j = 0 has no logarithm".into()));
        }
        let y = c.abs().ln();
        if !y.is_finite() {
            return Err(CorrelationError::DegenerateFit(format!("correlation {c} at j = {j} underflows")));
        }
        let jf = j as f64;
        xs.push((jf - jf.ln() / ln_b) * ln_b);
        ys.push(y);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(CorrelationError::DegenerateFit("all scales identical".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    let residual = (resid.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    let max_residual = resid.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(DecayFit { exponent: -slope, intercept, residual, max_residual })
}

/// Scale pairs and angles to tabulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub scales: Vec<(u32, u32)>,
    pub thetas: Vec<f64>,
}

impl Lattice {
    /// Every ordered pair from `js` crossed with `thetas`.
    pub fn square(js: &[u32], thetas: &[f64]) -> Self {
        let scales = js.iter().flat_map(|&a| js.iter().map(move |&b| (a, b))).collect();
        Self { scales, thetas: thetas.to_vec() }
    }

    /// Diagonal `j1 = j2 = j` only.
    pub fn diagonal(js: &[u32], thetas: &[f64]) -> Self {
        Self { scales: js.iter().map(|&j| (j, j)).collect(), thetas: thetas.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub j1: u32,
    pub j2: u32,
    pub theta: f64,
    pub corr: f64,
    pub bound: Option<f64>,
    pub l_max: usize,
}

/// Constants of the regularity condition used by the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConstants {
    pub c0: f64,
    pub cg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub kernel: NeedletKernel,
    pub spectrum: PowerSpectrum,
    pub tolerance: f64,
    pub constants: Option<EnvelopeConstants>,
    pub entries: Vec<ReportEntry>,
    pub fitted_exponent: Option<f64>,
    pub regime: Option<Regime>,
}

impl CorrelationReport {
    /// Evaluates the lattice (in parallel) and attaches envelope values when
    /// `constants` is given and the regime admits them. Rows come out sorted
    /// by `(j1, j2, theta)`.
    pub fn compute(
        kernel: &NeedletKernel,
        spectrum: &PowerSpectrum,
        lattice: &Lattice,
        tolerance: f64,
        constants: Option<EnvelopeConstants>,
    ) -> Result<Self, CorrelationError> {
        let alpha = match spectrum {
            PowerSpectrum::AlphaRegular { alpha, .. } => Some(*alpha),
            _ => None,
        };
        let regime = match (alpha, kernel.order()) {
            (Some(a), Some(p)) => Some(Regime::classify(a, p)),
            _ => None,
        };
        let mut jobs: Vec<(u32, u32, f64)> =
            lattice.scales.iter().flat_map(|&(a, b)| lattice.thetas.iter().map(move |&t| (a, b, t))).collect();
        jobs.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)).then(x.2.total_cmp(&y.2)));
        let entries = jobs
            .par_iter()
            .map(|&(j1, j2, theta)| {
                let query = CorrelationQuery { kernel: *kernel, spectrum: spectrum.clone(), j1, j2, theta, tolerance };
                let value = correlation(&query)?;
                let bound = match (constants, alpha, kernel.order(), regime) {
                    (Some(c), Some(a), Some(p), Some(Regime::Subcritical)) => {
                        decorrelation_bound(p, a, kernel.base(), j1, j2, theta, c.c0, c.cg).ok()
                    }
                    _ => None,
                };
                Ok(ReportEntry { j1, j2, theta, corr: value.corr, bound, l_max: value.l_max })
            })
            .collect::<Result<Vec<_>, CorrelationError>>()?;

        let mut report = Self { kernel: *kernel, spectrum: spectrum.clone(), tolerance, constants, entries, fitted_exponent: None, regime };
        if lattice.thetas.len() == 1 {
            let diag: Vec<(u32, f64)> = report.entries.iter().filter(|e| e.j1 == e.j2).map(|e| (e.j1, e.corr)).collect();
            if diag.len() >= 4 {
                report.fitted_exponent = decay_exponent_fit(&diag, kernel.base()).ok().map(|f| f.exponent);
            }
        }
        Ok(report)
    }

    /// Rows violating `|corr| <= bound`.
    pub fn bound_violations(&self) -> Vec<&ReportEntry> {
        self.entries.iter().filter(|e| matches!(e.bound, Some(b) if e.corr.abs() > b)).collect()
    }

    /// CSV with header `j1,j2,theta,corr,bound,lmax`; a missing bound is an
    /// empty field.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "j1,j2,theta,corr,bound,lmax")?;
        for e in &self.entries {
            let bound = e.bound.map(|b| format!("{b:.17e}")).unwrap_or_default();
            writeln!(out, "{},{},{},{:.17e},{},{}", e.j1, e.j2, e.theta, e.corr, bound, e.l_max)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubature::CubatureGrid;
    use crate::harmonics::legendre_poly;
    use crate::spectra::Modulation;

    const TOL: f64 = 1e-13;

    fn mexican(p: u32) -> NeedletKernel {
        NeedletKernel::mexican(2.0, p).unwrap()
    }

    /// Table with `C_target = 1` and every other degree negligible.
    fn single_multipole(target: usize, len: usize) -> PowerSpectrum {
        PowerSpectrum::tabulated((1..=len).map(|l| if l == target { 1.0 } else { 1e-300 }).collect()).unwrap()
    }

    #[test]
    fn single_multipole_closed_form() {
        // p = 1, B = 2, j = 1: w(2) = (6/4) e^{-6/4}
        let c = needlet_covariance(&mexican(1), &single_multipole(2, 2), 1, 1, 0.0, TOL).unwrap();
        let want = 2.25 * (-3.0f64).exp() * 5.0 / (4.0 * PI);
        assert!((c.value - want).abs() < 1e-15, "{} vs {want}", c.value);
        assert!((want - 0.044_57).abs() < 5e-5);

        let spec = single_multipole(6, 6);
        let k = mexican(2);
        let at0 = needlet_covariance(&k, &spec, 2, 3, 0.0, TOL).unwrap().value;
        let at_pi = needlet_covariance(&k, &spec, 2, 3, PI, TOL).unwrap().value;
        assert!((at0 - at_pi).abs() < 1e-15 * at0.abs());
        let w = k.weight(6, 2) * k.weight(6, 3) * 13.0 / (4.0 * PI);
        assert!((at0 - w).abs() < 1e-14 * w);
    }

    #[test]
    fn single_multipole_correlation_is_legendre() {
        let spec = single_multipole(7, 7);
        for kernel in [mexican(1), mexican(3), NeedletKernel::npw(2.0).unwrap()] {
            for theta in [0.1, 0.7, 2.0] {
                let q = CorrelationQuery { kernel, spectrum: spec.clone(), j1: 2, j2: 2, theta, tolerance: TOL };
                let c = correlation(&q).unwrap().corr;
                assert!((c - legendre_poly(7, theta.cos()).unwrap()).abs() < 1e-12, "{kernel:?} {theta}");
            }
        }
    }

    #[test]
    fn variance_geometric_ratio() {
        // without the cubature weight the ratio tends to B^{2-alpha}; with
        // lambda ~ 4 pi / N_j it tends to B^{-alpha} = 1/8 for alpha = 3
        let spec = PowerSpectrum::power_law(3.0).unwrap();
        for p in [1u32, 2] {
            let k = mexican(p);
            let v: Vec<f64> = (10..=12).map(|j| needlet_variance(&k, &spec, j, TOL).unwrap().value).collect();
            let bare = v[2] / v[1];
            assert!((bare - 0.5).abs() < 1e-3, "{bare}");
            let scaled: Vec<f64> = (10..=12)
                .map(|j| {
                    let g = CubatureGrid::build_default(2.0, j).unwrap();
                    coefficient_variance(&k, &spec, j, 4.0 * PI / g.len() as f64, TOL).unwrap()
                })
                .collect();
            let ratio = scaled[2] / scaled[1];
            assert!((ratio - 0.125).abs() < 2e-3, "{ratio}");
        }
    }

    #[test]
    fn npw_variance_uses_window_support() {
        let k = NeedletKernel::npw(2.0).unwrap();
        let spec = PowerSpectrum::power_law(2.5).unwrap();
        let j = 5;
        let v = needlet_variance(&k, &spec, j, TOL).unwrap().value;
        let direct: f64 = (17..64)
            .map(|l| k.weight(l, j).powi(2) * (2 * l + 1) as f64 / (4.0 * PI) * spec.evaluate(l).unwrap())
            .sum();
        assert!((v - direct).abs() < 1e-15 * direct);
        assert_eq!(k.weight(16, j), 0.0);
        assert_eq!(k.weight(64, j), 0.0);
    }

    #[test]
    fn npw_disjoint_scales_exactly_zero() {
        let k = NeedletKernel::npw(2.0).unwrap();
        let spec = PowerSpectrum::power_law(3.0).unwrap();
        for (j1, j2) in [(3u32, 5u32), (2, 6), (7, 4)] {
            for theta in [0.0, 0.3, 1.5, PI] {
                assert_eq!(needlet_covariance(&k, &spec, j1, j2, theta, TOL).unwrap().value, 0.0);
            }
        }
        assert!(needlet_covariance(&k, &spec, 3, 4, 0.0, TOL).unwrap().value > 0.0);
    }

    #[test]
    fn correlation_unit_at_zero_angle() {
        let spec = PowerSpectrum::power_law(3.0).unwrap();
        for j in [2u32, 6, 10] {
            let q = CorrelationQuery { kernel: mexican(2), spectrum: spec.clone(), j1: j, j2: j, theta: 0.0, tolerance: TOL };
            assert_eq!(correlation(&q).unwrap().corr, 1.0);
        }
    }

    #[test]
    fn truncation_doubling_is_stable() {
        let spec = PowerSpectrum::power_law(3.5).unwrap();
        let k = mexican(1);
        for (j, theta) in [(4u32, 0.1), (6, 0.05), (8, 0.3)] {
            let coarse = needlet_covariance(&k, &spec, j, j, theta, 1e-10).unwrap();
            let fine = needlet_covariance(&k, &spec, j, j, theta, 1e-15).unwrap();
            assert!(fine.l_max >= coarse.l_max);
            let var = needlet_variance(&k, &spec, j, 1e-15).unwrap().value;
            assert!((coarse.value - fine.value).abs() <= 10.0 * 1e-10 * var);
        }
    }

    #[test]
    fn query_validation() {
        let spec = PowerSpectrum::power_law(3.0).unwrap();
        assert!(needlet_covariance(&mexican(1), &spec, 2, 2, -0.1, TOL).is_err());
        assert!(needlet_covariance(&mexican(1), &spec, 2, 2, 0.1, 0.0).is_err());
        assert!(needlet_covariance(&mexican(1), &spec, 2, 2, 0.1, 1.0).is_err());
        let npw = NeedletKernel::npw(2.0).unwrap();
        let low = PowerSpectrum::tabulated(vec![1.0, 1.0]).unwrap();
        assert!(matches!(needlet_variance(&npw, &low, 6, TOL), Err(CorrelationError::DegenerateVariance { j: 6 })));
    }

    #[test]
    fn envelope_constant_example() {
        // p = 1, alpha = 3: 2^2 pi^4 9 Gamma(2) ln 2
        let c = envelope_constant(1, 3.0, 2.0, 1.0, 1.0).unwrap();
        let want = 4.0 * PI.powi(4) * 9.0 * 2f64.ln();
        assert!((c - want).abs() < 1e-9 * want);
        assert!((c - 2430.7).abs() < 0.1);
        assert_eq!(decorrelation_bound(1, 3.0, 2.0, 4, 4, 0.0, 1.0, 1.0).unwrap(), c);
        let b = decorrelation_bound(1, 3.0, 2.0, 3, 5, 0.1, 1.0, 1.0).unwrap();
        let denom = (1.0 + 2f64.powf(4.0 - 8f64.log2() / 2.0) * 0.1).powi(3);
        assert!((b - c / denom).abs() < 1e-12 * b);
    }

    #[test]
    fn envelope_regimes() {
        assert!(matches!(decorrelation_bound(1, 6.0, 2.0, 3, 3, 0.1, 1.0, 1.0), Err(CorrelationError::Regime(_))));
        assert!(matches!(decorrelation_bound(1, 5.5, 2.0, 3, 3, 0.1, 1.0, 1.0), Err(CorrelationError::Regime(_))));
        assert!(matches!(decorrelation_bound(1, 2.0, 2.0, 3, 3, 0.1, 1.0, 1.0), Err(CorrelationError::InvalidQuery(_))));
        let msg = decorrelation_bound(2, 11.0, 2.0, 3, 3, 0.1, 1.0, 1.0).unwrap_err().to_string();
        assert!(msg.contains("4p+2"), "{msg}");
    }

    #[test]
    fn envelope_decreasing_in_scale() {
        let mut prev = f64::INFINITY;
        for j in 2..20 {
            let b = decorrelation_bound(2, 3.0, 2.0, j, j, 0.2, 1.0, 1.0).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn persistence_radius_examples() {
        let d = persistence_radius(0.5, 10.0, 1, 1.0).unwrap();
        assert!((d - 0.5 * 2f64.powf(-0.25)).abs() < 1e-15);
        assert!((d - 0.42045).abs() < 1e-5);
        assert!((persistence_radius(0.5, 10.0, 1, 1e-9).unwrap() - 0.5).abs() < 1e-12);
        assert!((persistence_radius(0.5, 1e12, 1, 1.0).unwrap() - 0.5).abs() < 1e-9);
        assert!(matches!(persistence_radius(0.5, 6.0, 1, 1.0), Err(CorrelationError::Regime(_))));
        assert!(persistence_radius(1.5, 10.0, 1, 1.0).is_err());
    }

    #[test]
    fn decay_fit_exact_input() {
        let kappa = 3.25;
        let pts: Vec<(u32, f64)> = (3..9u32)
            .map(|j| {
                let jf = j as f64;
                (j, 2f64.powf(-(jf - jf.log2()) * kappa))
            })
            .collect();
        let fit = decay_exponent_fit(&pts, 2.0).unwrap();
        assert!((fit.exponent - kappa).abs() < 1e-9);
        assert!(fit.residual < 1e-9);
        let flat: Vec<(u32, f64)> = (3..9).map(|j| (j, 0.97)).collect();
        assert!(decay_exponent_fit(&flat, 2.0).unwrap().exponent.abs() < 1e-12);
        assert!(decay_exponent_fit(&pts[..3], 2.0).is_err());
        let mut zeros = pts.clone();
        zeros[1].1 = 0.0;
        assert!(decay_exponent_fit(&zeros, 2.0).is_err());
    }

    #[test]
    fn report_csv_and_bounds() {
        let spec = PowerSpectrum::alpha_regular(3.0, Modulation::unit(), 2.0).unwrap();
        let lattice = Lattice::square(&[3, 4], &[0.0, 0.5]);
        let report = CorrelationReport::compute(&mexican(2), &spec, &lattice, TOL, Some(EnvelopeConstants { c0: 1.0, cg: 1.0 })).unwrap();
        assert_eq!(report.entries.len(), 8);
        assert_eq!(report.regime, Some(Regime::Subcritical));
        assert!(report.bound_violations().is_empty());
        assert!(report.entries.iter().all(|e| e.corr.abs() <= 1.0 && e.bound.unwrap() >= 0.0));
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("j1,j2,theta,corr,bound,lmax\n"));
        assert_eq!(text.lines().count(), 9);
        let json = report.to_json();
        assert_eq!(json["entries"].as_array().unwrap().len(), 8);
    }

    #[test]
    fn report_without_bounds_in_supercritical_regime() {
        let spec = PowerSpectrum::power_law(8.0).unwrap();
        let lattice = Lattice::diagonal(&[4, 5, 6, 7], &[0.05]);
        let report = CorrelationReport::compute(&mexican(1), &spec, &lattice, TOL, Some(EnvelopeConstants { c0: 1.0, cg: 1.0 })).unwrap();
        assert_eq!(report.regime, Some(Regime::Supercritical));
        assert!(report.entries.iter().all(|e| e.bound.is_none()));
        assert!(report.fitted_exponent.unwrap().abs() < 0.1);
        assert_eq!(Regime::classify(6.0, 1), Regime::Critical);
    }
}
