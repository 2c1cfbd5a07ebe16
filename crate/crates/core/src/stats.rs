//! Hermite-polynomial statistics of normalized needlet coefficients, the
//! `Gamma_j` estimator, second-moment matrices of the statistics and
//! normality diagnostics for whitened replicates.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{needlet_variance, CorrelationError};
use crate::cubature::{CubatureError, CubatureGrid};
use crate::field::{default_mc_l_max, CoefficientField, FieldError, FieldSimulator};
use crate::kernels::NeedletKernel;
use crate::spectra::PowerSpectrum;

/// Eigenvalues below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("variance at point {index} is not positive ({value})")]
    NonpositiveVariance { index: usize, value: f64 },
    #[error("cubature weight at point {index} is not positive ({value})")]
    NonpositiveWeight { index: usize, value: f64 },
    #[error("invalid statistic weights: {0}")]
    InvalidWeights(String),
    #[error("need at least {min} replicates, got {got}")]
    InsufficientReplicates { min: usize, got: usize },
    #[error("second-moment matrix is singular (smallest eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e})")]
    SingularOmega { min_eigenvalue: f64, max_eigenvalue: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty input")]
    Empty,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Cubature(#[from] CubatureError),
}

/// Probabilists' Hermite polynomial `H_q(x)`.
pub fn hermite(q: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if q == 0 {
        return prev;
    }
    for k in 1..q {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_1(x) ..= H_q_max(x)`.
fn hermite_row(q_max: usize, x: f64, out: &mut [f64]) {
    let (mut prev, mut cur) = (1.0, x);
    for (k, slot) in out.iter_mut().enumerate().take(q_max) {
        *slot = cur;
        let next = x * cur - (k + 1) as f64 * prev;
        prev = cur;
        cur = next;
    }
}

/// Weights `w_uq`, row `u` holding orders `q = 1..=Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticConfig {
    weights: Vec<Vec<f64>>,
}

impl StatisticConfig {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        let q = weights.first().map(Vec::len).ok_or_else(|| StatsError::InvalidWeights("no statistics".into()))?;
        if q == 0 {
            return Err(StatsError::InvalidWeights("Q must be at least 1".into()));
        }
        for (u, row) in weights.iter().enumerate() {
            if row.len() != q {
                return Err(StatsError::InvalidWeights(format!("row {u} has {} orders, expected {q}", row.len())));
            }
            if row.iter().any(|w| !w.is_finite()) {
                return Err(StatsError::InvalidWeights(format!("row {u} has a non-finite weight")));
            }
            if row.iter().all(|w| *w == 0.0) {
                return Err(StatsError::InvalidWeights(format!("row {u} is all zero")));
            }
        }
        Ok(Self { weights })
    }

    /// One statistic per listed order, each selecting only `H_q`.
    pub fn single_orders(orders: &[usize]) -> Result<Self, StatsError> {
        let q = orders.iter().copied().max().unwrap_or(0);
        if orders.contains(&0) {
            return Err(StatsError::InvalidWeights("order 0 is constant".into()));
        }
        Self::new(
            orders
                .iter()
                .map(|&o| (1..=q).map(|k| if k == o { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn statistics(&self) -> usize {
        self.weights.len()
    }

    pub fn max_order(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

/// `beta_k / sqrt(variance_k)`.
pub fn normalize_coefficients(field: &CoefficientField, variances: &[f64]) -> Result<Vec<f64>, StatsError> {
    if variances.len() != field.len() {
        return Err(StatsError::LengthMismatch { expected: field.len(), got: variances.len() });
    }
    field
        .values
        .iter()
        .zip(variances)
        .enumerate()
        .map(|(index, (b, v))| {
            if *v > 0.0 {
                Ok(b / v.sqrt())
            } else {
                Err(StatsError::NonpositiveVariance { index, value: *v })
            }
        })
        .collect()
}

/// Analytic `E beta_jk^2 = lambda_jk Gamma_j` at every grid point.
pub fn analytic_variances(
    kernel: &NeedletKernel,
    spectrum: &PowerSpectrum,
    grid: &CubatureGrid,
    j: u32,
    tolerance: f64,
) -> Result<Vec<f64>, StatsError> {
    let gamma = needlet_variance(kernel, spectrum, j, tolerance)?.value;
    Ok(grid.weights().iter().map(|w| w * gamma).collect())
}

/// `h_u = N^{-1/2} sum_k sum_q w_uq H_q(x_k)`.
pub fn h_statistic(config: &StatisticConfig, normalized: &[f64]) -> Result<Vec<f64>, StatsError> {
    if normalized.is_empty() {
        return Err(StatsError::Empty);
    }
    let q = config.max_order();
    let mut sums = vec![0.0; q];
    let mut row = vec![0.0; q];
    for &x in normalized {
        hermite_row(q, x, &mut row);
        for (s, h) in sums.iter_mut().zip(&row) {
            *s += h;
        }
    }
    let scale = (normalized.len() as f64).sqrt().recip();
    Ok(config.weights.iter().map(|w| scale * w.iter().zip(&sums).map(|(a, b)| a * b).sum::<f64>()).collect())
}

/// `(1/N) sum_k beta_k^2 / lambda_k`.
pub fn gamma_estimator(field: &CoefficientField) -> Result<f64, StatsError> {
    if field.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut acc = 0.0;
    for (index, (b, l)) in field.values.iter().zip(field.grid.weights()).enumerate() {
        if !(*l > 0.0) {
            return Err(StatsError::NonpositiveWeight { index, value: *l });
        }
        acc += b * b / l;
    }
    Ok(acc / field.len() as f64)
}

/// `(N^{-1/2} sum x^3, N^{-1/2} sum (x^4 - 3))`.
pub fn skewness_kurtosis_stats(normalized: &[f64]) -> Result<(f64, f64), StatsError> {
    if normalized.is_empty() {
        return Err(StatsError::Empty);
    }
    let scale = (normalized.len() as f64).sqrt().recip();
    let s3: f64 = normalized.iter().map(|x| x * x * x).sum();
    let s4: f64 = normalized.iter().map(|x| x.powi(4) - 3.0).sum();
    Ok((scale * s3, scale * s4))
}

/// Non-centred second-moment matrix of replicated statistic vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaEstimate {
    pub matrix: Vec<Vec<f64>>,
    pub replicates: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl OmegaEstimate {
    fn dmatrix(&self) -> DMatrix<f64> {
        let u = self.matrix.len();
        DMatrix::from_fn(u, u, |r, c| self.matrix[r][c])
    }

    /// Full rank: smallest eigenvalue above [`RANK_TOLERANCE`] times the
    /// largest.
    pub fn full_rank(&self) -> bool {
        self.min_eigenvalue > RANK_TOLERANCE * self.max_eigenvalue.abs()
    }

    /// `Omega^{-1/2}`, row-major.
    pub fn inverse_sqrt(&self) -> Result<Vec<Vec<f64>>, StatsError> {
        if !self.full_rank() {
            return Err(StatsError::SingularOmega { min_eigenvalue: self.min_eigenvalue, max_eigenvalue: self.max_eigenvalue });
        }
        let eig = SymmetricEigen::new(self.dmatrix());
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.sqrt().recip()));
        let m = &eig.eigenvectors * d * eig.eigenvectors.transpose();
        Ok((0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect())
    }

    /// `Omega^{-1/2} h` for each vector.
    pub fn whiten(&self, hs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, StatsError> {
        let w = self.inverse_sqrt()?;
        hs.iter()
            .map(|h| {
                if h.len() != w.len() {
                    return Err(StatsError::LengthMismatch { expected: w.len(), got: h.len() });
                }
                Ok(w.iter().map(|row| row.iter().zip(h).map(|(a, b)| a * b).sum()).collect())
            })
            .collect()
    }
}

pub fn estimate_omega(hs: &[Vec<f64>]) -> Result<OmegaEstimate, StatsError> {
    let u = hs.first().map(Vec::len).ok_or(StatsError::InsufficientReplicates { min: 2, got: 0 })?;
    if hs.len() < u + 1 {
        return Err(StatsError::InsufficientReplicates { min: u + 1, got: hs.len() });
    }
    let mut m = DMatrix::<f64>::zeros(u, u);
    for h in hs {
        if h.len() != u {
            return Err(StatsError::LengthMismatch { expected: u, got: h.len() });
        }
        for r in 0..u {
            for c in r..u {
                m[(r, c)] += h[r] * h[c];
            }
        }
    }
    let n = hs.len() as f64;
    for r in 0..u {
        for c in r..u {
            m[(r, c)] /= n;
            m[(c, r)] = m[(r, c)];
        }
    }
    let eig = SymmetricEigen::new(m.clone());
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(OmegaEstimate {
        matrix: (0..u).map(|r| (0..u).map(|c| m[(r, c)]).collect()).collect(),
        replicates: hs.len(),
        min_eigenvalue,
        max_eigenvalue,
    })
}

/// Acceptance limits for [`clt_diagnostic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltThresholds {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub ks: f64,
}

impl CltThresholds {
    /// Three standard errors of each moment under `N(0, 1)` with `r`
    /// replicates, and the asymptotic 1% Kolmogorov-Smirnov value `1.63/sqrt(r)`.
    pub fn for_replicates(r: usize) -> Self {
        let n = r as f64;
        Self {
            mean: 3.0 / n.sqrt(),
            variance: 3.0 * (2.0 / (n - 1.0)).sqrt(),
            skewness: 3.0 * (6.0 / n).sqrt(),
            kurtosis: 3.0 * (24.0 / n).sqrt(),
            ks: 1.63 / n.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiagnostic {
    pub u: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks: f64,
    pub mean_pass: bool,
    pub variance_pass: bool,
    pub skewness_pass: bool,
    pub kurtosis_pass: bool,
    pub ks_pass: bool,
}

impl ComponentDiagnostic {
    pub fn pass(&self) -> bool {
        self.mean_pass && self.variance_pass && self.skewness_pass && self.kurtosis_pass && self.ks_pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub replicates: usize,
    pub thresholds: CltThresholds,
    pub components: Vec<ComponentDiagnostic>,
    pub pass: bool,
}

impl CltReport {
    /// CSV with header `u,mean,var,skew,kurt,ks`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "u,mean,var,skew,kurt,ks")?;
        for c in &self.components {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                c.u, c.mean, c.variance, c.skewness, c.excess_kurtosis, c.ks
            )?;
        }
        Ok(())
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Kolmogorov-Smirnov distance of a sample to `N(0, 1)`.
pub fn ks_distance(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = normal_cdf(x);
        d.max(((i + 1) as f64 / n - f).max(f - i as f64 / n))
    })
}

/// Moments and KS distance of each component of whitened statistic vectors.
pub fn clt_diagnostic(samples: &[Vec<f64>], thresholds: CltThresholds) -> Result<CltReport, StatsError> {
    let u = samples.first().map(Vec::len).ok_or(StatsError::Empty)?;
    if samples.len() < 2 {
        return Err(StatsError::InsufficientReplicates { min: 2, got: samples.len() });
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != u) {
        return Err(StatsError::LengthMismatch { expected: u, got: bad.len() });
    }
    let n = samples.len() as f64;
    let components: Vec<ComponentDiagnostic> = (0..u)
        .map(|c| {
            let xs: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
            let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
            let variance = m2 * n / (n - 1.0);
            let skewness = m3 / m2.powf(1.5);
            let excess_kurtosis = m4 / (m2 * m2) - 3.0;
            let ks = ks_distance(&xs);
            ComponentDiagnostic {
                u: c,
                mean,
                variance,
                skewness,
                excess_kurtosis,
                ks,
                mean_pass: mean.abs() < thresholds.mean,
                variance_pass: (variance - 1.0).abs() < thresholds.variance,
                skewness_pass: skewness.abs() < thresholds.skewness,
                kurtosis_pass: excess_kurtosis.abs() < thresholds.kurtosis,
                ks_pass: ks < thresholds.ks,
            }
        })
        .collect();
    let pass = components.iter().all(ComponentDiagnostic::pass);
    Ok(CltReport { replicates: samples.len(), thresholds, components, pass })
}

/// Simulation settings shared by the replicate-based experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub kernel: NeedletKernel,
    pub spectrum: PowerSpectrum,
    pub j: u32,
    pub seed: u64,
    /// Band limit of the simulated fields; defaults to `4 B^j` (capped).
    pub l_max: Option<usize>,
    /// Relative tolerance of the analytic variance series.
    pub tolerance: f64,
}

impl SimulationSettings {
    fn simulator(&self) -> Result<(FieldSimulator, Arc<CubatureGrid>), StatsError> {
        let grid = Arc::new(CubatureGrid::build_default(self.kernel.base(), self.j)?);
        let l_max = self.l_max.unwrap_or_else(|| default_mc_l_max(self.kernel.base(), self.j));
        Ok((FieldSimulator::new(&self.spectrum, self.kernel, grid.clone(), self.j, l_max)?, grid))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltOutcome {
    pub omega: OmegaEstimate,
    pub report: CltReport,
    pub points: usize,
    pub l_max: usize,
}

/// Statistic vectors from replicates `streams`, whitened with `Omega`
/// estimated on a disjoint block of `omega_replicates` streams placed
/// before them.
pub fn clt_experiment(
    settings: &SimulationSettings,
    config: &StatisticConfig,
    replicates: usize,
    omega_replicates: usize,
    thresholds: CltThresholds,
) -> Result<CltOutcome, StatsError> {
    let (sim, grid) = settings.simulator()?;
    let var = analytic_variances(&settings.kernel, &settings.spectrum, &grid, settings.j, settings.tolerance)?;
    let h_of = |_s: u64, f: CoefficientField| -> Result<Vec<f64>, StatsError> {
        h_statistic(config, &normalize_coefficients(&f, &var)?)
    };
    let omega_block = omega_replicates as u64;
    let omega_h = sim.map(settings.seed, 0..omega_block, h_of).into_iter().collect::<Result<Vec<_>, _>>()?;
    let omega = estimate_omega(&omega_h)?;
    let test_h = sim
        .map(settings.seed, omega_block..omega_block + replicates as u64, h_of)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let white = omega.whiten(&test_h)?;
    let report = clt_diagnostic(&white, thresholds)?;
    Ok(CltOutcome { omega, report, points: grid.len(), l_max: sim.analyzer().l_max() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaCheck {
    pub mean: f64,
    pub standard_error: f64,
    pub analytic: f64,
    pub replicates: usize,
}

impl GammaCheck {
    pub fn within(&self, k: f64) -> bool {
        (self.mean - self.analytic).abs() <= k * self.standard_error
    }
}

/// Monte Carlo mean of `Gamma_hat_j` against `sum_l w_j(l)^2 (2l+1) C_l / (4 pi)`.
pub fn gamma_monte_carlo(settings: &SimulationSettings, replicates: usize) -> Result<GammaCheck, StatsError> {
    if replicates < 2 {
        return Err(StatsError::InsufficientReplicates { min: 2, got: replicates });
    }
    let (sim, _) = settings.simulator()?;
    let gammas = sim
        .map(settings.seed, 0..replicates as u64, |_, f| gamma_estimator(&f))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let n = gammas.len() as f64;
    let mean = gammas.iter().sum::<f64>() / n;
    let var = gammas.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let analytic = needlet_variance(&settings.kernel, &settings.spectrum, settings.j, settings.tolerance)?.value;
    Ok(GammaCheck { mean, standard_error: (var / n).sqrt(), analytic, replicates })
}
