//! Isotropic Gaussian fields: harmonic coefficient sampling, synthesis,
//! needlet coefficients by harmonic filtering or by quadrature, and Monte
//! Carlo estimates of coefficient correlations.

use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cubature::CubatureGrid;
use crate::harmonics::{column_start, NormalizedLegendre, SphericalPoint};
use crate::kernels::{legendre_sum, KernelError, NeedletKernel};
use crate::spectra::{PowerSpectrum, SpectrumError};
use crate::synthesis::RingSynthesizer;

/// Largest imaginary part tolerated when synthesizing a real field.
pub const REALITY_TOLERANCE: f64 = 1e-10;
/// Upper limit of the default Monte Carlo band limit.
pub const MC_L_MAX_CAP: usize = 4096;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("coefficients reach l_max = {l_max} but scale j = {j} needs l >= {required}")]
    InsufficientDegree { l_max: usize, required: usize, j: u32 },
    #[error("grid exact to degree < {exact} but the quadrature needs degree < {required}")]
    Exactness { exact: usize, required: usize },
    #[error("synthesized field has imaginary residue {0:e}")]
    NonReal(f64),
    #[error("m = 0 coefficient at l = {0} must be real")]
    ComplexZonal(usize),
    #[error("index (l = {l}, m = {m}) outside l_max = {l_max}")]
    Index { l: usize, m: i64, l_max: usize },
    #[error("sample variance is degenerate")]
    DegenerateVariance,
    #[error("need at least {min} replicates, got {got}")]
    TooFewReplicates { min: usize, got: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("l_max must be at least 1")]
    ZeroDegree,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `a_lm` for `0 <= m <= l <= l_max`, stored `m`-major; negative orders
/// follow from `a_{l,-m} = (-1)^m conj(a_lm)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoefficients {
    l_max: usize,
    data: Vec<Complex64>,
}

impl HarmonicCoefficients {
    pub fn zeros(l_max: usize) -> Self {
        Self { l_max, data: vec![Complex64::new(0.0, 0.0); (l_max + 1) * (l_max + 2) / 2] }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    fn index(&self, l: usize, m: usize) -> usize {
        column_start(self.l_max, m) + (l - m)
    }

    pub fn get(&self, l: usize, m: i64) -> Result<Complex64, FieldError> {
        let am = m.unsigned_abs() as usize;
        if l > self.l_max || am > l {
            return Err(FieldError::Index { l, m, l_max: self.l_max });
        }
        let a = self.data[self.index(l, am)];
        Ok(if m >= 0 {
            a
        } else if am.is_multiple_of(2) {
            a.conj()
        } else {
            -a.conj()
        })
    }

    /// Sets `a_lm` for `m >= 0`; `a_{l,-m}` follows.
    pub fn set(&mut self, l: usize, m: usize, value: Complex64) -> Result<(), FieldError> {
        if l > self.l_max || m > l {
            return Err(FieldError::Index { l, m: m as i64, l_max: self.l_max });
        }
        if m == 0 && value.im != 0.0 {
            return Err(FieldError::ComplexZonal(l));
        }
        let i = self.index(l, m);
        self.data[i] = value;
        Ok(())
    }

    /// Multiplies every `a_lm` by `weight(l)`.
    pub fn filtered(&self, weight: impl Fn(usize) -> f64) -> Self {
        let mut out = self.clone();
        let w: Vec<f64> = (0..=self.l_max).map(weight).collect();
        let mut start = 0;
        for m in 0..=self.l_max {
            for (k, a) in out.data[start..start + self.l_max + 1 - m].iter_mut().enumerate() {
                *a *= w[m + k];
            }
            start += self.l_max + 1 - m;
        }
        out
    }

    /// Coefficients up to `l_max`, zero padded if it exceeds the current one.
    pub fn resized(&self, l_max: usize) -> Self {
        let mut out = Self::zeros(l_max);
        for m in 0..=l_max.min(self.l_max) {
            for l in m..=l_max.min(self.l_max) {
                let i = out.index(l, m);
                out.data[i] = self.data[self.index(l, m)];
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let l_max = self.l_max.max(other.l_max);
        let (mut a, b) = (self.resized(l_max), other.resized(l_max));
        for (x, y) in a.data.iter_mut().zip(&b.data) {
            *x += y;
        }
        a
    }

    pub(crate) fn raw(&self) -> &[Complex64] {
        &self.data
    }

    /// `sum_lm a_lm Y_lm` at `pt`, with the negative orders summed explicitly;
    /// returns the complex total.
    fn evaluate_complex(&self, pt: &SphericalPoint) -> Complex64 {
        let lam = NormalizedLegendre::from_theta(self.l_max, pt.theta());
        let mut total = Complex64::new(0.0, 0.0);
        for m in 0..=self.l_max {
            let col = lam.column(m);
            let start = column_start(self.l_max, m);
            let a = &self.data[start..start + col.len()];
            let mut s = Complex64::new(0.0, 0.0);
            for (c, v) in a.iter().zip(col) {
                s += c * v;
            }
            let e = Complex64::from_polar(1.0, m as f64 * pt.phi());
            total += s * e;
            if m > 0 {
                // a_{l,-m} Y_{l,-m} with both sign factors (-1)^m
                let mut neg = Complex64::new(0.0, 0.0);
                for (c, v) in a.iter().zip(col) {
                    neg += c.conj() * v;
                }
                total += neg * e.conj();
            }
        }
        total
    }
}

/// Draws `a_lm` with `E|a_lm|^2 = C_l`; `a_00 = 0`.
#[derive(Debug, Clone)]
pub struct AlmSampler {
    l_max: usize,
    sd: Vec<f64>,
}

impl AlmSampler {
    pub fn new(spectrum: &PowerSpectrum, l_max: usize) -> Result<Self, FieldError> {
        if l_max == 0 {
            return Err(FieldError::ZeroDegree);
        }
        let mut sd = vec![0.0; l_max + 1];
        for (l, s) in sd.iter_mut().enumerate().skip(1) {
            *s = (0.5 * spectrum.ln_evaluate(l)?).exp();
        }
        Ok(Self { l_max, sd })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Coefficients for replicate `stream` of `seed`. Draws run in ascending
    /// `l`, so lower degrees do not depend on `l_max`.
    pub fn sample(&self, seed: u64, stream: u64) -> HarmonicCoefficients {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut out = HarmonicCoefficients::zeros(self.l_max);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for l in 1..=self.l_max {
            let sd = self.sd[l];
            let z: f64 = rng.sample(StandardNormal);
            let i = out.index(l, 0);
            out.data[i] = Complex64::new(sd * z, 0.0);
            for m in 1..=l {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let i = out.index(l, m);
                out.data[i] = Complex64::new(re, im) * (sd * half);
            }
        }
        out
    }
}

pub fn sample_alm(spectrum: &PowerSpectrum, l_max: usize, seed: u64) -> Result<HarmonicCoefficients, FieldError> {
    Ok(AlmSampler::new(spectrum, l_max)?.sample(seed, 0))
}

/// `T(x) = sum_lm a_lm Y_lm(x)` at arbitrary points.
pub fn synthesize_field(coeffs: &HarmonicCoefficients, points: &[SphericalPoint]) -> Result<Vec<f64>, FieldError> {
    let values: Vec<Complex64> = points.par_iter().map(|p| coeffs.evaluate_complex(p)).collect();
    let residue = values.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    if residue > REALITY_TOLERANCE {
        return Err(FieldError::NonReal(residue));
    }
    Ok(values.into_iter().map(|v| v.re).collect())
}

/// Field values at every point of a product grid, in grid order.
pub fn synthesize_on_grid(coeffs: &HarmonicCoefficients, grid: &CubatureGrid) -> Vec<f64> {
    RingSynthesizer::new(grid, coeffs.l_max()).synthesize(coeffs.raw())
}

/// Needlet coefficients `beta_jk` at the points of `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub grid: Arc<CubatureGrid>,
    pub values: Vec<f64>,
    pub kernel: NeedletKernel,
    pub j: u32,
}

impl CoefficientField {
    pub fn new(grid: Arc<CubatureGrid>, values: Vec<f64>, kernel: NeedletKernel, j: u32) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values, kernel, j })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows `replicate,k,beta`.
    pub fn write_replicate_csv<W: Write>(&self, out: &mut W, replicate: usize) -> std::io::Result<()> {
        for (k, b) in self.values.iter().enumerate() {
            writeln!(out, "{replicate},{k},{b:.17e}")?;
        }
        Ok(())
    }
}

/// Header line for [`CoefficientField::write_replicate_csv`] rows.
pub const REPLICATE_CSV_HEADER: &str = "replicate,k,beta";

/// Harmonic-space needlet analysis at one scale on one grid, reusable
/// across replicates.
pub struct NeedletAnalyzer {
    kernel: NeedletKernel,
    j: u32,
    grid: Arc<CubatureGrid>,
    weights: Vec<f64>,
    sqrt_lambda: Vec<f64>,
    synth: RingSynthesizer,
}

impl NeedletAnalyzer {
    /// Analysis of fields band-limited to `l_max`, which must reach the
    /// kernel's truncation degree.
    pub fn new(kernel: NeedletKernel, grid: Arc<CubatureGrid>, j: u32, l_max: usize) -> Result<Self, FieldError> {
        let required = kernel.truncation_degree(j);
        if l_max < required {
            return Err(FieldError::InsufficientDegree { l_max, required, j });
        }
        Ok(Self::band_limited(kernel, grid, j, l_max))
    }

    /// Analysis of fields band-limited to `l_max` with no truncation check:
    /// degrees above `l_max` are absent from the field.
    pub fn band_limited(kernel: NeedletKernel, grid: Arc<CubatureGrid>, j: u32, l_max: usize) -> Self {
        let weights = (0..=l_max).map(|l| if l == 0 { 0.0 } else { kernel.weight(l, j) }).collect();
        let sqrt_lambda = grid.weights().iter().map(|w| w.sqrt()).collect();
        let synth = RingSynthesizer::new(&grid, l_max);
        Self { kernel, j, grid, weights, sqrt_lambda, synth }
    }

    pub fn l_max(&self) -> usize {
        self.synth.l_max()
    }

    pub fn grid(&self) -> &Arc<CubatureGrid> {
        &self.grid
    }

    pub fn analyze(&self, coeffs: &HarmonicCoefficients) -> CoefficientField {
        let coeffs = if coeffs.l_max() == self.l_max() { coeffs.clone() } else { coeffs.resized(self.l_max()) };
        let filtered = coeffs.filtered(|l| self.weights[l]);
        let mut values = self.synth.synthesize(filtered.raw());
        for (v, s) in values.iter_mut().zip(&self.sqrt_lambda) {
            *v *= s;
        }
        CoefficientField { grid: self.grid.clone(), values, kernel: self.kernel, j: self.j }
    }
}

/// `beta_jk = sqrt(lambda_jk) sum_l w_j(l) sum_m a_lm Y_lm(xi_jk)`; the
/// coefficients must reach the kernel's truncation degree at `j`.
pub fn needlet_coefficients_harmonic(
    coeffs: &HarmonicCoefficients,
    kernel: &NeedletKernel,
    grid: &Arc<CubatureGrid>,
    j: u32,
) -> Result<CoefficientField, FieldError> {
    Ok(NeedletAnalyzer::new(*kernel, grid.clone(), j, coeffs.l_max())?.analyze(coeffs))
}

/// `beta_jk = sqrt(lambda_jk) integral T(x) psi_j(<x, xi_jk>) dx` by cubature
/// on `fine`, for a field sampled on `fine` and band-limited to
/// `band_limit`.
pub fn needlet_coefficients_quadrature(
    values: &[f64],
    fine: &CubatureGrid,
    band_limit: usize,
    kernel: &NeedletKernel,
    j: u32,
    analysis: &Arc<CubatureGrid>,
) -> Result<CoefficientField, FieldError> {
    if values.len() != fine.len() {
        return Err(FieldError::LengthMismatch { expected: fine.len(), got: values.len() });
    }
    let l_t = kernel.truncation_degree(j);
    let required = (2 * l_t).max(l_t + band_limit) + 1;
    if fine.exact_degree() < required {
        return Err(FieldError::Exactness { exact: fine.exact_degree(), required });
    }
    let coef = kernel.profile_coefficients(j, l_t)?;
    let weighted: Vec<f64> = values.iter().zip(fine.weights()).map(|(v, w)| v * w).collect();
    let fine_vecs: Vec<[f64; 3]> = fine.points().iter().map(|p| p.to_unit_vector()).collect();
    let beta = analysis
        .points()
        .par_iter()
        .zip(analysis.weights())
        .map(|(xi, lambda)| {
            let c = xi.to_unit_vector();
            let sum: f64 = fine_vecs
                .iter()
                .zip(&weighted)
                .map(|(x, tw)| {
                    let dot = (x[0] * c[0] + x[1] * c[1] + x[2] * c[2]).clamp(-1.0, 1.0);
                    tw * legendre_sum(&coef, dot)
                })
                .sum();
            lambda.sqrt() * sum
        })
        .collect();
    Ok(CoefficientField { grid: analysis.clone(), values: beta, kernel: *kernel, j })
}

/// `4 B^j` capped at [`MC_L_MAX_CAP`].
pub fn default_mc_l_max(base: f64, j: u32) -> usize {
    ((4.0 * base.powi(j as i32)).ceil() as usize).clamp(1, MC_L_MAX_CAP)
}

/// Simulated needlet coefficients for a range of replicates.
pub struct FieldSimulator {
    sampler: AlmSampler,
    analyzer: NeedletAnalyzer,
}

impl FieldSimulator {
    /// Fields band-limited to `l_max`.
    pub fn new(spectrum: &PowerSpectrum, kernel: NeedletKernel, grid: Arc<CubatureGrid>, j: u32, l_max: usize) -> Result<Self, FieldError> {
        let sampler = AlmSampler::new(spectrum, l_max)?;
        let analyzer = NeedletAnalyzer::band_limited(kernel, grid, j, l_max);
        Ok(Self { sampler, analyzer })
    }

    pub fn analyzer(&self) -> &NeedletAnalyzer {
        &self.analyzer
    }

    pub fn replicate(&self, seed: u64, stream: u64) -> CoefficientField {
        self.analyzer.analyze(&self.sampler.sample(seed, stream))
    }

    /// `f(stream, field)` for every stream in `streams`, in parallel,
    /// returned in stream order.
    pub fn map<T, F>(&self, seed: u64, streams: Range<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, CoefficientField) -> T + Sync,
    {
        streams.into_par_iter().map(|s| f(s, self.replicate(seed, s))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub replicates: usize,
    pub seed: u64,
    pub kernel: NeedletKernel,
    pub spectrum: PowerSpectrum,
    pub j: u32,
    pub points: (SphericalPoint, SphericalPoint),
    /// Band limit of the simulated fields; defaults to [`default_mc_l_max`].
    pub l_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCorrelation {
    pub corr: f64,
    pub standard_error: f64,
    pub replicates: usize,
    pub l_max: usize,
}

pub const MIN_REPLICATES: usize = 100;

/// Replicate pairs `(beta at points.0, beta at points.1)`, without the
/// cubature factor, and the band limit used.
pub fn monte_carlo_pairs(cfg: &MonteCarloConfig) -> Result<(Vec<(f64, f64)>, usize), FieldError> {
    if cfg.replicates < MIN_REPLICATES {
        return Err(FieldError::TooFewReplicates { min: MIN_REPLICATES, got: cfg.replicates });
    }
    let l_max = cfg.l_max.unwrap_or_else(|| default_mc_l_max(cfg.kernel.base(), cfg.j));
    let sampler = AlmSampler::new(&cfg.spectrum, l_max)?;
    let weights: Vec<f64> = (0..=l_max).map(|l| if l == 0 { 0.0 } else { cfg.kernel.weight(l, cfg.j) }).collect();
    let probes = [PointProbe::new(&cfg.points.0, l_max), PointProbe::new(&cfg.points.1, l_max)];
    let pairs = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let a = sampler.sample(cfg.seed, r);
            (probes[0].filtered_value(&a, &weights), probes[1].filtered_value(&a, &weights))
        })
        .collect();
    Ok((pairs, l_max))
}

/// Pearson correlation of `R` replicate pairs `(beta at points.0, beta at
/// points.1)` with a jackknife standard error.
pub fn monte_carlo_correlation(cfg: &MonteCarloConfig) -> Result<MonteCarloCorrelation, FieldError> {
    let (pairs, l_max) = monte_carlo_pairs(cfg)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (corr, standard_error) = pearson_jackknife(&xs, &ys)?;
    Ok(MonteCarloCorrelation { corr, standard_error, replicates: cfg.replicates, l_max })
}

/// Precomputed `lambda_lm` and `e^{i m phi}` at one point.
struct PointProbe {
    lam: NormalizedLegendre,
    phase: Vec<Complex64>,
}

impl PointProbe {
    fn new(pt: &SphericalPoint, l_max: usize) -> Self {
        let lam = NormalizedLegendre::from_theta(l_max, pt.theta());
        let phase = (0..=l_max).map(|m| Complex64::from_polar(1.0, m as f64 * pt.phi())).collect();
        Self { lam, phase }
    }

    /// `sum_l w(l) sum_m a_lm Y_lm` for a real field.
    fn filtered_value(&self, a: &HarmonicCoefficients, w: &[f64]) -> f64 {
        let l_max = self.lam.l_max();
        let mut total = 0.0;
        for m in 0..=l_max {
            let col = self.lam.column(m);
            let start = column_start(l_max, m);
            let mut s = Complex64::new(0.0, 0.0);
            for (k, (c, v)) in a.raw()[start..start + col.len()].iter().zip(col).enumerate() {
                s += c * (v * w[m + k]);
            }
            let part = (s * self.phase[m]).re;
            total += if m == 0 { part } else { 2.0 * part };
        }
        total
    }
}

/// Pearson correlation and its delete-one jackknife standard error.
pub fn pearson_jackknife(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), FieldError> {
    if xs.len() != ys.len() {
        return Err(FieldError::LengthMismatch { expected: xs.len(), got: ys.len() });
    }
    let n = xs.len();
    if n < 3 {
        return Err(FieldError::TooFewReplicates { min: 3, got: n });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let dx: Vec<f64> = xs.iter().map(|x| x - mx).collect();
    let dy: Vec<f64> = ys.iter().map(|y| y - my).collect();
    let sx: f64 = dx.iter().sum();
    let sy: f64 = dy.iter().sum();
    let sxx: f64 = dx.iter().map(|d| d * d).sum();
    let syy: f64 = dy.iter().map(|d| d * d).sum();
    let sxy: f64 = dx.iter().zip(&dy).map(|(a, b)| a * b).sum();
    let scale = xs.iter().chain(ys).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = nf * (scale * 1e-150).powi(2);
    if !(sxx > floor && syy > floor) || !sxx.is_finite() || !syy.is_finite() {
        return Err(FieldError::DegenerateVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let m = nf - 1.0;
    let loo: Vec<f64> = (0..n)
        .map(|i| {
            let (sx_i, sy_i) = (sx - dx[i], sy - dy[i]);
            let cxx = sxx - dx[i] * dx[i] - sx_i * sx_i / m;
            let cyy = syy - dy[i] * dy[i] - sy_i * sy_i / m;
            let cxy = sxy - dx[i] * dy[i] - sx_i * sy_i / m;
            if cxx > 0.0 && cyy > 0.0 {
                (cxy / (cxx.sqrt() * cyy.sqrt())).clamp(-1.0, 1.0)
            } else {
                r
            }
        })
        .collect();
    let mean = loo.iter().sum::<f64>() / nf;
    let var = loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (nf - 1.0) / nf;
    Ok((r, var.sqrt()))
}
