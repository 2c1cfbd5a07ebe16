//! Angular power spectrum models `C_l` for isotropic fields.
//!
//! Three variants are supported: the polynomially decaying family
//! `C_l = l^{-alpha} g(l / B^j)` with a bounded smooth modulation `g`, the
//! super-polynomial family `C_l = H(l) exp(-l^p)`, and tabulated values read
//! from a two-column text file.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("C_l is undefined at l = 0; spectra start at l = 1")]
    ZeroDegree,
    #[error("degree {l} beyond the tabulated range (l_max = {l_max})")]
    Unsupported { l: usize, l_max: usize },
    #[error("C_{l} underflows double precision")]
    Underflow { l: usize },
    #[error("operation requires the alpha-regular variant")]
    InapplicableVariant,
    #[error("invalid spectrum parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Smooth bounded factor `g(u)`, `u = l / B^j`, applied identically at every
/// scale `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulation {
    Constant { value: f64 },
    /// `offset + amplitude * sin(frequency * u)`
    Sine { offset: f64, amplitude: f64, frequency: f64 },
}

impl Modulation {
    pub fn unit() -> Self {
        Modulation::Constant { value: 1.0 }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Modulation::Constant { value } => value,
            Modulation::Sine { offset, amplitude, frequency } => offset + amplitude * (frequency * u).sin(),
        }
    }

    /// Lower bound of `g` over the whole real line.
    fn global_min(&self) -> f64 {
        match *self {
            Modulation::Constant { value } => value,
            Modulation::Sine { offset, amplitude, .. } => offset - amplitude.abs(),
        }
    }

    fn global_max(&self) -> f64 {
        match *self {
            Modulation::Constant { value } => value,
            Modulation::Sine { offset, amplitude, .. } => offset + amplitude.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PowerSpectrum {
    AlphaRegular { alpha: f64, modulation: Modulation, base: f64 },
    /// `C_l = H(l) exp(-l^exponent)` with `H` given by ascending coefficients.
    Exponential { poly: Vec<f64>, exponent: f64 },
    /// `values[l - 1] = C_l` for `l = 1..=values.len()`.
    Tabulated { values: Vec<f64> },
}

impl PowerSpectrum {
    pub fn alpha_regular(alpha: f64, modulation: Modulation, base: f64) -> Result<Self, SpectrumError> {
        if !(alpha > 2.0) || !alpha.is_finite() {
            return Err(SpectrumError::InvalidParameter(format!(
                "alpha = {alpha} violates alpha > 2 (mean-square continuity)"
            )));
        }
        if !(base > 1.0) || !base.is_finite() {
            return Err(SpectrumError::InvalidParameter(format!("B = {base} violates B > 1")));
        }
        if !(modulation.global_min() > 0.0) {
            return Err(SpectrumError::InvalidParameter("modulation g must be bounded below by a positive constant".into()));
        }
        Ok(PowerSpectrum::AlphaRegular { alpha, modulation, base })
    }

    /// Pure power law `C_l = l^{-alpha}`.
    pub fn power_law(alpha: f64) -> Result<Self, SpectrumError> {
        Self::alpha_regular(alpha, Modulation::unit(), 2.0)
    }

    pub fn exponential(poly: Vec<f64>, exponent: f64) -> Result<Self, SpectrumError> {
        if poly.is_empty() || poly.iter().any(|c| !c.is_finite()) {
            return Err(SpectrumError::InvalidParameter("H needs at least one finite coefficient".into()));
        }
        if !(exponent > 0.0) || !exponent.is_finite() {
            return Err(SpectrumError::InvalidParameter(format!("exponent p = {exponent} violates p > 0")));
        }
        Ok(PowerSpectrum::Exponential { poly, exponent })
    }

    pub fn tabulated(values: Vec<f64>) -> Result<Self, SpectrumError> {
        if values.is_empty() {
            return Err(SpectrumError::InvalidParameter("empty table".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(SpectrumError::InvalidParameter(format!("C_{} = {v} is not positive", i + 1)));
        }
        Ok(PowerSpectrum::Tabulated { values })
    }

    /// Reads a two-column `l C_l` text table. Blank lines and `#` comments
    /// are skipped; degrees must run `1, 2, 3, ...` without gaps.
    pub fn load_tabulated(path: impl AsRef<Path>) -> Result<Self, SpectrumError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_tabulated(&text)
    }

    pub fn parse_tabulated(text: &str) -> Result<Self, SpectrumError> {
        let mut values = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(SpectrumError::Parse { line: line_no, message: format!("expected 2 columns, found {}", fields.len()) });
            }
            let l: usize = fields[0]
                .parse()
                .map_err(|_| SpectrumError::Parse { line: line_no, message: format!("bad degree {:?}", fields[0]) })?;
            let c: f64 = fields[1]
                .parse()
                .map_err(|_| SpectrumError::Parse { line: line_no, message: format!("bad value {:?}", fields[1]) })?;
            if l != values.len() + 1 {
                return Err(SpectrumError::Parse { line: line_no, message: format!("expected degree {}, found {l}", values.len() + 1) });
            }
            if !(c > 0.0) || !c.is_finite() {
                return Err(SpectrumError::Parse { line: line_no, message: format!("C_{l} = {c} is not positive") });
            }
            values.push(c);
        }
        Self::tabulated(values)
    }

    /// Largest supported degree, if bounded.
    pub fn l_max_hint(&self) -> Option<usize> {
        match self {
            PowerSpectrum::Tabulated { values } => Some(values.len()),
            _ => None,
        }
    }

    /// `ln C_l`, finite even where `C_l` itself underflows.
    pub fn ln_evaluate(&self, l: usize) -> Result<f64, SpectrumError> {
        if l == 0 {
            return Err(SpectrumError::ZeroDegree);
        }
        let lf = l as f64;
        match self {
            PowerSpectrum::AlphaRegular { alpha, modulation, base } => {
                Ok(-alpha * lf.ln() + modulation.eval(scale_argument(lf, *base)).ln())
            }
            PowerSpectrum::Exponential { poly, exponent } => {
                let h = poly.iter().rev().fold(0.0, |acc, c| acc * lf + c);
                if !(h > 0.0) {
                    return Err(SpectrumError::InvalidParameter(format!("H({l}) = {h} is not positive")));
                }
                Ok(h.ln() - lf.powf(*exponent))
            }
            PowerSpectrum::Tabulated { values } => values
                .get(l - 1)
                .map(|v| v.ln())
                .ok_or(SpectrumError::Unsupported { l, l_max: values.len() }),
        }
    }

    /// The model value `C_l > 0`.
    pub fn evaluate(&self, l: usize) -> Result<f64, SpectrumError> {
        let v = self.ln_evaluate(l)?.exp();
        if v.is_normal() {
            Ok(v)
        } else {
            Err(SpectrumError::Underflow { l })
        }
    }

    /// Partial sum `sum_{l=1}^{l_max} (2l + 1) C_l` and an estimate of the
    /// remaining tail. Tabulated spectra report the tail as zero past the
    /// table, since nothing is known there.
    pub fn summability_check(&self, l_max: usize) -> Result<(f64, f64), SpectrumError> {
        let top = match self.l_max_hint() {
            Some(n) => l_max.min(n),
            None => l_max,
        };
        let mut partial = 0.0;
        for l in 1..=top {
            partial += (2 * l + 1) as f64 * self.ln_evaluate(l)?.exp();
        }
        let tail = match self {
            PowerSpectrum::AlphaRegular { alpha, modulation, .. } => {
                // (2x + 1) x^{-alpha} sup g integrated over [l_max, inf)
                let x = l_max.max(1) as f64;
                modulation.global_max() * (2.0 * x.powf(2.0 - alpha) / (alpha - 2.0) + x.powf(1.0 - alpha) / (alpha - 1.0))
            }
            PowerSpectrum::Exponential { exponent, .. } => self.exponential_tail(l_max, *exponent)?,
            PowerSpectrum::Tabulated { .. } => 0.0,
        };
        Ok((partial, tail))
    }

    fn exponential_tail(&self, l_max: usize, exponent: f64) -> Result<f64, SpectrumError> {
        let term = |l: usize| -> Result<f64, SpectrumError> { Ok((2 * l + 1) as f64 * self.ln_evaluate(l)?.exp()) };
        let first = term(l_max + 1)?;
        let ratio = term(l_max + 2)? / first;
        if exponent >= 1.0 && ratio < 1.0 {
            // term ratios are nonincreasing here, so the geometric series bounds the tail
            return Ok(first / (1.0 - ratio));
        }
        let mut tail = 0.0;
        let mut l = l_max + 1;
        loop {
            let t = term(l)?;
            tail += t;
            if t <= f64::EPSILON * tail || t == 0.0 || l > l_max + 10_000_000 {
                break;
            }
            l += 1;
        }
        Ok(tail)
    }

    /// Checks the regularity condition on the modulation `g` over
    /// `u in [1/B, B]` and the positivity of `C_l` on the requested scales.
    pub fn validate_condition_a(&self, check: &ConditionCheck) -> Result<ConditionReport, SpectrumError> {
        let (alpha, modulation) = match self {
            PowerSpectrum::AlphaRegular { alpha, modulation, .. } => (*alpha, modulation),
            _ => return Err(SpectrumError::InapplicableVariant),
        };
        let b = check.base;
        if !(b > 1.0) {
            return Err(SpectrumError::InvalidParameter(format!("B = {b} violates B > 1")));
        }
        let n = CONDITION_GRID;
        let lo = 1.0 / b;
        let spacing = (b - lo) / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| lo + spacing * i as f64).collect();

        let (mut g_min, mut g_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &u in &grid {
            let g = modulation.eval(u);
            g_min = g_min.min(g);
            g_max = g_max.max(g);
        }
        let c0_estimate = g_max.max(1.0 / g_min);

        let mut derivative_sups = Vec::with_capacity(check.derivative_order);
        for r in 1..=check.derivative_order {
            let h = spacing * 4f64.powi(r as i32 - 1);
            let sup = grid
                .iter()
                .map(|&u| central_difference(|x| modulation.eval(x), u, r, h).abs())
                .fold(0.0, f64::max);
            derivative_sups.push(sup);
        }

        let c0_ok = check.c0_bound.is_none_or(|c0| g_max <= c0 && g_min >= 1.0 / c0);
        let derivatives_ok = derivative_sups
            .iter()
            .zip(check.derivative_bounds.iter())
            .all(|(est, bound)| est <= bound);

        let mut positivity_ok = true;
        for j in check.j_range.0..=check.j_range.1 {
            let lo_l = b.powi(j as i32 - 1).floor() as usize + 1;
            let hi_l = b.powi(j as i32 + 1).ceil() as usize;
            for l in lo_l.max(1)..hi_l {
                if !(modulation.eval(scale_argument(l as f64, b)) > 0.0) {
                    positivity_ok = false;
                }
            }
        }

        let regime = check.mexican_order.map(|p| {
            let critical = 4.0 * p as f64 + 2.0;
            RegimeConstraints {
                order: p,
                alpha_below_critical: alpha < critical,
                derivative_order_sufficient: check.derivative_order as f64 >= critical - alpha,
            }
        });

        Ok(ConditionReport {
            alpha,
            alpha_above_two: alpha > 2.0,
            g_min,
            g_max,
            c0_estimate,
            derivative_sups,
            positivity_ok,
            pass: alpha > 2.0 && c0_ok && derivatives_ok && positivity_ok,
            regime,
        })
    }
}

impl fmt::Display for PowerSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowerSpectrum::AlphaRegular { alpha, .. } => write!(f, "alpha-regular(alpha={alpha})"),
            PowerSpectrum::Exponential { exponent, .. } => write!(f, "exponential(p={exponent})"),
            PowerSpectrum::Tabulated { values } => write!(f, "tabulated(l_max={})", values.len()),
        }
    }
}

const CONDITION_GRID: usize = 1024;

/// `u = l / B^j` with `j` the nearest integer to `log_B l`, so that
/// `u in [B^{-1/2}, B^{1/2}]`.
fn scale_argument(l: f64, base: f64) -> f64 {
    let j = (l.ln() / base.ln()).round();
    l / base.powf(j)
}

/// `r`-th central difference quotient with step `h`.
fn central_difference(f: impl Fn(f64) -> f64, x: f64, r: usize, h: f64) -> f64 {
    let mut acc = 0.0;
    let mut binom = 1.0;
    for k in 0..=r {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let offset = (r as f64 / 2.0 - k as f64) * h;
        acc += sign * binom * f(x + offset);
        binom = binom * (r - k) as f64 / (k + 1) as f64;
    }
    acc / h.powi(r as i32)
}

/// Inputs to [`PowerSpectrum::validate_condition_a`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub base: f64,
    /// Inclusive scale range whose multipoles `B^{j-1} < l < B^{j+1}` must
    /// have `C_l > 0`.
    pub j_range: (u32, u32),
    pub derivative_order: usize,
    pub c0_bound: Option<f64>,
    /// Bounds `c_r`, `r = 1..`, compared against the estimated sups.
    pub derivative_bounds: Vec<f64>,
    /// Mexican needlet order, if the report should state the subcritical
    /// constraints `alpha < 4p + 2` and `M >= 4p + 2 - alpha`.
    pub mexican_order: Option<u32>,
}

impl ConditionCheck {
    pub fn new(base: f64, j_range: (u32, u32), derivative_order: usize) -> Self {
        Self {
            base,
            j_range,
            derivative_order,
            c0_bound: None,
            derivative_bounds: vec![f64::INFINITY; derivative_order],
            mexican_order: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeConstraints {
    pub order: u32,
    pub alpha_below_critical: bool,
    pub derivative_order_sufficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub alpha: f64,
    pub alpha_above_two: bool,
    pub g_min: f64,
    pub g_max: f64,
    pub c0_estimate: f64,
    /// Estimated `sup |g^{(r)}|` for `r = 1..=M`.
    pub derivative_sups: Vec<f64>,
    pub positivity_ok: bool,
    pub pass: bool,
    pub regime: Option<RegimeConstraints>,
}
