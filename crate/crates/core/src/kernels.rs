//! Frequency windows of NPW and Mexican needlets, and the stereographic
//! Spherical Mexican Hat Wavelet (SMHW) profile.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mexican weights are summed until `s = l(l+1)/B^{2j}` exceeds `p + 40`.
pub const MEXICAN_TRUNCATION_MARGIN: f64 = 40.0;

/// Relative tail allowed when a needlet profile series is truncated.
pub const PROFILE_TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("B = {0} violates B > 1")]
    InvalidBase(f64),
    #[error("Mexican needlet order must be a positive integer")]
    InvalidOrder,
    #[error("operation needs a {expected} kernel")]
    KindMismatch { expected: &'static str },
    #[error("angle {0} outside the admissible range")]
    InvalidAngle(f64),
    #[error("series tail bound {bound:e} exceeds tolerance {tolerance:e}")]
    Truncation { bound: f64, tolerance: f64 },
    #[error("profile and kernel disagree on (B, j)")]
    ScaleMismatch,
    #[error("empty angle grid")]
    EmptyGrid,
}

/// Smooth cutoff `phi` with `phi = 1` on `[0, 1/B]`, `phi = 0` on `[1, inf)`,
/// bridged by the `exp(-1/x)` partition construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpFunction {
    base: f64,
}

fn mollifier(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

impl BumpFunction {
    pub fn new(base: f64) -> Result<Self, KernelError> {
        if !(base > 1.0) || !base.is_finite() {
            return Err(KernelError::InvalidBase(base));
        }
        Ok(Self { base })
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let xi = xi.abs();
        let inner = 1.0 / self.base;
        if xi <= inner {
            return 1.0;
        }
        if xi >= 1.0 {
            return 0.0;
        }
        // u runs from 1 at xi = 1/B down to 0 at xi = 1
        let u = (1.0 - xi) / (1.0 - inner);
        let a = mollifier(u);
        a / (a + mollifier(1.0 - u))
    }
}

/// A needlet frequency window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeedletKernel {
    Npw { bump: BumpFunction },
    Mexican { base: f64, order: u32 },
}

impl NeedletKernel {
    pub fn npw(base: f64) -> Result<Self, KernelError> {
        Ok(NeedletKernel::Npw { bump: BumpFunction::new(base)? })
    }

    pub fn mexican(base: f64, order: u32) -> Result<Self, KernelError> {
        if !(base > 1.0) || !base.is_finite() {
            return Err(KernelError::InvalidBase(base));
        }
        if order == 0 {
            return Err(KernelError::InvalidOrder);
        }
        Ok(NeedletKernel::Mexican { base, order })
    }

    pub fn base(&self) -> f64 {
        match self {
            NeedletKernel::Npw { bump } => bump.base(),
            NeedletKernel::Mexican { base, .. } => *base,
        }
    }

    pub fn order(&self) -> Option<u32> {
        match self {
            NeedletKernel::Npw { .. } => None,
            NeedletKernel::Mexican { order, .. } => Some(*order),
        }
    }

    pub fn name(&self) -> String {
        match self {
            NeedletKernel::Npw { bump } => format!("npw(B={})", bump.base()),
            NeedletKernel::Mexican { base, order } => format!("mexican(B={base},p={order})"),
        }
    }

    /// NPW window `b(xi) = sqrt(phi(xi / B) - phi(xi))`.
    pub fn npw_window(&self, xi: f64) -> Result<f64, KernelError> {
        match self {
            NeedletKernel::Npw { bump } => Ok(npw_b(bump, xi)),
            _ => Err(KernelError::KindMismatch { expected: "NPW" }),
        }
    }

    /// Mexican weight `s^p e^{-s}`, `s = l(l+1)/B^{2j}`.
    pub fn mexican_weight(&self, l: usize, j: u32) -> Result<f64, KernelError> {
        match self {
            NeedletKernel::Mexican { base, order } => Ok(mexican_profile(mexican_argument(*base, l, j), *order)),
            _ => Err(KernelError::KindMismatch { expected: "Mexican" }),
        }
    }

    /// Window value at multipole `l` and scale `j`, whichever the kind.
    pub fn weight(&self, l: usize, j: u32) -> f64 {
        match self {
            NeedletKernel::Npw { bump } => npw_b(bump, l as f64 / bump.base().powi(j as i32)),
            NeedletKernel::Mexican { base, order } => mexican_profile(mexican_argument(*base, l, j), *order),
        }
    }

    /// `ln weight(l, j)`, or `None` where the weight vanishes. Mexican weights
    /// stay representable here long after `weight` underflows.
    pub fn ln_weight(&self, l: usize, j: u32) -> Option<f64> {
        match self {
            NeedletKernel::Npw { .. } => {
                let w = self.weight(l, j);
                (w > 0.0).then(|| w.ln())
            }
            NeedletKernel::Mexican { base, order } => {
                if l == 0 {
                    return None;
                }
                let s = mexican_argument(*base, l, j);
                Some(*order as f64 * s.ln() - s)
            }
        }
    }

    /// Degree beyond which the window is zero (NPW) or negligible (Mexican,
    /// first `l` with `s > p + 40`).
    pub fn truncation_degree(&self, j: u32) -> usize {
        match self {
            NeedletKernel::Npw { bump } => {
                let top = bump.base().powi(j as i32 + 1);
                (top.ceil() as usize).saturating_sub(1).max(1)
            }
            NeedletKernel::Mexican { base, order } => {
                let target = (*order as f64 + MEXICAN_TRUNCATION_MARGIN) * base.powi(2 * j as i32);
                let mut l = ((target.sqrt() - 0.5).floor().max(1.0)) as usize;
                while ((l * (l + 1)) as f64) <= target {
                    l += 1;
                }
                while l > 1 && (((l - 1) * l) as f64) > target {
                    l -= 1;
                }
                l
            }
        }
    }

    /// Smallest degree past which the product window `w_{j1}(l) w_{j2}(l)` no
    /// longer increases.
    pub fn peak_degree(&self, j1: u32, j2: u32) -> usize {
        match self {
            NeedletKernel::Npw { bump } => bump.base().powi(j1.min(j2) as i32 + 1).ceil() as usize,
            NeedletKernel::Mexican { base, order } => {
                // maximise (l(l+1))^{2p} exp(-l(l+1) c)
                let c = base.powi(-2 * j1 as i32) + base.powi(-2 * j2 as i32);
                let ll = 2.0 * *order as f64 / c;
                ((ll + 0.25).sqrt() - 0.5).ceil().max(1.0) as usize
            }
        }
    }

    /// The lambda-free needlet profile `sum_l w_j(l) (2l+1)/(4 pi) P_l(cos theta)`
    /// evaluated for every entry of `cos_angles`.
    pub fn profile_series(&self, j: u32, cos_angles: &[f64]) -> Result<Vec<f64>, KernelError> {
        let l_max = self.truncation_degree(j);
        let coef = self.profile_coefficients(j, l_max)?;
        Ok(cos_angles.iter().map(|&x| legendre_sum(&coef, x.clamp(-1.0, 1.0))).collect())
    }

    /// `w_j(l) (2l+1)/(4 pi)` for `l = 0..=l_max`, after checking that the
    /// discarded tail is below [`PROFILE_TAIL_TOLERANCE`] relative to the
    /// profile's value at the centre.
    pub(crate) fn profile_coefficients(&self, j: u32, l_max: usize) -> Result<Vec<f64>, KernelError> {
        let coef: Vec<f64> = (0..=l_max)
            .map(|l| if l == 0 { 0.0 } else { self.weight(l, j) * (2 * l + 1) as f64 / (4.0 * PI) })
            .collect();
        let centre: f64 = coef.iter().sum();
        let bound = self.profile_tail_bound(j, l_max);
        if bound > PROFILE_TAIL_TOLERANCE * centre.abs() {
            return Err(KernelError::Truncation { bound, tolerance: PROFILE_TAIL_TOLERANCE * centre.abs() });
        }
        Ok(coef)
    }

    /// Upper bound on `sum_{l > l_max} w_j(l) (2l+1)/(4 pi)`.
    pub(crate) fn profile_tail_bound(&self, j: u32, l_max: usize) -> f64 {
        let term = |l: usize| self.weight(l, j) * (2 * l + 1) as f64 / (4.0 * PI);
        match self {
            NeedletKernel::Npw { .. } => (l_max + 1..=l_max + 1 + self.truncation_degree(j)).map(term).sum(),
            NeedletKernel::Mexican { .. } => {
                if l_max < self.peak_degree(j, j) {
                    return f64::INFINITY;
                }
                let first = term(l_max + 1);
                let q = term(l_max + 2) / first;
                if first == 0.0 {
                    0.0
                } else if q < 1.0 {
                    first / (1.0 - q)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

fn npw_b(bump: &BumpFunction, xi: f64) -> f64 {
    (bump.eval(xi / bump.base()) - bump.eval(xi)).max(0.0).sqrt()
}

/// `s = l(l+1) / B^{2j}`.
pub fn mexican_argument(base: f64, l: usize, j: u32) -> f64 {
    (l as f64) * (l as f64 + 1.0) / base.powi(2 * j as i32)
}

/// `f(s) = s^p e^{-s}`.
pub fn mexican_profile(s: f64, order: u32) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    (order as f64 * s.ln() - s).exp()
}

/// `sum_l coef[l] P_l(x)` with the Legendre recurrence run alongside.
pub(crate) fn legendre_sum(coef: &[f64], x: f64) -> f64 {
    if coef.is_empty() {
        return 0.0;
    }
    let mut acc = coef[0];
    if coef.len() == 1 {
        return acc;
    }
    let (mut prev, mut cur) = (1.0, x);
    acc += coef[1] * cur;
    for (n, c) in coef.iter().enumerate().skip(2) {
        let nf = (n - 1) as f64;
        let next = ((2.0 * nf + 1.0) * x * cur - nf * prev) / (nf + 1.0);
        prev = cur;
        cur = next;
        acc += c * cur;
    }
    acc
}

/// Stereographic SMHW profile at scale `t = B^{-j}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmhwProfile {
    base: f64,
    j: u32,
}

impl SmhwProfile {
    pub fn new(base: f64, j: u32) -> Result<Self, KernelError> {
        if !(base > 1.0) || !base.is_finite() {
            return Err(KernelError::InvalidBase(base));
        }
        Ok(Self { base, j })
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn j(&self) -> u32 {
        self.j
    }

    pub fn scale(&self) -> f64 {
        self.base.powi(-(self.j as i32))
    }

    /// Value at the centre, `y = 0`.
    pub fn peak(&self) -> f64 {
        2.0 * self.normalization()
    }

    fn normalization(&self) -> f64 {
        let t = self.scale();
        1.0 / ((2.0 * PI).sqrt() * 2f64.sqrt() * t * (1.0 + t * t + t.powi(4)).sqrt())
    }

    /// `Psi(theta; B^{-j})` with `y = 2 tan(theta / 2)`.
    pub fn eval(&self, theta: f64) -> Result<f64, KernelError> {
        if !(0.0..PI).contains(&theta) {
            return Err(KernelError::InvalidAngle(theta));
        }
        let t = self.scale();
        let y = 2.0 * (theta / 2.0).tan();
        let y2 = y * y;
        let stretch = 1.0 + y2 / 4.0;
        Ok(self.normalization() * stretch * stretch * (2.0 - y2 / (2.0 * t * t)) * (-y2 / (4.0 * t * t)).exp())
    }

    /// Angle where the profile changes sign, `y = 2t`.
    pub fn zero_crossing(&self) -> f64 {
        2.0 * self.scale().atan()
    }

    /// Uniform grid of `n` angles over `[0, 8 B^{-j}]`.
    pub fn default_fit_grid(&self, n: usize) -> Vec<f64> {
        let top = (8.0 * self.scale()).min(PI * 0.999);
        if n <= 1 {
            return vec![0.0];
        }
        (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect()
    }
}

/// Least-squares comparison of the SMHW profile with a Mexican needlet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmhwGap {
    pub k_fit: f64,
    pub thetas: Vec<f64>,
    pub smhw: Vec<f64>,
    pub needlet: Vec<f64>,
    /// `|Psi(theta) - K psi(theta)|`
    pub gap: Vec<f64>,
    pub l_max: usize,
}

fn check_same_scale(prof: &SmhwProfile, kernel: &NeedletKernel) -> Result<(), KernelError> {
    match kernel {
        NeedletKernel::Mexican { base, .. } if (*base - prof.base()).abs() <= 1e-12 * base.abs() => Ok(()),
        NeedletKernel::Mexican { .. } => Err(KernelError::ScaleMismatch),
        _ => Err(KernelError::KindMismatch { expected: "Mexican" }),
    }
}

/// Fits `K` minimising `sum (Psi - K psi)^2` over `thetas` and returns the
/// pointwise gap on the same grid.
pub fn smhw_approximation_gap(prof: &SmhwProfile, kernel: &NeedletKernel, thetas: &[f64]) -> Result<SmhwGap, KernelError> {
    check_same_scale(prof, kernel)?;
    if thetas.is_empty() {
        return Err(KernelError::EmptyGrid);
    }
    let smhw = thetas.iter().map(|&t| prof.eval(t)).collect::<Result<Vec<_>, _>>()?;
    let cos: Vec<f64> = thetas.iter().map(|t| t.cos()).collect();
    let needlet = kernel.profile_series(prof.j(), &cos)?;
    let num: f64 = smhw.iter().zip(&needlet).map(|(a, b)| a * b).sum();
    let den: f64 = needlet.iter().map(|b| b * b).sum();
    let k_fit = num / den;
    let gap = smhw.iter().zip(&needlet).map(|(a, b)| (a - k_fit * b).abs()).collect();
    Ok(SmhwGap { k_fit, thetas: thetas.to_vec(), smhw, needlet, gap, l_max: kernel.truncation_degree(prof.j()) })
}

/// Gap `|Psi - K psi|` on an arbitrary grid for an already fitted `K`.
pub fn smhw_gap_curve(prof: &SmhwProfile, kernel: &NeedletKernel, k_fit: f64, thetas: &[f64]) -> Result<Vec<f64>, KernelError> {
    check_same_scale(prof, kernel)?;
    let cos: Vec<f64> = thetas.iter().map(|t| t.cos()).collect();
    let needlet = kernel.profile_series(prof.j(), &cos)?;
    thetas
        .iter()
        .zip(needlet)
        .map(|(&t, n)| Ok((prof.eval(t)? - k_fit * n).abs()))
        .collect()
}
