//! Legendre polynomials, fully normalized associated Legendre functions and
//! complex spherical harmonics on the unit sphere.
//!
//! Conventions: colatitude `theta` in `[0, pi]`, longitude `phi` in
//! `[0, 2 pi)`, orthonormal harmonics with the Condon-Shortley phase, so that
//! `Y_{l,-m} = (-1)^m conj(Y_{lm})`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use thiserror::Error;

/// `1 / sqrt(4 pi)`, the value of `Y_00`.
pub const Y00: f64 = 0.282_094_791_773_878_14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonicsError {
    #[error("argument {0} outside [-1, 1]")]
    ArgumentOutOfRange(f64),
    #[error("invalid harmonic index (l = {l}, m = {m}): need |m| <= l")]
    InvalidIndex { l: usize, m: i64 },
    #[error("invalid point (theta = {theta}, phi = {phi})")]
    InvalidPoint { theta: f64, phi: f64 },
}

/// A point on the unit sphere in colatitude/longitude coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SphericalPoint {
    theta: f64,
    phi: f64,
}

impl SphericalPoint {
    /// Builds a point, wrapping `phi` into `[0, 2 pi)`. `theta` must lie in
    /// `[0, pi]`.
    pub fn new(theta: f64, phi: f64) -> Result<Self, HarmonicsError> {
        if !theta.is_finite() || !phi.is_finite() || !(0.0..=PI).contains(&theta) {
            return Err(HarmonicsError::InvalidPoint { theta, phi });
        }
        let mut phi = phi.rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Ok(Self { theta, phi })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn to_unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn from_unit_vector(v: [f64; 3]) -> Result<Self, HarmonicsError> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(HarmonicsError::InvalidPoint { theta: f64::NAN, phi: f64::NAN });
        }
        let z = (v[2] / norm).clamp(-1.0, 1.0);
        Self::new(z.acos(), v[1].atan2(v[0]))
    }

    /// Inner product `<xi, eta>` of the two unit vectors, clamped to `[-1, 1]`.
    pub fn cos_distance(&self, other: &Self) -> f64 {
        let a = self.to_unit_vector();
        let b = other.to_unit_vector();
        (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0)
    }

    /// Geodesic distance `arccos <xi, eta>` in `[0, pi]`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.cos_distance(other).acos()
    }
}

/// Degree/order pair `(l, m)` with `|m| <= l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HarmonicIndex {
    l: usize,
    m: i64,
}

impl HarmonicIndex {
    pub fn new(l: usize, m: i64) -> Result<Self, HarmonicsError> {
        if m.unsigned_abs() as usize > l {
            return Err(HarmonicsError::InvalidIndex { l, m });
        }
        Ok(Self { l, m })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> i64 {
        self.m
    }
}

fn check_argument(x: f64) -> Result<(), HarmonicsError> {
    if x.is_nan() || x.abs() > 1.0 {
        return Err(HarmonicsError::ArgumentOutOfRange(x));
    }
    Ok(())
}

/// Legendre polynomial `P_l(x)` by the three-term recurrence
/// `(n + 1) P_{n+1} = (2n + 1) x P_n - n P_{n-1}`.
pub fn legendre_poly(l: usize, x: f64) -> Result<f64, HarmonicsError> {
    check_argument(x)?;
    Ok(legendre_unchecked(l, x))
}

#[inline]
pub(crate) fn legendre_unchecked(l: usize, x: f64) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let (mut prev, mut cur) = (1.0, x);
    for n in 1..l {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * x * cur - nf * prev) / (nf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `[P_0(x), ..., P_{l_max}(x)]`, same recurrence as [`legendre_poly`].
pub fn legendre_batch(l_max: usize, x: f64) -> Result<Vec<f64>, HarmonicsError> {
    check_argument(x)?;
    Ok(legendre_batch_unchecked(l_max, x))
}

pub(crate) fn legendre_batch_unchecked(l_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(l_max + 1);
    out.push(1.0);
    if l_max == 0 {
        return out;
    }
    out.push(x);
    for n in 1..l_max {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * x * out[n] - nf * out[n - 1]) / (nf + 1.0);
        out.push(next);
    }
    out
}

/// Addition-theorem kernel `(2l + 1) / (4 pi) P_l(cos_angle)`, equal to
/// `sum_m Y_lm(xi) conj(Y_lm(eta))` when `cos_angle = <xi, eta>`.
pub fn addition_kernel(l: usize, cos_angle: f64) -> Result<f64, HarmonicsError> {
    check_argument(cos_angle)?;
    Ok((2 * l + 1) as f64 / (4.0 * PI) * legendre_unchecked(l, cos_angle))
}

/// Triangular table of fully normalized associated Legendre functions
/// `lambda_lm(x)`, `0 <= m <= l <= l_max`, such that
/// `Y_lm(theta, phi) = lambda_lm(cos theta) e^{i m phi}`.
///
/// Storage is column-major in `m`: all degrees of `m = 0`, then `m = 1`, and
/// so on, which is the order the upward recurrence in `l` produces them.
#[derive(Debug, Clone)]
pub struct NormalizedLegendre {
    l_max: usize,
    values: Vec<f64>,
}

impl NormalizedLegendre {
    /// Evaluates all `lambda_lm` at `cos_theta`, with `sin_theta >= 0`
    /// supplied by the caller so it is computed once per point.
    pub fn new(l_max: usize, cos_theta: f64, sin_theta: f64) -> Self {
        let x = cos_theta.clamp(-1.0, 1.0);
        let s = sin_theta.abs();
        let len = (l_max + 1) * (l_max + 2) / 2;
        let mut values = vec![0.0; len];
        let mut pmm = Y00;
        let mut offset = 0;
        for m in 0..=l_max {
            if m > 0 {
                let mf = m as f64;
                pmm *= -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
            }
            values[offset] = pmm;
            if m < l_max {
                values[offset + 1] = x * (2.0 * m as f64 + 3.0).sqrt() * pmm;
            }
            let m2 = (m * m) as f64;
            for l in (m + 2)..=l_max {
                let lf = l as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - m2)).sqrt();
                let lp = lf - 1.0;
                let b = ((lp * lp - m2) / (4.0 * lp * lp - 1.0)).sqrt();
                let idx = offset + (l - m);
                values[idx] = a * (x * values[idx - 1] - b * values[idx - 2]);
            }
            offset += l_max + 1 - m;
        }
        Self { l_max, values }
    }

    pub fn from_theta(l_max: usize, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(l_max, c, s)
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// `lambda_lm` for `0 <= m <= l <= l_max`.
    #[inline]
    pub fn get(&self, l: usize, m: usize) -> f64 {
        debug_assert!(m <= l && l <= self.l_max);
        self.values[column_start(self.l_max, m) + (l - m)]
    }

    /// Column `m`: `lambda_lm` for `l = m..=l_max`.
    #[inline]
    pub fn column(&self, m: usize) -> &[f64] {
        let start = column_start(self.l_max, m);
        &self.values[start..start + self.l_max + 1 - m]
    }
}

/// Start of column `m` in an `m`-major triangular table of degree `l_max`.
#[inline]
pub(crate) fn column_start(l_max: usize, m: usize) -> usize {
    m * (l_max + 1) - m * m.saturating_sub(1) / 2
}

/// Orthonormal complex spherical harmonic `Y_lm(theta, phi)`.
pub fn spherical_harmonic(idx: HarmonicIndex, pt: &SphericalPoint) -> Complex64 {
    let l = idx.l();
    let m_abs = idx.m().unsigned_abs() as usize;
    let table = NormalizedLegendre::from_theta(l, pt.theta());
    let value = Complex64::from_polar(table.get(l, m_abs), m_abs as f64 * pt.phi());
    if idx.m() < 0 {
        let conj = value.conj();
        if m_abs % 2 == 1 {
            -conj
        } else {
            conj
        }
    } else {
        value
    }
}
