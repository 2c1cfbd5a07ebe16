//! Product cubature on the sphere: Gauss-Legendre nodes in `cos theta`
//! crossed with equispaced longitudes.
//!
//! A grid of exactness degree `L` integrates every spherical polynomial of
//! degree `< L` exactly (up to rounding).

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harmonics::{NormalizedLegendre, SphericalPoint, Y00};

/// Default guard on the number of grid points.
pub const DEFAULT_POINT_CAP: usize = 40_000_000;

#[derive(Debug, Error)]
pub enum CubatureError {
    #[error("exactness degree must be at least 1")]
    ZeroDegree,
    #[error("grid of degree {degree} needs {points} points, above the cap of {cap}")]
    TooManyPoints { degree: usize, points: usize, cap: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("degree {l_max} is not below the exactness degree {exact_degree}")]
    BeyondExactness { l_max: usize, exact_degree: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One iso-latitude ring of the product grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub theta: f64,
    pub cos_theta: f64,
    pub sin_theta: f64,
    /// Gauss-Legendre weight of the node `cos_theta`.
    pub node_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubatureGrid {
    base: f64,
    j: u32,
    exact_degree: usize,
    rings: Vec<Ring>,
    n_phi: usize,
    points: Vec<SphericalPoint>,
    weights: Vec<f64>,
}

impl CubatureGrid {
    /// Exactness degree `ceil(B^{j+1})` used when none is requested.
    pub fn default_degree(base: f64, j: u32) -> usize {
        (base.powi(j as i32 + 1).ceil() as usize).max(1)
    }

    /// Product grid at scale `j` exact for polynomials of degree
    /// `< exact_degree`.
    pub fn build(base: f64, j: u32, exact_degree: usize) -> Result<Self, CubatureError> {
        Self::build_with_cap(base, j, exact_degree, DEFAULT_POINT_CAP)
    }

    pub fn build_default(base: f64, j: u32) -> Result<Self, CubatureError> {
        Self::build(base, j, Self::default_degree(base, j))
    }

    pub fn build_with_cap(base: f64, j: u32, exact_degree: usize, cap: usize) -> Result<Self, CubatureError> {
        if exact_degree == 0 {
            return Err(CubatureError::ZeroDegree);
        }
        let n_theta = (exact_degree + 2) / 2;
        let n_phi = exact_degree + 1;
        let points = n_theta.saturating_mul(n_phi);
        if points > cap {
            return Err(CubatureError::TooManyPoints { degree: exact_degree, points, cap });
        }
        let (nodes, node_weights) = gauss_legendre(n_theta);
        // north to south: descending cos theta
        let rings: Vec<Ring> = nodes
            .iter()
            .zip(&node_weights)
            .rev()
            .map(|(&x, &w)| {
                let theta = x.clamp(-1.0, 1.0).acos();
                Ring { theta, cos_theta: x, sin_theta: (1.0 - x * x).max(0.0).sqrt(), node_weight: w }
            })
            .collect();
        let dphi = TAU / n_phi as f64;
        let mut pts = Vec::with_capacity(points);
        let mut weights = Vec::with_capacity(points);
        for ring in &rings {
            for k in 0..n_phi {
                pts.push(SphericalPoint::new(ring.theta, k as f64 * dphi).expect("ring angles are in range"));
                weights.push(ring.node_weight * dphi);
            }
        }
        Ok(Self { base, j, exact_degree, rings, n_phi, points: pts, weights })
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn j(&self) -> u32 {
        self.j
    }

    pub fn exact_degree(&self) -> usize {
        self.exact_degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SphericalPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rings(&self) -> &[Ring] {
        &self.rings
    }

    /// Longitudes per ring; point `(i, k)` sits at index `i * n_phi + k`.
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn integrate(&self, values: &[Complex64]) -> Result<Complex64, CubatureError> {
        self.check_len(values.len())?;
        Ok(self.weights.iter().zip(values).map(|(w, v)| v * *w).sum())
    }

    pub fn integrate_real(&self, values: &[f64]) -> Result<f64, CubatureError> {
        self.check_len(values.len())?;
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    fn check_len(&self, got: usize) -> Result<(), CubatureError> {
        if got != self.points.len() {
            return Err(CubatureError::LengthMismatch { expected: self.points.len(), got });
        }
        Ok(())
    }

    /// `max |integrate(Y_lm) - delta_{l0} sqrt(4 pi)|` over `l <= l_max`,
    /// computed point by point from the harmonics themselves.
    pub fn exactness_check(&self, l_max: usize) -> Result<f64, CubatureError> {
        if l_max >= self.exact_degree {
            return Err(CubatureError::BeyondExactness { l_max, exact_degree: self.exact_degree });
        }
        let n_coef = (l_max + 1) * (l_max + 2) / 2;
        let mut sums = vec![Complex64::new(0.0, 0.0); n_coef];
        for (pt, w) in self.points.iter().zip(&self.weights) {
            let table = NormalizedLegendre::from_theta(l_max, pt.theta());
            let mut idx = 0;
            for m in 0..=l_max {
                let phase = Complex64::from_polar(*w, m as f64 * pt.phi());
                for &lam in table.column(m) {
                    sums[idx] += phase * lam;
                    idx += 1;
                }
            }
        }
        // negative orders are conjugates up to sign, so |error| is the same
        let mut worst: f64 = 0.0;
        let mut idx = 0;
        for m in 0..=l_max {
            for l in m..=l_max {
                let target = if l == 0 { 1.0 / Y00 } else { 0.0 };
                worst = worst.max((sums[idx] - target).norm());
                idx += 1;
            }
        }
        Ok(worst)
    }

    /// CSV with header `theta,phi,weight`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), CubatureError> {
        writeln!(out, "theta,phi,weight")?;
        for (p, w) in self.points.iter().zip(&self.weights) {
            writeln!(out, "{:.17e},{:.17e},{:.17e}", p.theta(), p.phi(), w)?;
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                let (_, d) = legendre_and_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
