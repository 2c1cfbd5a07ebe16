//! Fast evaluation of band-limited real fields on iso-latitude product grids.
//!
//! For each ring the Legendre sums `f_m = sum_l a_lm lambda_lm(cos theta)`
//! are split by the parity of `l - m`, which yields the mirror ring for
//! free since `lambda_lm(-x) = (-1)^{l+m} lambda_lm(x)`. The longitude sum
//! is then one inverse FFT after folding `m` modulo the ring length.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::cubature::{CubatureGrid, Ring};
use crate::harmonics::NormalizedLegendre;

/// Legendre tables above this many bytes are recomputed per call.
const TABLE_BUDGET: usize = 1 << 29;

pub(crate) struct RingSynthesizer {
    l_max: usize,
    n_phi: usize,
    rings: Vec<Ring>,
    tables: Option<Vec<NormalizedLegendre>>,
    fft: Arc<dyn Fft<f64>>,
}

impl RingSynthesizer {
    pub(crate) fn new(grid: &CubatureGrid, l_max: usize) -> Self {
        let rings = grid.rings().to_vec();
        let north = rings.len().div_ceil(2);
        let bytes = north * (l_max + 1) * (l_max + 2) / 2 * std::mem::size_of::<f64>();
        let tables = (bytes <= TABLE_BUDGET)
            .then(|| rings[..north].iter().map(|r| NormalizedLegendre::new(l_max, r.cos_theta, r.sin_theta)).collect());
        let fft = FftPlanner::new().plan_fft_inverse(grid.n_phi());
        Self { l_max, n_phi: grid.n_phi(), rings, tables, fft }
    }

    pub(crate) fn l_max(&self) -> usize {
        self.l_max
    }

    /// Field values in grid order from `m`-major triangular coefficients
    /// (`m >= 0` only) of degree `self.l_max`.
    pub(crate) fn synthesize(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let n_rings = self.rings.len();
        let mut out = vec![0.0; n_rings * self.n_phi];
        let mut north = vec![Complex64::new(0.0, 0.0); self.n_phi];
        let mut south = vec![Complex64::new(0.0, 0.0); self.n_phi];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for i in 0..n_rings.div_ceil(2) {
            let mirror = n_rings - 1 - i;
            let owned;
            let table = match &self.tables {
                Some(t) => &t[i],
                None => {
                    owned = NormalizedLegendre::new(self.l_max, self.rings[i].cos_theta, self.rings[i].sin_theta);
                    &owned
                }
            };
            north.fill(Complex64::new(0.0, 0.0));
            south.fill(Complex64::new(0.0, 0.0));
            let mut start = 0;
            for m in 0..=self.l_max {
                let len = self.l_max + 1 - m;
                let a = &coeffs[start..start + len];
                start += len;
                let lam = table.column(m);
                let (mut er, mut ei, mut or, mut oi) = (0.0, 0.0, 0.0, 0.0);
                let pairs = a.chunks_exact(2).zip(lam.chunks_exact(2));
                for (c, v) in pairs {
                    er += c[0].re * v[0];
                    ei += c[0].im * v[0];
                    or += c[1].re * v[1];
                    oi += c[1].im * v[1];
                }
                if len % 2 == 1 {
                    er += a[len - 1].re * lam[len - 1];
                    ei += a[len - 1].im * lam[len - 1];
                }
                let (even, odd) = (Complex64::new(er, ei), Complex64::new(or, oi));
                let factor = if m == 0 { 1.0 } else { 2.0 };
                let bin = m % self.n_phi;
                north[bin] += (even + odd) * factor;
                south[bin] += (even - odd) * factor;
            }
            self.fft.process_with_scratch(&mut north, &mut scratch);
            let row = &mut out[i * self.n_phi..(i + 1) * self.n_phi];
            for (o, v) in row.iter_mut().zip(&north) {
                *o = v.re;
            }
            if mirror != i {
                self.fft.process_with_scratch(&mut south, &mut scratch);
                let row = &mut out[mirror * self.n_phi..(mirror + 1) * self.n_phi];
                for (o, v) in row.iter_mut().zip(&south) {
                    *o = v.re;
                }
            }
        }
        out
    }
}
