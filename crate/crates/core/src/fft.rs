//! Square 2D transforms on an `M x M` periodic grid.
//!
//! Node `(a, b)` sits at `x = (-L + a h, -L + b h)` with `h = 2L / M` and is stored
//! row-major as `b * M + a`. Coefficients follow the convention
//!
//! ```text
//! c(n) = M^-2 * sum_a f(a) e^{+2 pi i n.a / M},    f(a) = sum_n c(n) e^{-2 pi i n.a / M}
//! ```
//!
//! so a derivative acts on coefficients as multiplication by `-i k`, with
//! `k = (pi / L) n`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

pub struct Fft2 {
    m: usize,
    to_spectral: Arc<dyn Fft<f64>>,
    to_physical: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("m", &self.m).finish()
    }
}

impl Clone for Fft2 {
    fn clone(&self) -> Self {
        Self {
            m: self.m,
            to_spectral: Arc::clone(&self.to_spectral),
            to_physical: Arc::clone(&self.to_physical),
        }
    }
}

impl Fft2 {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            to_spectral: planner.plan_fft(m, FftDirection::Inverse),
            to_physical: planner.plan_fft(m, FftDirection::Forward),
        }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// Physical values to coefficients (normalized).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(&*self.to_spectral, data);
        let scale = 1.0 / (self.m * self.m) as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }

    /// Coefficients to physical values.
    pub fn backward(&self, data: &mut [Complex64]) {
        self.apply(&*self.to_physical, data);
    }

    fn apply(&self, fft: &dyn Fft<f64>, data: &mut [Complex64]) {
        let m = self.m;
        assert_eq!(data.len(), m * m, "buffer does not match the grid");
        fft.process(data);
        transpose(data, m);
        fft.process(data);
        transpose(data, m);
    }
}

fn transpose(data: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}

/// Signed mode number for FFT index `i` on an `m`-point axis.
pub fn mode(i: usize, m: usize) -> i64 {
    if i <= m / 2 {
        i as i64
    } else {
        i as i64 - m as i64
    }
}
