//! Uniform grids on `T^{nu+1}` and the multidimensional FFT behind
//! synthesis/analysis.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// Sampled values on a uniform grid over `T^{nu+1}`, one axis per angle
/// (`phi_1 .. phi_nu`, then `x`), all axes the same size, row-major.
#[derive(Debug, Clone)]
pub struct Grid {
    pub nu: usize,
    pub size: usize,
    pub data: Vec<Complex64>,
}

impl Grid {
    pub fn zeros(nu: usize, size: usize) -> Self {
        Grid { nu, size, data: vec![Complex64::new(0.0, 0.0); size.pow(nu as u32 + 1)] }
    }

    pub fn ndim(&self) -> usize {
        self.nu + 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Angle of grid node `k` along any axis.
    pub fn angle(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.size as f64
    }

    /// Decompose a linear index into per-axis node indices.
    pub fn unravel(&self, mut lin: usize) -> Vec<usize> {
        let d = self.ndim();
        let mut idx = vec![0usize; d];
        for a in (0..d).rev() {
            idx[a] = lin % self.size;
            lin /= self.size;
        }
        idx
    }

    /// Angles of the node with linear index `lin`.
    pub fn point(&self, lin: usize) -> Vec<f64> {
        self.unravel(lin).into_iter().map(|k| self.angle(k)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Mean of |v|^2 over the grid (Parseval partner of the s = 0 norm).
    pub fn mean_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Grid {
        Grid { nu: self.nu, size: self.size, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    /// Pointwise combination of two grids of identical shape.
    pub fn zip<F: Fn(Complex64, Complex64) -> Complex64>(&self, other: &Grid, f: F) -> Result<Grid> {
        if self.nu != other.nu || self.size != other.size {
            return Err(Error::Shape(format!(
                "grid mismatch: ({}, {}) vs ({}, {})",
                self.nu, self.size, other.nu, other.size
            )));
        }
        Ok(Grid {
            nu: self.nu,
            size: self.size,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

/// In-place FFT along every axis of a row-major hypercube.
///
/// `inverse = false` applies `sum_n v_n e^{-2 pi i k n / G}` per axis
/// (unnormalized); `inverse = true` the conjugate kernel. Callers handle the
/// `1/G^d` factor.
pub fn fft_all_axes(data: &mut [Complex64], ndim: usize, size: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(size) } else { planner.plan_fft_forward(size) };
    let total = data.len();
    debug_assert_eq!(total, size.pow(ndim as u32));

    let mut line = vec![Complex64::new(0.0, 0.0); size];
    for axis in 0..ndim {
        // stride between consecutive elements along `axis`
        let stride = size.pow((ndim - 1 - axis) as u32);
        let block = stride * size;
        let lines = total / size;
        for l in 0..lines {
            let base = (l / stride) * block + (l % stride);
            for k in 0..size {
                line[k] = data[base + k * stride];
            }
            fft.process(&mut line);
            for k in 0..size {
                data[base + k * stride] = line[k];
            }
        }
    }
}
