//! Spectral machinery for quasi-periodic null coordinates on the cylinder.
//!
//! Everything here works with truncated Fourier series on the torus
//! `T^{nu+1}` (the `nu` angle variables of a quasi-periodic time dependence
//! plus one spatial angle). The main pipeline is:
//!
//! 1. [`straighten`] — conjugate the transport field `w·d_phi + (1+a0) d_x`
//!    to constant coefficients (Newton on compositions of torus
//!    diffeomorphisms, with a direct collocation solver as an independent
//!    oracle).
//! 2. [`chart`] — build the null coordinate change `(t, x) -> (tau, R)` that
//!    turns `g = -A dt^2 + A^{-1} dx^2` into a conformally flat metric with
//!    constant-coefficient principal part, together with its torus lift and
//!    conformal factor.
//! 3. [`kg`] — transport Klein-Gordon perturbation coefficients through the
//!    chart and remove the first-order time-derivative term by a
//!    multiplication operator.
//! 4. [`psdo`] — reduce the remaining first-order term at the level of the
//!    complexified first-order system, using truncated operator matrices and
//!    measured (decay-fitted) pseudo-differential orders.
//! 5. [`wave`] — leapfrog evolution of the geometric wave equation, the
//!    dispersion relation of the no-parity reduced metric, and the
//!    almost-periodicity projection check.
//!
//! All operations are pure functions of immutable values. With the default
//! `parallel` feature the data-parallel inner loops (non-uniform grid
//! evaluation, frequency-box scans, operator products) run on rayon; results
//! are bit-identical to the sequential fallback because every output element
//! is reduced sequentially within its own task.

pub mod chart;
pub mod dioph;
mod error;
pub mod fit;
pub mod kg;
mod par;
pub mod psdo;
pub mod straighten;
pub mod torus;
pub mod wave;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
pub use torus::{
    Grid, Parity, ParityClass, SobolevIndex, TorusFunction, DEFAULT_RESONANCE_TOL,
};

/// Default spectral cutoff for a given number of angle variables.
///
/// Desk-scale sizes: runs in seconds with spectral accuracy for analytic
/// data.
pub fn default_cutoff(nu: usize) -> usize {
    if nu <= 1 {
        32
    } else {
        16
    }
}

/// Default lowest Sobolev index `s0 > (nu + 7)/2`.
pub fn default_s0(nu: usize) -> f64 {
    (nu as f64 + 7.0) / 2.0 + 0.5
}

/// Default diophantine exponent `iota = nu + 3`.
pub fn default_iota(nu: usize) -> f64 {
    nu as f64 + 3.0
}
