//! Straightening of the quasi-periodic transport field
//! `X0 = w . d_phi + (1 + a0) d_x` on `T^{nu+1}`.
//!
//! Two independent routes to the same object:
//!
//! * [`straighten_newton`] — the KAM-faithful scheme: at each step the
//!   conjugated coefficient is recentered (the rotation-number candidate is
//!   the pushed-forward mean), the linearized constant-coefficient equation
//!   is solved through the diophantine divisors, and the correction is
//!   *composed* with the accumulated diffeomorphism. Quadratic convergence
//!   until rounding.
//! * [`straighten_collocation`] — one direct linear solve on the truncated
//!   mode space with `(beta, m)` as unknowns. No composition, no iteration;
//!   exists precisely because the two paths share no code beyond the torus
//!   algebra and so can serve as mutual oracles.
//!
//! The straightened field is `w . d_phi + m_inf d_x`; `beta` solves
//! `w . d_phi beta + (1 + a0) d_x beta = m_inf - (1 + a0)` and is normalized
//! to zero mean (the equation only determines it up to a constant).

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dioph::{check_diophantine, invert_transport, FrequencyVector};
use crate::torus::{compose_diffeo, Dir, Displacement, SobolevIndex, TorusFunction};
use crate::{Error, Result};

/// Tuning knobs; the defaults implement the documented desk-scale behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StraightenConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Threshold on `gamma^{-1} ||a0||_{s1}`; mirrors the smallness
    /// assumption of the construction. Acceptance scenarios that prescribe
    /// larger data raise it explicitly.
    pub smallness_threshold: f64,
    /// Sobolev index used for the smallness check and residual reporting.
    pub s1: Option<f64>,
}

impl Default for StraightenConfig {
    fn default() -> Self {
        StraightenConfig { tol: 1e-10, max_iter: 30, smallness_threshold: 0.1, s1: None }
    }
}

/// Result of either solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StraighteningResult {
    pub beta: TorusFunction,
    pub m_inf: f64,
    pub residual_s0: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl StraighteningResult {
    /// JSON per the external interface:
    /// `{"m_inf", "beta", "residual", "iterations"}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "m_inf": self.m_inf,
            "beta": self.beta,
            "residual": self.residual_s0,
            "iterations": self.iterations,
        })
    }
}

fn s0_index(nu: usize) -> SobolevIndex {
    SobolevIndex(crate::default_s0(nu))
}

/// Residual function of the straightening equation in original variables:
/// `w . d_phi beta + (1 + a0)(1 + d_x beta) - m`.
pub fn straightening_residual(
    a0: &TorusFunction,
    beta: &TorusFunction,
    m: f64,
    w: &FrequencyVector,
) -> TorusFunction {
    let one_plus_a0 = a0.add_constant(1.0);
    let dphi = beta.omega_grad_phi(&w.omega);
    let dx = beta.derivative(Dir::X).add_constant(1.0);
    let transported = one_plus_a0.product(&dx).unwrap();
    dphi.add(&transported).unwrap().add_constant(-m)
}

/// `||w . d_phi beta + (1+a0)(1+d_x beta) - m||_{s0}`, plus a cross-check of
/// the composed (pushed-forward) form through the torus diffeomorphism.
pub fn pushforward_check(
    a0: &TorusFunction,
    beta: &TorusFunction,
    m: f64,
    w: &FrequencyVector,
) -> Result<f64> {
    let res = straightening_residual(a0, beta, m, w);
    let direct = res.sobolev_norm(s0_index(a0.nu()));

    // composed form: F o Psi^{-1} should be the constant m up to the same
    // residual size
    let psi = Displacement::x_shift(beta);
    let q = crate::torus::invert_diffeo(&psi)?;
    let f_fun = res.add_constant(m);
    let pushed = compose_diffeo(&f_fun, &q)?;
    let composed = pushed.add_constant(-m).sobolev_norm(s0_index(a0.nu()));
    // the two routes agree up to composition error; report the direct one
    // but fail loudly if they diverge wildly
    if composed > 10.0 * direct + 1e-8 {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: composed,
            tol: 10.0 * direct + 1e-8,
        });
    }
    Ok(direct)
}

fn smallness_check(a0: &TorusFunction, w: &FrequencyVector, cfg: &StraightenConfig) -> Result<()> {
    let s1 = cfg.s1.unwrap_or_else(|| {
        crate::default_s0(a0.nu()) + 2.0 * w.iota + 4.0
    });
    let delta = a0.zero_mean().sobolev_norm(SobolevIndex(s1)) / w.gamma;
    if delta > cfg.smallness_threshold {
        return Err(Error::Smallness(format!(
            "gamma^-1 ||a0||_s1 = {delta:.3e} exceeds threshold {}",
            cfg.smallness_threshold
        )));
    }
    Ok(())
}

/// Newton iteration on compositions of torus diffeomorphisms.
pub fn straighten_newton(
    a0: &TorusFunction,
    w: &FrequencyVector,
    cfg: &StraightenConfig,
) -> Result<StraighteningResult> {
    if a0.nu() != w.nu() {
        return Err(Error::Shape("frequency dimension mismatch".into()));
    }
    smallness_check(a0, w, cfg)?;
    let s0 = s0_index(a0.nu());
    let nu = a0.nu();
    let cutoff = a0.cutoff();

    // a nonzero mean of a0 simply folds into m via the first mean update
    let mut beta = TorusFunction::zero(nu, cutoff, true);
    let mut m;

    let mut best: Option<(TorusFunction, f64, f64)> = None;
    for iter in 0..cfg.max_iter {
        // F = w.d_phi beta + (1+a0)(1+d_x beta); pushed coefficient c = F o Psi^{-1}
        let f_fun = straightening_residual(a0, &beta, 0.0, w);
        let psi = Displacement::x_shift(&beta);
        let c = if iter == 0 {
            f_fun.clone()
        } else {
            let q = crate::torus::invert_diffeo(&psi)?;
            compose_diffeo(&f_fun, &q)?
        };
        m = c.mean().re;
        let rho = c.add_constant(-m); // zero-mean deviation in straightened variables
        // sup-norm drives the iteration: the s0-weighted norm has a rounding
        // floor of bracket^{s0} * eps at the top modes, above tight tols
        let res_norm = rho.linf_norm();
        if std::env::var("NULLCOORD_TRACE").is_ok() {
            eprintln!("newton iter {iter}: m = {m:.12}, |rho|_inf = {res_norm:.3e}");
        }
        // once the quadratic phase hits the rounding floor, further sweeps
        // only recycle noise through the small divisors
        if let Some((_, _, r)) = &best {
            if res_norm > 4.0 * r && *r < 1e-6 {
                break;
            }
        }
        if best.as_ref().is_none_or(|(_, _, r)| res_norm < *r) {
            best = Some((beta.clone(), m, res_norm));
        }
        if res_norm <= cfg.tol {
            return Ok(StraighteningResult {
                beta: beta.zero_mean(),
                m_inf: m,
                residual_s0: straightening_residual(a0, &beta.zero_mean(), m, w)
                    .sobolev_norm(s0),
                iterations: iter,
                converged: true,
            });
        }

        // certify the divisors this sweep will divide by
        let rep = check_diophantine(w, m, 2 * cutoff);
        if !rep.passed {
            return Err(Error::SmallDivisor {
                l: rep.worst_mode.0,
                j: rep.worst_mode.1,
                divisor: rep.worst_ratio,
                tol: 1.0,
            });
        }

        // linearized correction in straightened variables, then composed
        // onto the accumulated map: beta <- beta + h o (id + beta)
        let h = invert_transport(&rho.scale(-1.0), w, m)?;
        let h_shifted = compose_diffeo(&h, &psi)?;
        beta = beta.add(&h_shifted)?;
    }

    let (beta, m, residual) = best.expect("at least one iterate recorded");
    if residual <= cfg.tol {
        return Ok(StraighteningResult {
            beta: beta.zero_mean(),
            m_inf: m,
            residual_s0: residual,
            iterations: cfg.max_iter,
            converged: true,
        });
    }
    Err(Error::NoConvergence { iterations: cfg.max_iter, residual, tol: cfg.tol })
}

/// Direct collocation: one sparse-structured linear solve on the truncated
/// mode space with unknowns `(beta modes, m)`.
///
/// The Galerkin truncation of
/// `w . d_phi beta + d_x beta + a0 d_x beta - (m - 1) = -a0`
/// is square once the `(0,0)` unknown of `beta` is replaced by `m - 1`.
pub fn straighten_collocation(
    a0: &TorusFunction,
    w: &FrequencyVector,
) -> Result<StraighteningResult> {
    if a0.nu() != w.nu() {
        return Err(Error::Shape("frequency dimension mismatch".into()));
    }
    let nu = a0.nu();
    let cutoff = a0.cutoff();
    let s0 = s0_index(nu);
    let side = 2 * cutoff + 1;
    let dim = side.pow(nu as u32 + 1);

    // dense mode list in a fixed order; slot of the zero mode holds m - 1
    let modes: Vec<Vec<i64>> = (0..dim)
        .map(|mut lin| {
            let mut m = vec![0i64; nu + 1];
            for a in (0..=nu).rev() {
                m[a] = (lin % side) as i64 - cutoff as i64;
                lin /= side;
            }
            m
        })
        .collect();
    let zero_slot = modes.iter().position(|m| m.iter().all(|&c| c == 0)).unwrap();

    let mut mat = DMatrix::<Complex64>::zeros(dim, dim);
    let mut rhs = nalgebra::DVector::<Complex64>::zeros(dim);

    // diagonal: i (w.l + j); convolution with a0 times i k_x; m-column
    for (row, rm) in modes.iter().enumerate() {
        let (l, j) = (&rm[..nu], rm[nu]);
        let div = w.dot(l) + j as f64;
        if row != zero_slot {
            mat[(row, row)] += Complex64::new(0.0, div);
        }
        // a0 convolution: row r gets sum_k a0_{r-k} (i k_x) beta_k
        for (col, cm) in modes.iter().enumerate() {
            if col == zero_slot {
                continue;
            }
            let diff: Vec<i64> = rm.iter().zip(cm).map(|(a, b)| a - b).collect();
            if diff.iter().any(|&d| d.unsigned_abs() as usize > cutoff) {
                continue;
            }
            let a_coeff = a0.coeff(&diff[..nu], diff[nu]);
            if a_coeff.norm() == 0.0 {
                continue;
            }
            mat[(row, col)] += a_coeff * Complex64::new(0.0, cm[nu] as f64);
        }
        // unknown (m - 1) enters only the zero-mode equation with -1
        mat[(row, zero_slot)] += if row == zero_slot {
            Complex64::new(-1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
        rhs[row] = -a0.coeff(l, j);
    }

    let lu = mat.lu();
    let sol = lu.solve(&rhs).ok_or_else(|| Error::SmallDivisor {
        l: vec![0; nu],
        j: 0,
        divisor: 0.0,
        tol: 0.0,
    })?;

    let m_inf = 1.0 + sol[zero_slot].re;
    if sol[zero_slot].im.abs() > 1e-9 {
        return Err(Error::NoConvergence {
            iterations: 1,
            residual: sol[zero_slot].im.abs(),
            tol: 1e-9,
        });
    }
    let mut beta = TorusFunction::zero(nu, cutoff, false);
    for (slot, m) in modes.iter().enumerate() {
        if slot == zero_slot {
            continue;
        }
        beta.set_coeff(&m[..nu], m[nu], sol[slot])?;
    }
    let beta = beta.as_real().zero_mean();
    let residual = straightening_residual(a0, &beta, m_inf, w).sobolev_norm(s0);

    Ok(StraighteningResult { beta, m_inf, residual_s0: residual, iterations: 1, converged: true })
}
