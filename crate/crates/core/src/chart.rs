//! The null coordinate chart `(t, x) -> (tau, R)` for
//! `g = -A dt^2 + A^{-1} dx^2` with quasi-periodic `A`.
//!
//! With `U, V` the zero-mean solutions of
//!
//! ```text
//! w . d_phi U + A U_x = A - 1/rho-        (u = U + t/rho- - x)
//! w . d_phi V - A V_x = A - 1/rho+        (v = V + t/rho+ + x)
//! ```
//!
//! the chart is `tau = t + S(wt, x)`, `R = x + D(wt, x)` where in the parity
//! case (`rho+ = rho- = rho = alpha`) `S = (U+V)/(2m)`, `D = (V-U)/2`, and in
//! the general case `S = (lambda/kappa)(U+V)/2`, `D = (rho+ V - rho- U)/kappa`
//! with `kappa = rho+ + rho-`, `lambda = 2 rho+ rho-`. The torus lift is
//! `Psi: (phi, x) -> (phi + w S, x + D)`; quasi-periodic functions transform
//! by composition with `Psi^{-1}`.
//!
//! In the new coordinates the metric is `Omega^2` times a constant matrix;
//! [`verify_metric_form`] recovers that matrix numerically from the exact
//! pullback and checks it pointwise. For distinct `rho+-` the null gradients
//! give `u = tau/rho- - R`, `v = tau/rho+ + R`, hence the cross-term ratio
//! `g_tauR / g_RR = -(rho+ - rho-) / (2 rho+ rho-)`, vanishing in the parity
//! case.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dioph::FrequencyVector;
use crate::straighten::{straighten_newton, StraightenConfig};
use crate::torus::{compose_diffeo, invert_diffeo, Dir, Displacement, TorusFunction};
use crate::{Error, Grid, Result};

/// Proposition-level sup-norm bound guaranteeing the chart is a global
/// diffeomorphism.
pub const CHART_SUP_BOUND: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartMode {
    Parity,
    NoParity,
}

/// The constructed chart: `U`, `V`, the rotation numbers, the torus lift and
/// its inverse, and the conformal factor in the new variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullChart {
    pub mode: ChartMode,
    pub u: TorusFunction,
    pub v: TorusFunction,
    pub rho_minus: f64,
    pub rho_plus: f64,
    /// scalar `S` of the shift: `tau = t + S`, lifted as `phi' = phi + w S`
    pub tau_shift: TorusFunction,
    /// scalar `D` of the spatial shift: `R = x + D`
    pub r_shift: TorusFunction,
    /// inverse-shift scalars: `t = tau + sigma(w tau, R)`, `x = R + chi(..)`
    pub sigma: TorusFunction,
    pub chi: TorusFunction,
    /// conformal factor squared, in the new variables
    pub conformal_sq: TorusFunction,
    pub omega: FrequencyVector,
}

impl NullChart {
    /// `alpha = rho` in the parity case.
    pub fn alpha(&self) -> f64 {
        debug_assert_eq!(self.mode, ChartMode::Parity);
        self.rho_minus
    }

    pub fn forward_lift(&self) -> Result<Displacement> {
        Displacement::omega_lift(&self.omega.omega, &self.tau_shift, &self.r_shift)
    }

    pub fn inverse_lift(&self) -> Result<Displacement> {
        Displacement::omega_lift(&self.omega.omega, &self.sigma, &self.chi)
    }

    /// Transport a quasi-periodic function to the new variables
    /// (`f o C^{-1}`, realized through the torus lift).
    pub fn push(&self, f: &TorusFunction) -> Result<TorusFunction> {
        compose_diffeo(f, &self.inverse_lift()?)
    }

    /// Pull a function of the new variables back to the original ones.
    pub fn pull(&self, f: &TorusFunction) -> Result<TorusFunction> {
        compose_diffeo(f, &self.forward_lift()?)
    }

    /// Worst node error of `Psi o Psi^{-1} = id` on the verification grid.
    pub fn round_trip_error(&self) -> Result<f64> {
        let fwd = self.forward_lift()?;
        let inv = self.inverse_lift()?;
        let size = 2 * fwd.cutoff() + 2;
        let template = Grid::zeros(self.u.nu(), size);
        let mut worst = 0.0f64;
        for lin in 0..template.len() {
            let y = template.point(lin);
            let ndim = y.len();
            let mut z = y.clone();
            for a in 0..ndim {
                z[a] += inv.component(a).eval_at(&y).re;
            }
            for a in 0..ndim {
                let fwd_a = z[a] + fwd.component(a).eval_at(&z).re;
                worst = worst.max((fwd_a - y[a]).abs());
            }
        }
        Ok(worst)
    }
}

/// Grid-sup residuals of the two Eikonal equations, evaluated through the
/// torus representatives:
/// `d_t u + A d_x u = w.d_phi U + A U_x - A + 1/rho-`, likewise for `v`.
pub fn eikonal_residuals(
    a_fun: &TorusFunction,
    u: &TorusFunction,
    v: &TorusFunction,
    rho_minus: f64,
    rho_plus: f64,
    w: &FrequencyVector,
) -> Result<(f64, f64)> {
    let ru = u
        .omega_grad_phi(&w.omega)
        .add(&a_fun.product(&u.derivative(Dir::X))?)?
        .sub(a_fun)?
        .add_constant(1.0 / rho_minus);
    let rv = v
        .omega_grad_phi(&w.omega)
        .sub(&a_fun.product(&v.derivative(Dir::X))?)?
        .sub(a_fun)?
        .add_constant(1.0 / rho_plus);
    Ok((ru.linf_norm(), rv.linf_norm()))
}

/// Solve for `(U, V, m)` in the parity case.
///
/// `U = -beta` from the straightening of `w.d_phi + A d_x`; when `A` is even
/// in both `phi` and `x` (checked), `V` is the exact `x`-reflection of `U`,
/// which carries the parity identities `V(phi,x) = U(phi,-x) = -U(-phi,x)`
/// at machine precision. Otherwise `V` comes from an independent
/// straightening of the reversed field.
pub fn solve_uv(
    a_fun: &TorusFunction,
    w: &FrequencyVector,
    cfg: &StraightenConfig,
) -> Result<(TorusFunction, TorusFunction, f64)> {
    check_positive(a_fun)?;
    let a0 = a_fun.add_constant(-1.0);
    let res = straighten_newton(&a0, w, cfg)?;
    let u = res.beta.scale(-1.0);
    let even_even = a_fun.parity_violation(crate::ParityClass::EVEN_EVEN);
    let v = if even_even < 1e-12 {
        u.reflect_x()
    } else {
        solve_v_independent(a_fun, w, cfg)?.0
    };
    Ok((u, v, res.m_inf))
}

/// Independent solve of the `V` equation via the reversed vector field:
/// with `A~(phi, x) = A(phi, -x)`, `V(phi, x) = -beta~(phi, -x)`.
pub fn solve_v_independent(
    a_fun: &TorusFunction,
    w: &FrequencyVector,
    cfg: &StraightenConfig,
) -> Result<(TorusFunction, f64)> {
    let a_refl = a_fun.reflect_x();
    let a0 = a_refl.add_constant(-1.0);
    let res = straighten_newton(&a0, w, cfg)?;
    Ok((res.beta.scale(-1.0).reflect_x(), res.m_inf))
}

fn check_positive(a_fun: &TorusFunction) -> Result<()> {
    let grid = a_fun.synthesize(2 * a_fun.cutoff() + 2)?;
    let min = grid.data.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(Error::DegenerateMetric(format!("A attains {min:.3e} <= 0 on the grid")));
    }
    Ok(())
}

fn check_sup_bounds(u: &TorusFunction, v: &TorusFunction) -> Result<()> {
    let mut worst = u.linf_norm().max(v.linf_norm());
    for f in [u, v] {
        for a in 0..f.nu() {
            worst = worst.max(f.derivative(Dir::Phi(a)).linf_norm());
        }
        worst = worst.max(f.derivative(Dir::X).linf_norm());
    }
    if worst >= CHART_SUP_BOUND {
        return Err(Error::NotDiffeo(format!(
            "sup bound violated: max(|U|,|V|,|dU|,|dV|) = {worst:.3e} >= {CHART_SUP_BOUND}"
        )));
    }
    Ok(())
}

/// Assemble the parity-mode chart from `(U, V, m)`.
pub fn build_chart(
    a_fun: &TorusFunction,
    u: &TorusFunction,
    v: &TorusFunction,
    m: f64,
    w: &FrequencyVector,
) -> Result<NullChart> {
    check_sup_bounds(u, v)?;
    let s = u.add(v)?.scale(0.5 / m);
    let d = v.sub(u)?.scale(0.5);
    finish_chart(a_fun, u, v, 1.0 / m, 1.0 / m, s, d, ChartMode::Parity, w)
}

/// Assemble the no-parity chart: two independent straightenings give
/// `(U, rho-)` and `(V, rho+)`.
pub fn build_chart_no_parity(
    a_fun: &TorusFunction,
    w: &FrequencyVector,
    cfg: &StraightenConfig,
) -> Result<NullChart> {
    check_positive(a_fun)?;
    let a0 = a_fun.add_constant(-1.0);
    let res_minus = straighten_newton(&a0, w, cfg)?;
    let u = res_minus.beta.scale(-1.0);
    let (v, m_plus) = solve_v_independent(a_fun, w, cfg)?;
    check_sup_bounds(&u, &v)?;

    let rho_minus = 1.0 / res_minus.m_inf;
    let rho_plus = 1.0 / m_plus;
    let kappa = rho_plus + rho_minus;
    let lambda = 2.0 * rho_plus * rho_minus;
    let s = u.add(&v)?.scale(0.5 * lambda / kappa);
    let d = v.scale(rho_plus).sub(&u.scale(rho_minus))?.scale(1.0 / kappa);
    finish_chart(a_fun, &u, &v, rho_minus, rho_plus, s, d, ChartMode::NoParity, w)
}

#[allow(clippy::too_many_arguments)]
fn finish_chart(
    a_fun: &TorusFunction,
    u: &TorusFunction,
    v: &TorusFunction,
    rho_minus: f64,
    rho_plus: f64,
    s: TorusFunction,
    d: TorusFunction,
    mode: ChartMode,
    w: &FrequencyVector,
) -> Result<NullChart> {
    let fwd = Displacement::omega_lift(&w.omega, &s, &d)?;
    let inv = invert_diffeo(&fwd)?;
    // inverse-shift scalars: sigma = -S o Psi^{-1}, chi = -D o Psi^{-1}
    let sigma = compose_diffeo(&s, &inv)?.scale(-1.0);
    let chi = compose_diffeo(&d, &inv)?.scale(-1.0);
    let conformal_sq = conformal_factor(a_fun, u, v, &inv)?;
    Ok(NullChart {
        mode,
        u: u.clone(),
        v: v.clone(),
        rho_minus,
        rho_plus,
        tau_shift: s,
        r_shift: d,
        sigma,
        chi,
        conformal_sq,
        omega: w.clone(),
    })
}

/// Conformal factor in the new variables:
/// `O^2 = [1 / (A (1 - U_x)(1 + V_x))] o Psi^{-1}`.
///
/// The sign conditions `1 - U_x > 0`, `1 + V_x > 0` are the requirement
/// `d_x u < 0 < d_x v` on the null gradients.
pub fn conformal_factor(
    a_fun: &TorusFunction,
    u: &TorusFunction,
    v: &TorusFunction,
    psi_inv: &Displacement,
) -> Result<TorusFunction> {
    let cut = a_fun.cutoff();
    let size = 4 * cut + 4;
    let ga = a_fun.synthesize(size)?;
    let gu = u.derivative(Dir::X).synthesize(size)?;
    let gv = v.derivative(Dir::X).synthesize(size)?;
    let mut data = Vec::with_capacity(ga.len());
    for i in 0..ga.len() {
        let du = 1.0 - gu.data[i].re;
        let dv = 1.0 + gv.data[i].re;
        if du <= 0.0 || dv <= 0.0 {
            return Err(Error::DegenerateMetric(format!(
                "null gradient sign violated: 1-U_x = {du:.3e}, 1+V_x = {dv:.3e}"
            )));
        }
        data.push(Complex64::new(1.0 / (ga.data[i].re * du * dv), 0.0));
    }
    let f_orig = TorusFunction::analyze(&Grid { nu: a_fun.nu(), size, data }, cut, true)?;
    compose_diffeo(&f_orig, psi_inv)
}

/// Numerically pulled-back metric components in `(tau, R)` coordinates,
/// sampled over the original grid (the target ratios are
/// position-independent for an exact chart).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    /// worst |g_tauR| over the grid (vanishes in parity mode)
    pub max_cross: f64,
    /// worst |g_tautau/g_RR - expected|
    pub max_tt_ratio_dev: f64,
    /// worst |g_tauR/g_RR - expected cross ratio|
    pub max_cross_ratio_dev: f64,
    /// worst |g_RR - O^2 o Psi| (conformal-factor consistency)
    pub max_conformal_dev: f64,
    pub expected_tt_ratio: f64,
    pub expected_cross_ratio: f64,
    pub passed: bool,
    pub tol: f64,
}

/// Pull back `g = diag(-A, 1/A)` through the chart with spectral Jacobians
/// and compare against the constant-coefficient target form.
pub fn verify_metric_form(
    chart: &NullChart,
    a_fun: &TorusFunction,
    tol: f64,
) -> Result<MetricReport> {
    let w = &chart.omega;
    let size = 2 * chart.tau_shift.cutoff().max(a_fun.cutoff()) + 2;
    let tau_t = chart.tau_shift.omega_grad_phi(&w.omega).add_constant(1.0).synthesize(size)?;
    let tau_x = chart.tau_shift.derivative(Dir::X).synthesize(size)?;
    let r_t = chart.r_shift.omega_grad_phi(&w.omega).synthesize(size)?;
    let r_x = chart.r_shift.derivative(Dir::X).add_constant(1.0).synthesize(size)?;
    let ga = a_fun.synthesize(size)?;
    let gconf = chart.pull(&chart.conformal_sq)?.synthesize(size)?;

    let (rp, rm) = (chart.rho_plus, chart.rho_minus);
    let expected_tt = -1.0 / (rp * rm);
    let expected_cross = match chart.mode {
        ChartMode::Parity => 0.0,
        ChartMode::NoParity => -(rp - rm) / (2.0 * rp * rm),
    };

    let mut rep = MetricReport {
        max_cross: 0.0,
        max_tt_ratio_dev: 0.0,
        max_cross_ratio_dev: 0.0,
        max_conformal_dev: 0.0,
        expected_tt_ratio: expected_tt,
        expected_cross_ratio: expected_cross,
        passed: false,
        tol,
    };

    for i in 0..ga.len() {
        let (tt, tx) = (tau_t.data[i].re, tau_x.data[i].re);
        let (rt, rx) = (r_t.data[i].re, r_x.data[i].re);
        let a = ga.data[i].re;
        let det = tt * rx - tx * rt;
        if det.abs() < 1e-12 {
            return Err(Error::DegenerateMetric("chart Jacobian is singular on the grid".into()));
        }
        // g' = J^{-T} diag(-A, 1/A) J^{-1}
        let g_tt = (-a * rx * rx + rt * rt / a) / (det * det);
        let g_tr = (a * tx * rx - rt * tt / a) / (det * det);
        let g_rr = (-a * tx * tx + tt * tt / a) / (det * det);

        rep.max_cross = rep.max_cross.max(g_tr.abs());
        rep.max_tt_ratio_dev = rep.max_tt_ratio_dev.max((g_tt / g_rr - expected_tt).abs());
        rep.max_cross_ratio_dev = rep.max_cross_ratio_dev.max((g_tr / g_rr - expected_cross).abs());
        rep.max_conformal_dev = rep.max_conformal_dev.max((g_rr - gconf.data[i].re).abs());
    }

    rep.passed = rep.max_tt_ratio_dev <= tol
        && rep.max_cross_ratio_dev <= tol
        && match chart.mode {
            ChartMode::Parity => rep.max_cross <= tol,
            ChartMode::NoParity => true,
        };
    Ok(rep)
}
