//! Klein-Gordon coefficients through the null chart, and removal of the
//! first-order time derivative by a multiplication operator.
//!
//! Starting from
//!
//! ```text
//! psi_tt - psi_xx + m psi + B^xx psi_xx + B^x psi_x + B^t psi_t + B psi = 0
//! ```
//!
//! with `A^2 = 1 - B^xx`, the geometric recast leaves first/zeroth-order
//! coefficients `c_x = (B^x + A A_x)/A`, `c_t = B^t/A + A_t/A^2`,
//! `c_0 = B/A - m(1 - 1/A)`. Pushing through the chart,
//!
//! ```text
//! (-alpha^2 d_tau^2 + d_R^2 - m) phi = G^R d_R phi + G^tau d_tau phi + G phi
//! ```
//!
//! with `G^R, G^tau, G` given by the Jacobian-weighted compositions below.
//! The `G^tau` term is then removed by the multiplication operator
//! `P = exp(H / (2 alpha^2))`, `w.d_phi H = G^tau` (`H` with no `l = 0`
//! modes): the product rule gives
//!
//! ```text
//! L2(P h) = P L1 h - G2R d_R(P h) + GP h,
//! G2R = -2 P^{-1} d_R P,   GP = -2 (d_R P)^2 / P + (Q P),
//! ```
//!
//! `Q = -alpha^2 d_tau^2 + d_R^2 - G^R d_R`, which makes the relabeled
//! system `(-alpha^2 d_tau^2 + d_R^2 - m) w = (G^R - G2R) d_R w + (G + GP) w`
//! free of time derivatives. The sign in `P`'s exponent is fixed by this
//! operator identity (and by the null-form cancellation), which the tests
//! check to 1e-9.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chart::NullChart;
use crate::dioph::FrequencyVector;
use crate::fit::FittedRatio;
use crate::torus::{Dir, Grid, SobolevIndex, TorusFunction};
use crate::{Error, ParityClass, Result};

/// Tolerance on the per-`j` angle mean of `G^tau` (a parity violation makes
/// the `H` equation unsolvable).
pub const GTAU_MEAN_TOL: f64 = 1e-10;

/// The four perturbation coefficients with their declared parity classes
/// (`B^xx`, `B` even-even; `B^x` even-odd; `B^t` odd-even) and the mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KGCoefficients {
    pub bxx: TorusFunction,
    pub bx: TorusFunction,
    pub bt: TorusFunction,
    pub b: TorusFunction,
    pub mass: f64,
}

impl KGCoefficients {
    /// Worst declared-parity violation across the four coefficients.
    pub fn parity_violation(&self) -> f64 {
        let mut v = self.bxx.parity_violation(ParityClass::EVEN_EVEN);
        v = v.max(self.b.parity_violation(ParityClass::EVEN_EVEN));
        v = v.max(self.bx.parity_violation(ParityClass::EVEN_ODD));
        v.max(self.bt.parity_violation(ParityClass::ODD_EVEN))
    }

    pub fn validate(&self) -> Result<()> {
        let pv = self.parity_violation();
        if pv > 1e-12 {
            return Err(Error::Shape(format!("declared parity violated by {pv:.3e}")));
        }
        let g = self.bxx.synthesize(2 * self.bxx.cutoff() + 2)?;
        let min = g.data.iter().map(|z| 1.0 - z.re).fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(Error::DegenerateMetric(format!("1 - B^xx attains {min:.3e}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReduceStage {
    Geometric,
    TimeRemoved,
}

/// Output of the reduction stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedKG {
    pub stage: ReduceStage,
    pub alpha: f64,
    pub mass: f64,
    pub gr: TorusFunction,
    pub gtau: TorusFunction,
    pub g: TorusFunction,
    /// multiplication operator of the time-removal stage
    pub p: Option<TorusFunction>,
    /// relabeled first-order-in-R coefficient `G^R - G2R`
    pub g2_r: Option<TorusFunction>,
    /// relabeled zeroth-order coefficient `G + GP`
    pub g2: Option<TorusFunction>,
}

impl ReducedKG {
    /// Parity violations of the Lemma-4.1 classes
    /// (`G` even-even, `G^R` even-odd, `G^tau` odd-even).
    pub fn parity_violations(&self) -> (f64, f64, f64) {
        (
            self.gr.parity_violation(ParityClass::EVEN_ODD),
            self.gtau.parity_violation(ParityClass::ODD_EVEN),
            self.g.parity_violation(ParityClass::EVEN_EVEN),
        )
    }
}

/// Pointwise combination of synthesized grids, analyzed back as a real
/// function at the common cutoff.
fn on_grid(
    funs: &[&TorusFunction],
    op: impl Fn(&[f64]) -> Result<f64>,
) -> Result<TorusFunction> {
    let cut = funs.iter().map(|f| f.cutoff()).max().unwrap();
    let nu = funs[0].nu();
    let size = 4 * cut + 4;
    let grids: Vec<Grid> = funs.iter().map(|f| f.synthesize(size)).collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(grids[0].len());
    let mut vals = vec![0.0f64; funs.len()];
    for i in 0..grids[0].len() {
        for (k, g) in grids.iter().enumerate() {
            vals[k] = g.data[i].re;
        }
        data.push(Complex64::new(op(&vals)?, 0.0));
    }
    TorusFunction::analyze(&Grid { nu, size, data }, cut, true)
}

/// `A = sqrt(1 - B^xx)` and the geometric-recast lower-order coefficients
/// `(c_x, c_t, c_0)`.
pub fn geometric_split(
    coeffs: &KGCoefficients,
    w: &FrequencyVector,
) -> Result<(TorusFunction, TorusFunction, TorusFunction, TorusFunction)> {
    coeffs.validate()?;
    let a = on_grid(&[&coeffs.bxx], |v| {
        let q = 1.0 - v[0];
        if q <= 0.0 {
            return Err(Error::DegenerateMetric(format!("1 - B^xx = {q:.3e} on grid")));
        }
        Ok(q.sqrt())
    })?;
    let a_x = a.derivative(Dir::X);
    let a_t = a.omega_grad_phi(&w.omega);
    let mass = coeffs.mass;
    let c_x = on_grid(&[&coeffs.bx, &a, &a_x], |v| Ok((v[0] + v[1] * v[2]) / v[1]))?;
    let c_t = on_grid(&[&coeffs.bt, &a, &a_t], |v| Ok(v[0] / v[1] + v[2] / (v[1] * v[1])))?;
    let c_0 = on_grid(&[&coeffs.b, &a], |v| Ok(v[0] / v[1] - mass * (1.0 - 1.0 / v[1])))?;
    Ok((a, c_x, c_t, c_0))
}

/// Transport the lower-order coefficients through the chart:
///
/// ```text
/// G^R   = O^2 [ (c_x R_x + c_t R_t) o Psi^{-1} ]
/// G^tau = O^2 [ (c_x tau_x + c_t tau_t) o Psi^{-1} ]
/// G     = O^2 [ c_0 o Psi^{-1} ] - m (1 - O^2)
/// ```
pub fn transform_coefficients(
    coeffs: &KGCoefficients,
    chart: &NullChart,
    w: &FrequencyVector,
) -> Result<ReducedKG> {
    let (_a, c_x, c_t, c_0) = geometric_split(coeffs, w)?;
    let tau_t = chart.tau_shift.omega_grad_phi(&w.omega).add_constant(1.0);
    let tau_x = chart.tau_shift.derivative(Dir::X);
    let r_t = chart.r_shift.omega_grad_phi(&w.omega);
    let r_x = chart.r_shift.derivative(Dir::X).add_constant(1.0);

    let omega2 = &chart.conformal_sq;
    let gr_raw = c_x.product(&r_x)?.add(&c_t.product(&r_t)?)?;
    let gtau_raw = c_x.product(&tau_x)?.add(&c_t.product(&tau_t)?)?;

    let gr = omega2.product(&chart.push(&gr_raw)?)?;
    let gtau = omega2.product(&chart.push(&gtau_raw)?)?;
    let g = omega2
        .product(&chart.push(&c_0)?)?
        .sub(&omega2.scale(-1.0).add_constant(1.0).scale(coeffs.mass))?;

    Ok(ReducedKG {
        stage: ReduceStage::Geometric,
        alpha: chart.alpha(),
        mass: coeffs.mass,
        gr,
        gtau,
        g,
        p: None,
        g2_r: None,
        g2: None,
    })
}

/// Fitted-ratio rows for the coefficient bound
/// `|G^R|_s + |G^tau|_s + |G|_s <= C max_a gamma^-1 |a|_{s+s0+2 iota+5}`,
/// evaluated at `s in {s0, s0+1, s0+2}`.
pub fn estimate_g_norms(
    reduced: &ReducedKG,
    coeffs: &KGCoefficients,
    w: &FrequencyVector,
) -> Vec<FittedRatio> {
    let s0 = crate::default_s0(reduced.gr.nu());
    let mut rows = Vec::new();
    for ds in 0..3 {
        let s = s0 + ds as f64;
        let lhs = reduced.gr.sobolev_norm(SobolevIndex(s))
            + reduced.gtau.sobolev_norm(SobolevIndex(s))
            + reduced.g.sobolev_norm(SobolevIndex(s));
        let shifted = SobolevIndex(s + s0 + 2.0 * w.iota + 5.0);
        let rhs = [&coeffs.bxx, &coeffs.bx, &coeffs.bt, &coeffs.b]
            .iter()
            .map(|a| a.sobolev_norm(shifted) / w.gamma)
            .fold(0.0, f64::max);
        rows.push(FittedRatio {
            label: format!("g-coefficients at s = {s}"),
            scale: s,
            lhs,
            rhs,
            ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
        });
    }
    rows
}

/// Remove the `G^tau d_tau` term with `P = exp(H/(2 alpha^2))`,
/// `w . d_phi H = G^tau`.
pub fn remove_time_derivative(reduced: &ReducedKG, w: &FrequencyVector) -> Result<ReducedKG> {
    if reduced.stage == ReduceStage::TimeRemoved {
        return Ok(reduced.clone());
    }
    let nu = reduced.gtau.nu();
    let alpha = reduced.alpha;

    // solvability: every l = 0 slice of G^tau must vanish (oddness in phi)
    let mut h = reduced.gtau.clone();
    for (m, c) in reduced.gtau.iter_modes() {
        let (l, j) = (&m[..nu], m[nu]);
        if l.iter().all(|&v| v == 0) {
            if c.norm() > GTAU_MEAN_TOL {
                return Err(Error::Mean { mean: c.norm(), tol: GTAU_MEAN_TOL });
            }
            h.set_coeff(l, j, Complex64::new(0.0, 0.0))?;
            continue;
        }
        let div = w.dot(l);
        if div.abs() < crate::DEFAULT_RESONANCE_TOL {
            return Err(Error::SmallDivisor {
                l: l.to_vec(),
                j,
                divisor: div.abs(),
                tol: crate::DEFAULT_RESONANCE_TOL,
            });
        }
        h.set_coeff(l, j, c / Complex64::new(0.0, div))?;
    }

    let p = on_grid_single(&h, |v| (v / (2.0 * alpha * alpha)).exp())?;
    let p_r = p.derivative(Dir::X);
    // G2R = -2 P^{-1} d_R P
    let g2r = on_grid(&[&p, &p_r], |v| Ok(-2.0 * v[1] / v[0]))?;
    // GP = -2 (d_R P)^2 / P + (-alpha^2 d_tau^2 + d_R^2 - G^R d_R) P
    let qp = p
        .omega_grad_phi(&w.omega)
        .omega_grad_phi(&w.omega)
        .scale(-alpha * alpha)
        .add(&p_r.derivative(Dir::X))?
        .sub(&reduced.gr.product(&p_r)?)?;
    let gp = on_grid(&[&p, &p_r], |v| Ok(-2.0 * v[1] * v[1] / v[0]))?.add(&qp)?;

    let relabeled_gr = reduced.gr.sub(&g2r)?;
    let relabeled_g = reduced.g.add(&gp)?;

    Ok(ReducedKG {
        stage: ReduceStage::TimeRemoved,
        alpha,
        mass: reduced.mass,
        gr: reduced.gr.clone(),
        gtau: reduced.gtau.clone(),
        g: reduced.g.clone(),
        p: Some(p),
        g2_r: Some(relabeled_gr),
        g2: Some(relabeled_g),
    })
}

fn on_grid_single(f: &TorusFunction, op: impl Fn(f64) -> f64) -> Result<TorusFunction> {
    on_grid(&[f], |v| Ok(op(v[0])))
}

// ----------------------------------------------------------------------
// operator application and manufactured-solution checks
// ----------------------------------------------------------------------

/// `(-alpha^2 (w.d_phi)^2 + d_R^2 - m) h` on torus representatives.
pub fn box_operator(h: &TorusFunction, alpha: f64, mass: f64, w: &FrequencyVector) -> TorusFunction {
    let tt = h.omega_grad_phi(&w.omega).omega_grad_phi(&w.omega).scale(-alpha * alpha);
    let xx = h.derivative(Dir::X).derivative(Dir::X);
    tt.add(&xx).unwrap().add(&h.scale(-mass)).unwrap()
}

/// `L1 h = box h - G^R d_R h - G^tau d_tau h`.
pub fn apply_l1(rk: &ReducedKG, h: &TorusFunction, w: &FrequencyVector) -> Result<TorusFunction> {
    let base = box_operator(h, rk.alpha, rk.mass, w);
    base.sub(&rk.gr.product(&h.derivative(Dir::X))?)?
        .sub(&rk.gtau.product(&h.omega_grad_phi(&w.omega))?)
}

/// `L2 h = box h - G^R d_R h`.
pub fn apply_l2(rk: &ReducedKG, h: &TorusFunction, w: &FrequencyVector) -> Result<TorusFunction> {
    let base = box_operator(h, rk.alpha, rk.mass, w);
    base.sub(&rk.gr.product(&h.derivative(Dir::X))?)
}

/// Grid-sup residual of the time-removal operator identity
/// `L2(P h) - [P L1 h - G2R d_R(P h) + GP h]`.
pub fn time_removal_identity_residual(
    rk: &ReducedKG,
    h: &TorusFunction,
    w: &FrequencyVector,
) -> Result<f64> {
    let p = rk.p.as_ref().ok_or_else(|| Error::Shape("stage is not time_removed".into()))?;
    // recover G2R and GP from the relabeled pair
    let g2r = rk.gr.sub(rk.g2_r.as_ref().unwrap())?;
    let gp = rk.g2.as_ref().unwrap().sub(&rk.g)?;

    let ph = p.product(h)?;
    let lhs = apply_l2(rk, &ph, w)?;
    let rhs = p
        .product(&apply_l1(rk, h, w)?)?
        .sub(&g2r.product(&ph.derivative(Dir::X))?)?
        .add(&gp.product(h)?)?;
    Ok(lhs.sub(&rhs)?.linf_norm())
}

/// LHS of the original Klein-Gordon equation on a torus representative.
pub fn kg_lhs(coeffs: &KGCoefficients, psi: &TorusFunction, w: &FrequencyVector) -> Result<TorusFunction> {
    let psi_t = psi.omega_grad_phi(&w.omega);
    let psi_tt = psi_t.omega_grad_phi(&w.omega);
    let psi_x = psi.derivative(Dir::X);
    let psi_xx = psi_x.derivative(Dir::X);
    psi_tt
        .sub(&psi_xx)?
        .add(&psi.scale(coeffs.mass))?
        .add(&coeffs.bxx.product(&psi_xx)?)?
        .add(&coeffs.bx.product(&psi_x)?)?
        .add(&coeffs.bt.product(&psi_t)?)?
        .add(&coeffs.b.product(psi)?)
}

/// LHS-minus-RHS of the reduced equation for a test function of the new
/// variables: `box phi - G^R d_R phi - G^tau d_tau phi - G phi`.
pub fn reduced_residual(rk: &ReducedKG, phi: &TorusFunction, w: &FrequencyVector) -> Result<TorusFunction> {
    apply_l1(rk, phi, w)?.sub(&rk.g.product(phi)?)
}

/// The two-sided manufactured identity behind the coefficient transport:
/// for any band-limited `phi` with `psi = phi o C`,
///
/// ```text
/// box phi - G.R/tau/0-terms(phi) = -O^2 [ (KG_LHS(psi)/A) o C^{-1} ]
/// ```
///
/// Returns the grid-sup of the difference of the two sides.
pub fn two_sided_residual(
    coeffs: &KGCoefficients,
    chart: &NullChart,
    rk: &ReducedKG,
    phi: &TorusFunction,
    w: &FrequencyVector,
) -> Result<f64> {
    let psi = chart.pull(phi)?;
    let lhs = reduced_residual(rk, phi, w)?;
    let kg = kg_lhs(coeffs, &psi, w)?;
    let (a, _, _, _) = geometric_split(coeffs, w)?;
    let kg_over_a = on_grid(&[&kg, &a], |v| Ok(v[0] / v[1]))?;
    let rhs = chart.conformal_sq.product(&chart.push(&kg_over_a)?)?.scale(-1.0);
    Ok(lhs.sub(&rhs)?.linf_norm())
}
