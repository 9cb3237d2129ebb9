//! Leapfrog evolution of the geometric wave equation
//! `d_t(A^{-1} d_t psi) = d_x(A d_x psi)`, the dispersion relation of the
//! reduced (no-parity) metric, and the almost-periodicity check that
//! projects evolved data onto the dispersion modes in chart coordinates.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::chart::NullChart;
use crate::dioph::FrequencyVector;
use crate::torus::TorusFunction;
use crate::{Error, Result};

/// CFL safety factor of the stability guard `dt <= 0.25 dx min(A)/max(A)`.
pub const CFL_FACTOR: f64 = 0.25;

/// Norm blowup limit treated as divergence.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// uniform spatial grid size (power of two recommended)
    pub grid_size: usize,
    /// store dense spectral snapshots while `t <= snapshot_until`
    pub snapshot_until: f64,
    /// record norms every `norm_stride` steps
    pub norm_stride: usize,
    /// Sobolev index `s`: norms tracked are `(|psi|_{s+1}, |d_t psi|_s)`
    pub s: f64,
    /// spectral cap for stored snapshots
    pub mode_cap: usize,
}

impl EvolveOptions {
    pub fn new(t_end: f64, dt: f64, grid_size: usize) -> Self {
        EvolveOptions {
            t_end,
            dt,
            grid_size,
            snapshot_until: 0.0,
            norm_stride: 50,
            s: crate::default_s0(1),
            mode_cap: grid_size / 3,
        }
    }
}

/// Spectral snapshots and norm history of one evolution. Time series leave
/// the program as CSV (`norms_to_csv`); the spectral snapshots are working
/// data for the projection check.
#[derive(Debug, Clone)]
pub struct EvolutionState {
    /// times of the dense snapshots
    pub snapshot_times: Vec<f64>,
    /// x-Fourier coefficients of `psi`, modes `-mode_cap ..= mode_cap`
    pub psi_coeffs: Vec<Vec<Complex64>>,
    /// same for `d_t psi`
    pub dpsi_coeffs: Vec<Vec<Complex64>>,
    /// `(t, |psi|_{s+1}, |d_t psi|_s)` rows
    pub norms: Vec<(f64, f64, f64)>,
    pub mode_cap: usize,
    pub dt: f64,
    pub s: f64,
}

impl EvolutionState {
    /// `sup_t (|psi|_{s+1} + |d_t psi|_s) / initial`.
    pub fn sup_norm_ratio(&self) -> f64 {
        let initial = self.norms[0].1 + self.norms[0].2;
        self.norms.iter().map(|r| (r.1 + r.2) / initial).fold(0.0, f64::max)
    }

    /// CSV rows `t,norm_psi_s1,norm_dpsi_s`.
    pub fn norms_to_csv(&self) -> String {
        let mut out = String::from("t,norm_psi_s1,norm_dpsi_s\n");
        for (t, a, b) in &self.norms {
            out.push_str(&format!("{t},{a},{b}\n"));
        }
        out
    }

    /// Evaluate a stored snapshot at an off-grid spatial point.
    fn eval_snapshot(&self, idx: usize, x: f64) -> f64 {
        let cap = self.mode_cap as i64;
        let coeffs = &self.psi_coeffs[idx];
        let step = Complex64::from_polar(1.0, x);
        let mut phase = Complex64::from_polar(1.0, -(cap as f64) * x);
        let mut acc = Complex64::new(0.0, 0.0);
        for c in coeffs {
            acc += c * phase;
            phase *= step;
        }
        acc.re
    }
}

fn fft_forward(data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(data.len()).process(data);
}

fn fft_inverse(data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(data.len()).process(data);
}

/// Spectral `d_x` on a periodic real grid.
fn spectral_dx(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut work: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut work);
    for (b, z) in work.iter_mut().enumerate() {
        let k = if b <= n / 2 { b as i64 } else { b as i64 - n as i64 };
        // the unpaired Nyquist mode has no odd derivative
        let k = if 2 * b == n { 0 } else { k };
        *z *= Complex64::new(0.0, k as f64);
    }
    fft_inverse(&mut work);
    work.iter().map(|z| z.re / n as f64).collect()
}

fn spectral_coeffs(values: &[f64], cap: usize) -> Vec<Complex64> {
    let n = values.len();
    let mut work: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut work);
    let mut out = Vec::with_capacity(2 * cap + 1);
    for j in -(cap as i64)..=cap as i64 {
        let b = j.rem_euclid(n as i64) as usize;
        out.push(work[b] / n as f64);
    }
    out
}

fn hs_norm(coeffs: &[Complex64], cap: usize, s: f64) -> f64 {
    let mut acc = 0.0;
    for (i, c) in coeffs.iter().enumerate() {
        let j = i as i64 - cap as i64;
        let w = (j.abs().max(1)) as f64;
        acc += w.powf(2.0 * s) * c.norm_sqr();
    }
    acc.sqrt()
}

/// Precomputed per-angle-mode spatial profiles of `A`, so that each step
/// evaluates `A(t, .)` as a short phase sum.
struct CoefficientSlices {
    /// (angle rate `w.l`, spatial profile on the grid)
    terms: Vec<(f64, Vec<Complex64>)>,
}

impl CoefficientSlices {
    fn new(a_fun: &TorusFunction, w: &FrequencyVector, grid_size: usize) -> Self {
        let nu = a_fun.nu();
        // group modes by the angle index l; profile_l(x) = sum_j a_{l,j} e^{ijx}
        let mut by_l: std::collections::BTreeMap<Vec<i64>, Vec<(i64, Complex64)>> =
            std::collections::BTreeMap::new();
        for (m, c) in a_fun.iter_modes() {
            if c.norm() == 0.0 {
                continue;
            }
            by_l.entry(m[..nu].to_vec()).or_default().push((m[nu], c));
        }
        let terms = by_l
            .into_iter()
            .map(|(l, modes)| {
                let rate = w.dot(&l);
                let mut profile = vec![Complex64::new(0.0, 0.0); grid_size];
                for (k, p) in profile.iter_mut().enumerate() {
                    let x = 2.0 * std::f64::consts::PI * k as f64 / grid_size as f64;
                    for &(j, c) in &modes {
                        *p += c * Complex64::from_polar(1.0, j as f64 * x);
                    }
                }
                (rate, profile)
            })
            .collect();
        CoefficientSlices { terms }
    }

    fn eval(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (rate, profile) in &self.terms {
            let phase = Complex64::from_polar(1.0, rate * t);
            for (k, p) in profile.iter().enumerate() {
                out[k] += (p * phase).re;
            }
        }
    }
}

/// Leapfrog (kick-drift-kick) evolution of `square_g psi = 0` with the
/// momentum `pi = A^{-1} d_t psi`:
///
/// ```text
/// pi  += dt/2 . d_x(A(t) d_x psi)
/// psi += dt   . A(t + dt/2) pi
/// pi  += dt/2 . d_x(A(t + dt) d_x psi)
/// ```
///
/// `f`, `g` are the initial `psi` and `d_t psi` on the spatial grid.
pub fn evolve_wave(
    a_fun: &TorusFunction,
    w: &FrequencyVector,
    f: &[f64],
    g: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionState> {
    let n = opts.grid_size;
    if f.len() != n || g.len() != n {
        return Err(Error::Shape(format!("initial data must live on the {n}-point grid")));
    }
    let slices = CoefficientSlices::new(a_fun, w, n);
    let mut a_now = vec![0.0; n];
    let mut a_half = vec![0.0; n];
    slices.eval(0.0, &mut a_now);

    let (amin, amax) = a_min_max(a_fun)?;
    if amin <= 0.0 {
        return Err(Error::DegenerateMetric(format!("A attains {amin:.3e}")));
    }
    let dx = 2.0 * std::f64::consts::PI / n as f64;
    let dt_max = CFL_FACTOR * dx * amin / amax;
    if opts.dt > dt_max {
        return Err(Error::Stability(format!(
            "dt = {:.3e} violates the CFL guard {dt_max:.3e}",
            opts.dt
        )));
    }

    let mut psi = f.to_vec();
    let mut pi: Vec<f64> = g.iter().zip(&a_now).map(|(&gt, &a)| gt / a).collect();

    let steps = (opts.t_end / opts.dt).round() as usize;
    let mut state = EvolutionState {
        snapshot_times: Vec::new(),
        psi_coeffs: Vec::new(),
        dpsi_coeffs: Vec::new(),
        norms: Vec::new(),
        mode_cap: opts.mode_cap,
        dt: opts.dt,
        s: opts.s,
    };

    let record = |t: f64, psi: &[f64], dpsi: &[f64], state: &mut EvolutionState, dense: bool| {
        let pc = spectral_coeffs(psi, opts.mode_cap);
        let dc = spectral_coeffs(dpsi, opts.mode_cap);
        let np = hs_norm(&pc, opts.mode_cap, opts.s + 1.0);
        let nd = hs_norm(&dc, opts.mode_cap, opts.s);
        state.norms.push((t, np, nd));
        if dense {
            state.snapshot_times.push(t);
            state.psi_coeffs.push(pc);
            state.dpsi_coeffs.push(dc);
        }
        np + nd
    };

    let dpsi0: Vec<f64> = pi.iter().zip(&a_now).map(|(&p, &a)| p * a).collect();
    record(0.0, &psi, &dpsi0, &mut state, opts.snapshot_until > 0.0);

    for step in 0..steps {
        let t = step as f64 * opts.dt;
        half_kick(&mut pi, &psi, &a_now, opts.dt / 2.0);
        slices.eval(t + opts.dt / 2.0, &mut a_half);
        for k in 0..n {
            psi[k] += opts.dt * a_half[k] * pi[k];
        }
        slices.eval(t + opts.dt, &mut a_now);
        half_kick(&mut pi, &psi, &a_now, opts.dt / 2.0);

        let t_next = t + opts.dt;
        let dense = t_next <= opts.snapshot_until + 1e-12;
        let norms_due = (step + 1) % opts.norm_stride == 0 || step + 1 == steps;
        if dense || norms_due {
            let dpsi: Vec<f64> = pi.iter().zip(&a_now).map(|(&p, &a)| p * a).collect();
            let total = record(t_next, &psi, &dpsi, &mut state, dense);
            if total > BLOWUP_LIMIT {
                return Err(Error::Diverged { norm: total, limit: BLOWUP_LIMIT, time: t_next });
            }
        }
    }
    Ok(state)
}

fn half_kick(pi: &mut [f64], psi: &[f64], a: &[f64], half_dt: f64) {
    let dpsi = spectral_dx(psi);
    let flux: Vec<f64> = dpsi.iter().zip(a).map(|(&d, &av)| av * d).collect();
    let div = spectral_dx(&flux);
    for (p, d) in pi.iter_mut().zip(div) {
        *p += half_dt * d;
    }
}

fn a_min_max(a_fun: &TorusFunction) -> Result<(f64, f64)> {
    let grid = a_fun.synthesize(2 * a_fun.cutoff() + 2)?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for z in &grid.data {
        min = min.min(z.re);
        max = max.max(z.re);
    }
    Ok((min, max))
}

/// Roots of the stated dispersion quadratic
/// `rho+ rho- w^2 - 2 (rho+ - rho-) k w - k^2 = 0`.
///
/// Returns `(w_+, w_-)` (larger root first); the discriminant
/// `4 (rho+ - rho-)^2 k^2 + 4 rho+ rho- k^2` is positive for `k != 0`.
pub fn dispersion_roots(rho_plus: f64, rho_minus: f64, k: f64) -> (f64, f64) {
    let a = rho_plus * rho_minus;
    let b = -2.0 * (rho_plus - rho_minus) * k;
    let c = -k * k;
    quadratic_roots(a, b, c)
}

/// Dispersion of the *constructed* chart metric: from
/// `u = tau/rho- - R`, `v = tau/rho+ + R` the massless null modes carry the
/// frequencies `(k/rho+, -k/rho-)` (the roots of
/// `rho+ rho- w^2 + (rho+ - rho-) k w - k^2 = 0`). Coincides with
/// [`dispersion_roots`] when `rho+ = rho-`; the difference at distinct
/// roots is a recorded discrepancy of the stated quadratic.
pub fn dispersion_roots_metric(rho_plus: f64, rho_minus: f64, k: f64) -> (f64, f64) {
    (k / rho_plus, -k / rho_minus)
}

/// Back-substitution residual of `w` in the stated quadratic.
pub fn dispersion_residual(rho_plus: f64, rho_minus: f64, k: f64, w: f64) -> f64 {
    (rho_plus * rho_minus * w * w - 2.0 * (rho_plus - rho_minus) * k * w - k * k).abs()
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> (f64, f64) {
    let disc = (b * b - 4.0 * a * c).sqrt();
    let (r1, r2) = if b == 0.0 {
        (disc / (2.0 * a), -disc / (2.0 * a))
    } else {
        let q = -0.5 * (b + b.signum() * disc);
        (q / a, c / q)
    };
    if r1 >= r2 {
        (r1, r2)
    } else {
        (r2, r1)
    }
}

/// Result of the almost-periodicity projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlmostPeriodicReport {
    /// unexplained energy fraction over all spatial modes
    pub residual_fraction: f64,
    /// per-|k| unexplained fractions
    pub per_mode: Vec<(usize, f64)>,
    pub tau_samples: usize,
    pub r_grid: usize,
}

/// Transform snapshots to `(tau, R)` through the chart and project each
/// spatial mode onto the two dispersion frequencies of the constructed
/// metric; reports the energy fraction the projection cannot explain.
///
/// `(tau, R)` values are reconstructed from the stored snapshots with an
/// 8-point Lagrange stencil in time and exact mode sums in space, so the
/// reconstruction error sits far below the projection tolerance.
pub fn almost_periodic_check(
    state: &EvolutionState,
    chart: &NullChart,
    r_grid: usize,
    k_max: usize,
) -> Result<AlmostPeriodicReport> {
    if state.snapshot_times.len() < 32 {
        return Err(Error::Shape("need dense snapshots for the projection".into()));
    }
    let w = &chart.omega;
    let dt = state.dt;
    let t0 = state.snapshot_times[0];
    let n_snap = state.snapshot_times.len();
    let sigma_max = chart.sigma.linf_norm();
    let stencil = 8usize;
    let margin = sigma_max + stencil as f64 * dt;

    // tau samples: snapshot times that keep the stencil in range
    let taus: Vec<f64> = state
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t - margin > t0 && t + margin < t0 + (n_snap - 1) as f64 * dt)
        .step_by(4)
        .collect();
    if taus.len() < 16 {
        return Err(Error::Shape("snapshot window too short for the tau sampling".into()));
    }

    // reconstruct psi'(tau, R) on the R-grid
    let rows: Vec<Vec<f64>> = crate::par::map_indexed(taus.len(), |mi| {
        let tau = taus[mi];
        let mut row = vec![0.0f64; r_grid];
        for (kr, val) in row.iter_mut().enumerate() {
            let big_r = 2.0 * std::f64::consts::PI * kr as f64 / r_grid as f64;
            let mut angles: Vec<f64> = w.omega.iter().map(|&wi| wi * tau).collect();
            angles.push(big_r);
            let sigma = chart.sigma.eval_at(&angles).re;
            let chi = chart.chi.eval_at(&angles).re;
            let t_star = tau + sigma;
            let x_star = big_r + chi;
            let pos = (t_star - t0) / dt;
            let base = (pos.floor() as isize - 3).clamp(0, n_snap as isize - 8) as usize;
            let mut acc = 0.0;
            for a in 0..stencil {
                let idx = base + a;
                let mut weight = 1.0;
                for b in 0..stencil {
                    if b != a {
                        weight *= (pos - (base + b) as f64) / (a as f64 - b as f64);
                    }
                }
                acc += weight * state.eval_snapshot(idx, x_star);
            }
            *val = acc;
        }
        row
    });

    // spatial FFT per row -> c_k(tau)
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(r_grid);
    let mut coeffs: Vec<Vec<Complex64>> = Vec::with_capacity(rows.len());
    for row in &rows {
        let mut work: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut work);
        coeffs.push(work.iter().map(|z| z / r_grid as f64).collect());
    }

    // least-squares fit per spatial mode
    let mut total_energy = 0.0;
    let mut total_residual = 0.0;
    let mut per_mode = Vec::new();
    let k_cap = k_max.min(r_grid / 2 - 1);
    for k in 0..=k_cap {
        let series: Vec<Complex64> = coeffs.iter().map(|c| c[k]).collect();
        let (wp, wm) = dispersion_roots_metric(chart.rho_plus, chart.rho_minus, k as f64);
        let residual = if k == 0 {
            // double root at k = 0: the affine-in-tau sector
            fit_residual(&taus, &series, &|_t| Complex64::new(1.0, 0.0), &|t| {
                Complex64::new(t, 0.0)
            })
        } else {
            fit_residual(
                &taus,
                &series,
                &|t| Complex64::from_polar(1.0, wp * t),
                &|t| Complex64::from_polar(1.0, wm * t),
            )
        };
        let energy: f64 = series.iter().map(|z| z.norm_sqr()).sum();
        total_energy += energy;
        total_residual += residual;
        per_mode.push((k, if energy > 0.0 { residual / energy } else { 0.0 }));
    }

    Ok(AlmostPeriodicReport {
        residual_fraction: if total_energy > 0.0 { total_residual / total_energy } else { 0.0 },
        per_mode,
        tau_samples: taus.len(),
        r_grid,
    })
}

/// Sum of squared residuals of the best fit `c(t) ~ a b1(t) + b b2(t)`.
fn fit_residual(
    ts: &[f64],
    series: &[Complex64],
    b1: &dyn Fn(f64) -> Complex64,
    b2: &dyn Fn(f64) -> Complex64,
) -> f64 {
    let mut g11 = Complex64::new(0.0, 0.0);
    let mut g12 = Complex64::new(0.0, 0.0);
    let mut g22 = Complex64::new(0.0, 0.0);
    let mut r1 = Complex64::new(0.0, 0.0);
    let mut r2 = Complex64::new(0.0, 0.0);
    for (&t, &c) in ts.iter().zip(series) {
        let e1 = b1(t);
        let e2 = b2(t);
        g11 += e1.conj() * e1;
        g12 += e1.conj() * e2;
        g22 += e2.conj() * e2;
        r1 += e1.conj() * c;
        r2 += e2.conj() * c;
    }
    let det = g11 * g22 - g12 * g12.conj();
    if det.norm() < 1e-14 {
        return series.iter().map(|z| z.norm_sqr()).sum();
    }
    let a = (g22 * r1 - g12 * r2) / det;
    let b = (g11 * r2 - g12.conj() * r1) / det;
    ts.iter()
        .zip(series)
        .map(|(&t, &c)| (c - a * b1(t) - b * b2(t)).norm_sqr())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{build_chart, solve_uv};
    use crate::straighten::StraightenConfig;

    fn lenient() -> StraightenConfig {
        StraightenConfig { smallness_threshold: 1e9, ..Default::default() }
    }

    fn grid_fn(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..n).map(|k| f(2.0 * std::f64::consts::PI * k as f64 / n as f64)).collect()
    }

    #[test]
    fn flat_eigenmode_keeps_energy_norms() {
        // A = 1, psi = cos t cos x: |psi|_{s+1}^2 + |d_t psi|_s^2 constant
        let a = TorusFunction::constant(1, 4, 1.0);
        let w = FrequencyVector::golden(1, 0.01);
        let n = 32;
        let mut opts = EvolveOptions::new(100.0, 1e-3, n);
        opts.norm_stride = 200;
        let f = grid_fn(n, |x| x.cos());
        let g = vec![0.0; n];
        let state = evolve_wave(&a, &w, &f, &g, &opts).unwrap();
        let e0 = state.norms[0].1.powi(2) + state.norms[0].2.powi(2);
        for (t, np, nd) in &state.norms {
            let e = np.powi(2) + nd.powi(2);
            assert!((e - e0).abs() < 1e-6 * e0, "t = {t}: energy drifted to {e} from {e0}");
        }
    }

    #[test]
    fn leapfrog_conserves_discrete_energy_to_dt2() {
        let a = TorusFunction::constant(1, 4, 1.0);
        let w = FrequencyVector::golden(1, 0.01);
        let n = 32;
        let f = grid_fn(n, |x| x.cos() + 0.3 * (2.0 * x).sin());
        let g = grid_fn(n, |x| 0.2 * x.sin());
        let mut drifts = Vec::new();
        for &dt in &[2e-3, 1e-3] {
            let mut opts = EvolveOptions::new(20.0, dt, n);
            opts.norm_stride = 100;
            let state = evolve_wave(&a, &w, &f, &g, &opts).unwrap();
            let e0 = state.norms[0].1.powi(2) + state.norms[0].2.powi(2);
            let drift = state
                .norms
                .iter()
                .map(|r| ((r.1.powi(2) + r.2.powi(2)) - e0).abs())
                .fold(0.0, f64::max);
            drifts.push(drift);
        }
        // halving dt divides the energy wobble by ~4
        let ratio = drifts[0] / drifts[1];
        assert!(ratio > 2.5 && ratio < 6.0, "O(dt^2) scaling violated: {ratio}");
    }

    #[test]
    fn cfl_violation_rejected() {
        let a = TorusFunction::constant(1, 4, 1.0);
        let w = FrequencyVector::golden(1, 0.01);
        let opts = EvolveOptions::new(1.0, 0.5, 32);
        let f = vec![0.0; 32];
        let g = vec![0.0; 32];
        assert!(matches!(evolve_wave(&a, &w, &f, &g, &opts), Err(Error::Stability(_))));
    }

    #[test]
    fn dispersion_quadratic_examples() {
        // flat: rho = 1, k = 1 -> w = +-1
        let (wp, wm) = dispersion_roots(1.0, 1.0, 1.0);
        assert!((wp - 1.0).abs() < 1e-15 && (wm + 1.0).abs() < 1e-15);
        // rho+ = 2, rho- = 1, k = 1: 2w^2 - 2w - 1 = 0 -> (1 +- sqrt3)/2
        let (wp, wm) = dispersion_roots(2.0, 1.0, 1.0);
        let s3 = 3f64.sqrt();
        assert!((wp - (1.0 + s3) / 2.0).abs() < 1e-14);
        assert!((wm - (1.0 - s3) / 2.0).abs() < 1e-14);
        for k in [1.0, 7.0, 64.0] {
            let (a, b) = dispersion_roots(1.7, 0.9, k);
            assert!(dispersion_residual(1.7, 0.9, k, a) < 1e-12 * k * k);
            assert!(dispersion_residual(1.7, 0.9, k, b) < 1e-12 * k * k);
        }
    }

    #[test]
    fn dispersion_asymptotic_slope() {
        // |w/k| -> 1/sqrt(rho+ rho-) for near-equal rhos
        let (rp, rm) = (1.003, 0.998);
        let k = 64.0;
        let (wp, _) = dispersion_roots(rp, rm, k);
        let target = 1.0 / (rp * rm).sqrt();
        assert!((wp / k - target).abs() <= 0.02, "slope {} vs {target}", wp / k);
    }

    #[test]
    fn metric_dispersion_matches_quadratic_for_equal_rhos() {
        let (wp, wm) = dispersion_roots_metric(1.01, 1.01, 3.0);
        let (qp, qm) = dispersion_roots(1.01, 1.01, 3.0);
        assert!((wp - qp).abs() < 1e-14 && (wm - qm).abs() < 1e-14);
    }

    #[test]
    fn truncated_chart_degrades_projection_monotonically() {
        use crate::chart::build_chart_no_parity;
        // genuinely no-parity metric, evolved once; charts of decreasing
        // cutoff explain less of the data
        let eps = 0.05;
        let w = FrequencyVector::golden(1, 0.01);
        let n = 64;
        let mut opts = EvolveOptions::new(30.0, 2e-3, n);
        opts.snapshot_until = 30.0;
        opts.mode_cap = 10;
        let f = grid_fn(n, |x| x.cos() + 0.3 * (2.0 * x).cos());
        let g = grid_fn(n, |x| 0.2 * x.sin());

        let mut residuals = Vec::new();
        for cutoff in [16usize, 3, 2] {
            let a = TorusFunction::from_modes(
                1,
                cutoff,
                true,
                &[
                    (vec![0], 0, Complex64::new(1.0, 0.0)),
                    (vec![1], 1, Complex64::new(eps / 2.0, 0.0)),
                ],
            )
            .unwrap();
            let chart = build_chart_no_parity(&a, &w, &lenient()).unwrap();
            // evolve with the full-resolution metric regardless of the chart
            let a_full = a.with_cutoff(16);
            let state = evolve_wave(&a_full, &w, &f, &g, &opts).unwrap();
            let rep = almost_periodic_check(&state, &chart, 32, 4).unwrap();
            residuals.push(rep.residual_fraction);
        }
        assert!(
            residuals[0] < residuals[1] && residuals[1] < residuals[2],
            "projection residual must grow under chart truncation: {residuals:?}"
        );
    }

    #[test]
    fn flat_case_projection_residual_vanishes() {
        let a = TorusFunction::constant(1, 8, 1.0);
        let w = FrequencyVector::golden(1, 0.01);
        let (u, v, m) = solve_uv(&a, &w, &lenient()).unwrap();
        let chart = build_chart(&a, &u, &v, m, &w).unwrap();
        let n = 64;
        let mut opts = EvolveOptions::new(40.0, 1e-3, n);
        opts.snapshot_until = 40.0;
        opts.mode_cap = 8;
        let f = grid_fn(n, |x| x.cos() + 0.5 * (2.0 * x).cos());
        let g = grid_fn(n, |x| 0.3 * x.sin());
        let state = evolve_wave(&a, &w, &f, &g, &opts).unwrap();
        let rep = almost_periodic_check(&state, &chart, 32, 4).unwrap();
        assert!(rep.residual_fraction < 1e-10, "flat residual {:.3e}", rep.residual_fraction);
    }
}
