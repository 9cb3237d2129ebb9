//! Diophantine conditions, small-divisor transport inversion, and sampled
//! measure estimates for the good frequency set.
//!
//! The conditions have the form `|w.l + m j| > 2 gamma / <l,j>^iota` for all
//! `(l, j) != 0`; solvers divide by exactly these divisors, so the scan
//! cutoff must cover every mode a solver will touch (`2N` by default).

use serde::{Deserialize, Serialize};

use crate::torus::mode_bracket;
use crate::{Error, Result, SobolevIndex, TorusFunction, DEFAULT_RESONANCE_TOL};

/// Frequency vector with its diophantine parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub omega: Vec<f64>,
    pub gamma: f64,
    pub iota: f64,
}

impl FrequencyVector {
    pub fn new(omega: Vec<f64>, gamma: f64) -> Self {
        let nu = omega.len();
        FrequencyVector { omega, gamma, iota: crate::default_iota(nu) }
    }

    /// Golden-ratio based frequency: `(1+sqrt5)/2` in the first component,
    /// quadratic-irrational shifts in the rest.
    pub fn golden(nu: usize, gamma: f64) -> Self {
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let omega = (0..nu).map(|k| phi + k as f64 * 2.0f64.sqrt()).collect();
        Self::new(omega, gamma)
    }

    pub fn nu(&self) -> usize {
        self.omega.len()
    }

    pub fn dot(&self, l: &[i64]) -> f64 {
        self.omega.iter().zip(l).map(|(w, &c)| w * c as f64).sum()
    }
}

/// Outcome of an exhaustive diophantine scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiophReport {
    pub passed: bool,
    pub worst_mode: (Vec<i64>, i64),
    /// `|w.l + m j| <l,j>^iota / (2 gamma)` at the worst mode; > 1 iff passed.
    pub worst_ratio: f64,
    pub scan_cutoff: usize,
}

/// Exhaustively scan `0 < max(|l|, |j|) <= mode_cutoff` and report the worst
/// ratio of `|w.l + m j|` against the diophantine threshold. Deterministic.
pub fn check_diophantine(w: &FrequencyVector, m: f64, mode_cutoff: usize) -> DiophReport {
    let nu = w.nu();
    let n = mode_cutoff as i64;
    let mut worst_ratio = f64::INFINITY;
    let mut worst_mode = (vec![0i64; nu], 0i64);

    // iterate the (nu+1)-box via an odometer
    let mut idx = vec![-n; nu + 1];
    loop {
        if idx.iter().any(|&c| c != 0) {
            let l = &idx[..nu];
            let j = idx[nu];
            let div = (w.dot(l) + m * j as f64).abs();
            let mut bracket_arg = l.to_vec();
            bracket_arg.push(j);
            let thresh = 2.0 * w.gamma / mode_bracket(&bracket_arg).powf(w.iota);
            let ratio = div / thresh;
            if ratio < worst_ratio {
                worst_ratio = ratio;
                worst_mode = (l.to_vec(), j);
            }
        }
        // odometer increment
        let mut a = nu + 1;
        loop {
            if a == 0 {
                return DiophReport { passed: worst_ratio > 1.0, worst_mode, worst_ratio, scan_cutoff: mode_cutoff };
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] <= n {
                break;
            }
            idx[a] = -n;
        }
    }
}

/// Mean tolerance below which a right-hand side counts as solvable.
pub const MEAN_TOL: f64 = 1e-10;

/// Solve `w . d_phi f + m d_x f = g` for the unique zero-mean `f`.
///
/// Mode-wise `f_{l,j} = g_{l,j} / (i (w.l + m j))`. The right-hand side must
/// have (numerically) zero mean; divisors below the resonance tolerance are
/// an error rather than silently amplified.
pub fn invert_transport(g: &TorusFunction, w: &FrequencyVector, m: f64) -> Result<TorusFunction> {
    invert_transport_tol(g, w, m, DEFAULT_RESONANCE_TOL)
}

pub fn invert_transport_tol(
    g: &TorusFunction,
    w: &FrequencyVector,
    m: f64,
    resonance_tol: f64,
) -> Result<TorusFunction> {
    if g.nu() != w.nu() {
        return Err(Error::Shape("frequency vector dimension mismatch".into()));
    }
    let mean = g.mean().norm();
    if mean > MEAN_TOL {
        return Err(Error::Mean { mean, tol: MEAN_TOL });
    }
    let nu = g.nu();
    let mut f = g.clone();
    for (mode, c) in g.iter_modes() {
        let (l, j) = (&mode[..nu], mode[nu]);
        if mode.iter().all(|&v| v == 0) {
            f.set_coeff(l, j, rustfft::num_complex::Complex64::new(0.0, 0.0))?;
            continue;
        }
        if c.norm() == 0.0 {
            continue;
        }
        let div = w.dot(l) + m * j as f64;
        if div.abs() < resonance_tol {
            return Err(Error::SmallDivisor {
                l: l.to_vec(),
                j,
                divisor: div.abs(),
                tol: resonance_tol,
            });
        }
        // divide by i * div
        let val = c / rustfft::num_complex::Complex64::new(0.0, div);
        f.set_coeff(l, j, val)?;
    }
    Ok(f)
}

/// Apply the forward operator `w . d_phi + m d_x`.
pub fn apply_transport(f: &TorusFunction, w: &FrequencyVector, m: f64) -> TorusFunction {
    let dphi = f.omega_grad_phi(&w.omega);
    let dx = f.derivative(crate::torus::Dir::X).scale(m);
    dphi.add(&dx).unwrap()
}

/// One row of a sampled measure estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureRow {
    pub gamma: f64,
    pub fraction_excluded: f64,
    pub samples: usize,
    pub cutoff: usize,
}

/// Estimate `|O_0 \ O_inf^{2 gamma}| / |O_0|` by scanning a fixed
/// low-discrepancy sample of the box `O_0` for each `gamma`.
///
/// The same sample set is used for every `gamma`, so the excluded sets are
/// nested and the fractions are exactly monotone in `gamma`. Sampling uses a
/// seeded Kronecker (golden-ratio) sequence for reproducibility; evaluation
/// is parallel with a deterministic (integer count) reduction.
pub fn measure_complement(
    box_lo: &[f64],
    box_hi: &[f64],
    alpha_fn: impl Fn(&[f64]) -> f64 + Sync,
    gamma_list: &[f64],
    iota: f64,
    samples: usize,
    cutoff: usize,
    seed: u64,
) -> Vec<MeasureRow> {
    assert_eq!(box_lo.len(), box_hi.len());
    let nu = box_lo.len();
    let points: Vec<Vec<f64>> = kronecker_sequence(nu, samples, seed)
        .into_iter()
        .map(|u| {
            (0..nu).map(|d| box_lo[d] + (box_hi[d] - box_lo[d]) * u[d]).collect()
        })
        .collect();

    // worst divisor margin per sample: min over modes of |w.l + m j| <l,j>^iota
    let margins: Vec<f64> = crate::par::map_indexed(points.len(), |i| {
        let omega = &points[i];
        let m = alpha_fn(omega);
        let w = FrequencyVector { omega: omega.clone(), gamma: 1.0, iota };
        let rep = check_diophantine(&w, m, cutoff);
        // margin = |div| <l,j>^iota; excluded iff margin <= 2 gamma
        rep.worst_ratio * 2.0 * w.gamma
    });

    gamma_list
        .iter()
        .map(|&gamma| {
            let excluded = margins.iter().filter(|&&m| m <= 2.0 * gamma).count();
            MeasureRow {
                gamma,
                fraction_excluded: excluded as f64 / samples as f64,
                samples,
                cutoff,
            }
        })
        .collect()
}

/// CSV emission for measure scans: `gamma,fraction_excluded,samples,cutoff`.
pub fn measure_rows_to_csv(rows: &[MeasureRow]) -> String {
    let mut out = String::from("gamma,fraction_excluded,samples,cutoff\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.gamma, r.fraction_excluded, r.samples, r.cutoff));
    }
    out
}

/// Deterministic low-discrepancy points in `[0,1)^d` (Kronecker sequence on
/// square-root irrationals, offset by a seeded shift).
fn kronecker_sequence(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let primes = [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29];
    let alphas: Vec<f64> = (0..d).map(|k| (primes[k % primes.len()] as f64).sqrt().fract()).collect();
    let shift: Vec<f64> = (0..d)
        .map(|k| {
            let h = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(k as u64 * 0x517cc1b727220a95);
            (h >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect();
    (0..n)
        .map(|i| {
            (0..d).map(|k| ((i + 1) as f64 * alphas[k] + shift[k]).fract()).collect()
        })
        .collect()
}

/// Fitted constant for the small-divisor loss bound
/// `||invert_transport(g)||_s <= C gamma^{-1} ||g||_{s+iota}` over samples.
pub fn transport_loss_ratio(
    g: &TorusFunction,
    w: &FrequencyVector,
    m: f64,
    s: SobolevIndex,
) -> Result<f64> {
    let f = invert_transport(g, w, m)?;
    let lhs = f.sobolev_norm(s);
    let rhs = g.sobolev_norm(SobolevIndex(s.0 + w.iota)) / w.gamma;
    Ok(lhs / rhs)
}
