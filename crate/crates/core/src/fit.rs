//! Least-squares fits used to *measure* quantities the analysis only bounds:
//! pseudo-differential orders from log-log decay, and fitted constants for
//! tame-estimate shadows.

use serde::{Deserialize, Serialize};

/// Ordinary least squares line `y = a + b x`; returns `(a, b, rms_residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    assert!(n >= 2.0, "need at least two points");
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (a + b * x);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    (a, b, rms)
}

/// Decay-fitted pseudo-differential order of an operator, from
/// `log(size)` vs `log <xi>` over the stated window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub fitted_order: f64,
    pub fit_residual: f64,
    /// inclusive `<xi>` window the fit used
    pub window: (usize, usize),
}

impl OrderEstimate {
    /// For operators that vanish on the truncation.
    pub fn zero_operator() -> Self {
        OrderEstimate { fitted_order: f64::NEG_INFINITY, fit_residual: 0.0, window: (0, 0) }
    }

    pub fn is_zero_operator(&self) -> bool {
        self.fitted_order == f64::NEG_INFINITY
    }
}

/// Fit an order from per-frequency sizes `sizes[k] ~ C <k>^order`, where
/// `sizes` is indexed by `|xi| = 0..=max`. Frequencies below `min_xi` are
/// skipped (the bracket is flat there), as are empty bins.
pub fn fit_order(sizes: &[f64], min_xi: usize) -> OrderEstimate {
    let floor = 1e-14;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut hi = 0usize;
    for (k, &s) in sizes.iter().enumerate() {
        if k < min_xi || s < floor {
            continue;
        }
        xs.push((k as f64).ln());
        ys.push(s.ln());
        hi = k;
    }
    if xs.len() < 2 {
        return OrderEstimate::zero_operator();
    }
    let (_, slope, rms) = linear_fit(&xs, &ys);
    OrderEstimate { fitted_order: slope, fit_residual: rms, window: (min_xi, hi) }
}

/// One sampled evaluation of a tame-estimate shadow `lhs <= C rhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedRatio {
    pub label: String,
    pub scale: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}
