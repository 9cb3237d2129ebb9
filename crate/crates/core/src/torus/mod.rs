//! Truncated Fourier calculus on `T^{nu+1}`.
//!
//! A [`TorusFunction`] stores the complex Fourier coefficients of a function
//! of `(phi, x)` with all mode indices bounded by the cutoff `N`
//! (`|l_i| <= N`, `|j| <= N`). The mode `(l, j)` multiplies
//! `e^{i(l.phi + j x)}`. Real functions keep exact conjugate symmetry
//! `f_{-l,-j} = conj(f_{l,j})`: every write mirrors the canonical half-space
//! onto the other half, so the symmetry never drifts.
//!
//! Sobolev norms use the max bracket `<l, j> = max(1, |l|, |j|)` of the
//! frequency vector (sup norm over components), which changes norm values
//! relative to the Euclidean bracket; everything downstream is consistent
//! with this convention.

mod diffeo;
mod grid;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use diffeo::{compose_diffeo, invert_diffeo, Displacement};
pub use grid::{fft_all_axes, Grid};

/// Divisors below this are treated as exact resonances rather than
/// amplified into 1e14-sized coefficients.
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-14;

/// Coefficients smaller than this are dropped when serializing.
pub const SERIALIZE_EPS: f64 = 1e-16;

/// Parity of a function along one reflection (`phi -> -phi` acts on all
/// angle components at once; `x -> -x` on the last axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    None,
}

/// Declared parity class in `phi` and `x` separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParityClass {
    pub phi: Parity,
    pub x: Parity,
}

impl ParityClass {
    pub const fn new(phi: Parity, x: Parity) -> Self {
        ParityClass { phi, x }
    }
    pub const EVEN_EVEN: ParityClass = ParityClass::new(Parity::Even, Parity::Even);
    pub const EVEN_ODD: ParityClass = ParityClass::new(Parity::Even, Parity::Odd);
    pub const ODD_EVEN: ParityClass = ParityClass::new(Parity::Odd, Parity::Even);
    pub const ODD_ODD: ParityClass = ParityClass::new(Parity::Odd, Parity::Odd);
}

/// Sobolev regularity index with the paper's max-bracket weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevIndex(pub f64);

impl SobolevIndex {
    pub fn s(&self) -> f64 {
        self.0
    }
}

/// Differentiation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    /// One of the `nu` angle variables, zero-based.
    Phi(usize),
    /// The spatial angle.
    X,
}

/// A truncated Fourier series on `T^{nu+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TorusFunctionDto", try_from = "TorusFunctionDto")]
pub struct TorusFunction {
    nu: usize,
    cutoff: usize,
    is_real: bool,
    /// Dense box of `(2N+1)^(nu+1)` coefficients, row-major over axes
    /// `phi_1 .. phi_nu, x`, each axis indexed by `m + N`.
    coeffs: Vec<Complex64>,
}

impl TorusFunction {
    pub fn zero(nu: usize, cutoff: usize, is_real: bool) -> Self {
        assert!(nu >= 1, "need at least one angle variable");
        assert!(cutoff >= 1, "cutoff must be >= 1");
        let side = 2 * cutoff + 1;
        TorusFunction {
            nu,
            cutoff,
            is_real,
            coeffs: vec![Complex64::new(0.0, 0.0); side.pow(nu as u32 + 1)],
        }
    }

    pub fn constant(nu: usize, cutoff: usize, value: f64) -> Self {
        let mut f = Self::zero(nu, cutoff, true);
        let idx = f.lin_index(&vec![0i64; nu + 1]);
        f.coeffs[idx] = Complex64::new(value, 0.0);
        f
    }

    /// Build from explicit modes `(l, j, amplitude)`. For real functions the
    /// conjugate mirror of every mode is filled in automatically, so only one
    /// representative per pair needs to be listed (listing both is fine too:
    /// later writes win and are re-mirrored).
    pub fn from_modes(
        nu: usize,
        cutoff: usize,
        is_real: bool,
        modes: &[(Vec<i64>, i64, Complex64)],
    ) -> Result<Self> {
        let mut f = Self::zero(nu, cutoff, is_real);
        for (l, j, a) in modes {
            f.set_coeff(l, *j, *a)?;
        }
        Ok(f)
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn is_real(&self) -> bool {
        self.is_real
    }

    fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    fn ndim(&self) -> usize {
        self.nu + 1
    }

    fn lin_index(&self, m: &[i64]) -> usize {
        let side = self.side();
        let n = self.cutoff as i64;
        let mut lin = 0usize;
        for &c in m {
            debug_assert!(c.abs() <= n);
            lin = lin * side + (c + n) as usize;
        }
        lin
    }

    fn unravel(&self, mut lin: usize) -> Vec<i64> {
        let side = self.side();
        let n = self.cutoff as i64;
        let mut m = vec![0i64; self.ndim()];
        for a in (0..self.ndim()).rev() {
            m[a] = (lin % side) as i64 - n;
            lin /= side;
        }
        m
    }

    /// Coefficient at mode `(l, j)`; zero outside the cutoff box.
    pub fn coeff(&self, l: &[i64], j: i64) -> Complex64 {
        assert_eq!(l.len(), self.nu, "wrong number of angle indices");
        let n = self.cutoff as i64;
        if j.abs() > n || l.iter().any(|c| c.abs() > n) {
            return Complex64::new(0.0, 0.0);
        }
        let mut m = l.to_vec();
        m.push(j);
        self.coeffs[self.lin_index(&m)]
    }

    /// Set the coefficient at `(l, j)`; for real functions the mirrored mode
    /// is written as well.
    pub fn set_coeff(&mut self, l: &[i64], j: i64, value: Complex64) -> Result<()> {
        if l.len() != self.nu {
            return Err(Error::Shape(format!("expected {} angle indices, got {}", self.nu, l.len())));
        }
        let n = self.cutoff as i64;
        if j.abs() > n || l.iter().any(|c| c.abs() > n) {
            return Err(Error::Shape(format!("mode (l={l:?}, j={j}) outside cutoff {n}")));
        }
        let mut m = l.to_vec();
        m.push(j);
        let idx = self.lin_index(&m);
        if self.is_real {
            let mirror: Vec<i64> = m.iter().map(|&c| -c).collect();
            let midx = self.lin_index(&mirror);
            if midx == idx {
                self.coeffs[idx] = Complex64::new(value.re, 0.0);
            } else {
                self.coeffs[idx] = value;
                self.coeffs[midx] = value.conj();
            }
        } else {
            self.coeffs[idx] = value;
        }
        Ok(())
    }

    /// Iterate `(mode, coefficient)` over the whole box.
    pub fn iter_modes(&self) -> impl Iterator<Item = (Vec<i64>, Complex64)> + '_ {
        (0..self.coeffs.len()).map(move |lin| (self.unravel(lin), self.coeffs[lin]))
    }

    /// Mean over the torus = the `(0, 0)` coefficient.
    pub fn mean(&self) -> Complex64 {
        self.coeff(&vec![0; self.nu], 0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// Restore exact conjugate symmetry by averaging each mirror pair. Called
    /// by every grid-analysis path for real functions.
    fn symmetrize_real(&mut self) {
        if !self.is_real {
            return;
        }
        let total = self.coeffs.len();
        for lin in 0..total {
            let m = self.unravel(lin);
            let mirror: Vec<i64> = m.iter().map(|&c| -c).collect();
            let midx = self.lin_index(&mirror);
            if midx == lin {
                self.coeffs[lin] = Complex64::new(self.coeffs[lin].re, 0.0);
            } else if midx > lin {
                let avg = 0.5 * (self.coeffs[lin] + self.coeffs[midx].conj());
                self.coeffs[lin] = avg;
                self.coeffs[midx] = avg.conj();
            }
        }
    }

    /// Worst deviation from conjugate symmetry (diagnostic; zero by
    /// construction for functions built through the public API).
    pub fn conjugate_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for lin in 0..self.coeffs.len() {
            let m = self.unravel(lin);
            let mirror: Vec<i64> = m.iter().map(|&c| -c).collect();
            let midx = self.lin_index(&mirror);
            worst = worst.max((self.coeffs[lin] - self.coeffs[midx].conj()).norm());
        }
        worst
    }

    // ------------------------------------------------------------------
    // synthesis / analysis
    // ------------------------------------------------------------------

    /// Evaluate on a uniform grid with `grid_size` nodes per axis.
    pub fn synthesize(&self, grid_size: usize) -> Result<Grid> {
        let min = 2 * self.cutoff + 2;
        if grid_size < min {
            return Err(Error::Aliasing { grid: grid_size, cutoff: self.cutoff, min });
        }
        let mut g = Grid::zeros(self.nu, grid_size);
        // scatter coefficients into DFT bins (mode m -> bin m mod G)
        let side = self.side();
        let ndim = self.ndim();
        let n = self.cutoff as i64;
        let mut idxs = vec![0usize; ndim];
        for lin in 0..self.coeffs.len() {
            let c = self.coeffs[lin];
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut r = lin;
            for a in (0..ndim).rev() {
                idxs[a] = r % side;
                r /= side;
            }
            let mut bin = 0usize;
            for a in 0..ndim {
                let m = idxs[a] as i64 - n;
                bin = bin * grid_size + m.rem_euclid(grid_size as i64) as usize;
            }
            g.data[bin] = c;
        }
        fft_all_axes(&mut g.data, ndim, grid_size, true);
        Ok(g)
    }

    /// Recover coefficients up to `cutoff` from uniform grid samples.
    ///
    /// Exact (to rounding) for band-limited data when
    /// `grid.size >= 2 cutoff + 2`.
    pub fn analyze(grid: &Grid, cutoff: usize, is_real: bool) -> Result<Self> {
        let min = 2 * cutoff + 2;
        if grid.size < min {
            return Err(Error::Shape(format!(
                "grid size {} too small for cutoff {cutoff} (need >= {min})",
                grid.size
            )));
        }
        if grid.data.len() != grid.size.pow(grid.nu as u32 + 1) {
            return Err(Error::Shape("grid data length does not match its dimensions".into()));
        }
        let mut work = grid.data.clone();
        let ndim = grid.nu + 1;
        fft_all_axes(&mut work, ndim, grid.size, false);
        let scale = 1.0 / grid.data.len() as f64;
        let mut f = TorusFunction::zero(grid.nu, cutoff, is_real);
        for lin in 0..f.coeffs.len() {
            let m = f.unravel(lin);
            let mut bin = 0usize;
            for &c in &m {
                bin = bin * grid.size + c.rem_euclid(grid.size as i64) as usize;
            }
            f.coeffs[lin] = work[bin] * scale;
        }
        f.symmetrize_real();
        Ok(f)
    }

    // ------------------------------------------------------------------
    // algebra
    // ------------------------------------------------------------------

    /// Pointwise product, computed on a 2x-padded grid so that no retained
    /// mode is aliased; modes beyond the output cutoff are discarded.
    pub fn product(&self, other: &TorusFunction) -> Result<TorusFunction> {
        if self.nu != other.nu {
            return Err(Error::Shape(format!("nu mismatch: {} vs {}", self.nu, other.nu)));
        }
        let out_cut = self.cutoff.max(other.cutoff);
        let pad = 4 * out_cut + 4;
        let ga = self.synthesize(pad)?;
        let gb = other.synthesize(pad)?;
        let gprod = ga.zip(&gb, |a, b| a * b)?;
        TorusFunction::analyze(&gprod, out_cut, self.is_real && other.is_real)
    }

    /// Spectral derivative along `dir` (exact on stored modes).
    pub fn derivative(&self, dir: Dir) -> TorusFunction {
        let axis = match dir {
            Dir::Phi(i) => {
                assert!(i < self.nu, "phi index out of range");
                i
            }
            Dir::X => self.nu,
        };
        let mut out = self.clone();
        for lin in 0..out.coeffs.len() {
            let m = out.unravel(lin);
            out.coeffs[lin] = self.coeffs[lin] * Complex64::new(0.0, m[axis] as f64);
        }
        out
    }

    /// `w . d_phi f` for a frequency vector `w`.
    pub fn omega_grad_phi(&self, omega: &[f64]) -> TorusFunction {
        assert_eq!(omega.len(), self.nu);
        let mut out = self.clone();
        for lin in 0..out.coeffs.len() {
            let m = out.unravel(lin);
            let wl: f64 = omega.iter().zip(&m[..self.nu]).map(|(w, &l)| w * l as f64).sum();
            out.coeffs[lin] = self.coeffs[lin] * Complex64::new(0.0, wl);
        }
        out
    }

    /// Truncated Sobolev norm `sqrt(sum <l,j>^{2s} |f_{l,j}|^2)`.
    pub fn sobolev_norm(&self, s: SobolevIndex) -> f64 {
        let mut acc = 0.0f64;
        for lin in 0..self.coeffs.len() {
            let c = self.coeffs[lin];
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let m = self.unravel(lin);
            let w = mode_bracket(&m);
            acc += w.powf(2.0 * s.0) * c.norm_sqr();
        }
        acc.sqrt()
    }

    /// Sup norm on a (2N+2)-point grid.
    pub fn linf_norm(&self) -> f64 {
        self.synthesize(2 * self.cutoff + 2).expect("default grid fits cutoff").max_abs()
    }

    /// Discrete `W^{1,inf}` surrogate: grid maxima of the function and its
    /// first spectral derivatives.
    pub fn w1_inf_norm(&self) -> f64 {
        let mut total = self.linf_norm();
        for a in 0..self.nu {
            total += self.derivative(Dir::Phi(a)).linf_norm();
        }
        total += self.derivative(Dir::X).linf_norm();
        total
    }

    pub fn scale(&self, c: f64) -> TorusFunction {
        let mut out = self.clone();
        for z in &mut out.coeffs {
            *z *= c;
        }
        out
    }

    /// Scale by a complex constant; the result is complex-valued storage.
    pub fn scale_complex(&self, c: Complex64) -> TorusFunction {
        let mut out = self.clone();
        out.is_real = false;
        for z in &mut out.coeffs {
            *z *= c;
        }
        out
    }

    /// The `x`-Fourier coefficients `c_j(phi) = sum_l f_{l,j} e^{i l.phi}`
    /// of the slice at a fixed angle `phi`, indexed `j = -N ..= N`.
    pub fn x_slice_coeffs(&self, phi: &[f64]) -> Vec<Complex64> {
        assert_eq!(phi.len(), self.nu);
        let side = self.side();
        let n = self.cutoff as i64;
        // phase tables for the angle axes only
        let tables: Vec<Vec<Complex64>> = (0..self.nu)
            .map(|a| {
                let step = Complex64::from_polar(1.0, phi[a]);
                let mut t = vec![Complex64::new(0.0, 0.0); side];
                t[0] = Complex64::from_polar(1.0, -(n as f64) * phi[a]);
                for k in 1..side {
                    t[k] = t[k - 1] * step;
                }
                t
            })
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); side];
        let blocks = self.coeffs.len() / side;
        for blk in 0..blocks {
            // phase = product over angle axes of the block's indices
            let mut rem = blk;
            let mut phase = Complex64::new(1.0, 0.0);
            for a in (0..self.nu).rev() {
                phase *= tables[a][rem % side];
                rem /= side;
            }
            let base = blk * side;
            for k in 0..side {
                out[k] += self.coeffs[base + k] * phase;
            }
        }
        out
    }

    pub fn add(&self, other: &TorusFunction) -> Result<TorusFunction> {
        self.zip_coeffs(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &TorusFunction) -> Result<TorusFunction> {
        self.zip_coeffs(other, |a, b| a - b)
    }

    fn zip_coeffs(
        &self,
        other: &TorusFunction,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<TorusFunction> {
        if self.nu != other.nu {
            return Err(Error::Shape(format!("nu mismatch: {} vs {}", self.nu, other.nu)));
        }
        let cut = self.cutoff.max(other.cutoff);
        let mut out = TorusFunction::zero(self.nu, cut, self.is_real && other.is_real);
        for lin in 0..out.coeffs.len() {
            let m = out.unravel(lin);
            let (l, j) = (&m[..self.nu], m[self.nu]);
            out.coeffs[lin] = f(self.coeff(l, j), other.coeff(l, j));
        }
        Ok(out)
    }

    /// Shift a constant onto the mean.
    pub fn add_constant(&self, c: f64) -> TorusFunction {
        let mut out = self.clone();
        let idx = out.lin_index(&vec![0i64; out.ndim()]);
        out.coeffs[idx] += Complex64::new(c, 0.0);
        out
    }

    /// Same function with the `(0,0)` coefficient removed.
    pub fn zero_mean(&self) -> TorusFunction {
        let mut out = self.clone();
        let idx = out.lin_index(&vec![0i64; out.ndim()]);
        out.coeffs[idx] = Complex64::new(0.0, 0.0);
        out
    }

    /// Re-truncate (or pad) to a new cutoff.
    pub fn with_cutoff(&self, cutoff: usize) -> TorusFunction {
        let mut out = TorusFunction::zero(self.nu, cutoff, self.is_real);
        let n = cutoff as i64;
        for (m, c) in self.iter_modes() {
            if m.iter().all(|&v| v.abs() <= n) {
                let idx = out.lin_index(&m);
                out.coeffs[idx] = c;
            }
        }
        out
    }

    // ------------------------------------------------------------------
    // reflections and parity
    // ------------------------------------------------------------------

    /// `f(phi, -x)`.
    pub fn reflect_x(&self) -> TorusFunction {
        self.reflect(false, true)
    }

    /// `f(-phi, x)` (all angle variables at once).
    pub fn reflect_phi(&self) -> TorusFunction {
        self.reflect(true, false)
    }

    fn reflect(&self, phi: bool, x: bool) -> TorusFunction {
        let mut out = self.clone();
        for lin in 0..self.coeffs.len() {
            let mut m = self.unravel(lin);
            if phi {
                for v in m[..self.nu].iter_mut() {
                    *v = -*v;
                }
            }
            if x {
                m[self.nu] = -m[self.nu];
            }
            let idx = out.lin_index(&m);
            out.coeffs[idx] = self.coeffs[lin];
        }
        out
    }

    /// Orthogonal projection onto a parity class (mode symmetrization);
    /// idempotent, and the four (phi, x) projectors sum to the identity.
    pub fn parity_project(&self, p: ParityClass) -> TorusFunction {
        let mut out = self.clone();
        if p.phi != Parity::None {
            let refl = out.reflect_phi();
            let sign = if p.phi == Parity::Even { 1.0 } else { -1.0 };
            out = out.add(&refl.scale(sign)).unwrap().scale(0.5);
        }
        if p.x != Parity::None {
            let refl = out.reflect_x();
            let sign = if p.x == Parity::Even { 1.0 } else { -1.0 };
            out = out.add(&refl.scale(sign)).unwrap().scale(0.5);
        }
        out
    }

    /// `||f - P f||_{s0=0}`: how far `f` is from its projection onto `p`.
    pub fn parity_violation(&self, p: ParityClass) -> f64 {
        self.sub(&self.parity_project(p)).unwrap().sobolev_norm(SobolevIndex(0.0))
    }

    // ------------------------------------------------------------------
    // non-uniform evaluation
    // ------------------------------------------------------------------

    /// Exact mode summation at one point (angles in radians). `O(modes)`
    /// via per-axis phase tables; bit-reproducible.
    pub fn eval_at(&self, point: &[f64]) -> Complex64 {
        assert_eq!(point.len(), self.ndim());
        let tables = self.phase_tables(point);
        let side = self.side();
        let ndim = self.ndim();
        // odometer over the mode box with running partial products
        let mut idx = vec![0usize; ndim];
        let mut partial = vec![Complex64::new(1.0, 0.0); ndim + 1];
        for a in 0..ndim {
            partial[a + 1] = partial[a] * tables[a][0];
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let total = self.coeffs.len();
        for lin in 0..total {
            acc += self.coeffs[lin] * partial[ndim];
            // increment odometer (row-major: last axis fastest)
            let mut a = ndim;
            loop {
                if a == 0 {
                    break;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < side {
                    break;
                }
                idx[a] = 0;
            }
            if lin + 1 < total {
                for b in a..ndim {
                    partial[b + 1] = partial[b] * tables[b][idx[b]];
                }
            }
        }
        acc
    }

    fn phase_tables(&self, point: &[f64]) -> Vec<Vec<Complex64>> {
        let side = self.side();
        let n = self.cutoff as i64;
        (0..self.ndim())
            .map(|a| {
                let step = Complex64::from_polar(1.0, point[a]);
                let mut t = vec![Complex64::new(0.0, 0.0); side];
                t[0] = Complex64::from_polar(1.0, -(n as f64) * point[a]);
                for k in 1..side {
                    t[k] = t[k - 1] * step;
                }
                t
            })
            .collect()
    }

    /// Evaluate at many points; parallel over points.
    pub fn eval_many(&self, points: &[Vec<f64>]) -> Vec<Complex64> {
        crate::par::map_indexed(points.len(), |i| self.eval_at(&points[i]))
    }

    /// Sequential twin of [`eval_many`] for the policy benches.
    pub fn eval_many_seq(&self, points: &[Vec<f64>]) -> Vec<Complex64> {
        crate::par::map_indexed_seq(points.len(), |i| self.eval_at(&points[i]))
    }

    // ------------------------------------------------------------------
    // test/data helpers
    // ------------------------------------------------------------------

    /// Random real band-limited function: modes with `|m|_inf <= band` get
    /// centered Gaussian-ish amplitudes scaled by `decay^{|m|_inf}`, then the
    /// whole thing is normalized to `norm` in `H^{s0=0}`.
    pub fn random<R: rand::Rng>(
        nu: usize,
        cutoff: usize,
        band: usize,
        decay: f64,
        norm: f64,
        rng: &mut R,
    ) -> TorusFunction {
        let mut f = TorusFunction::zero(nu, cutoff, true);
        let b = band.min(cutoff) as i64;
        let total = f.coeffs.len();
        for lin in 0..total {
            let m = f.unravel(lin);
            let sup = m.iter().map(|v| v.abs()).max().unwrap_or(0);
            if sup > b {
                continue;
            }
            let amp = decay.powi(sup as i32);
            let re = rng.gen_range(-1.0..1.0) * amp;
            let im = rng.gen_range(-1.0..1.0) * amp;
            f.coeffs[lin] = Complex64::new(re, im);
        }
        f.symmetrize_real();
        let cur = f.sobolev_norm(SobolevIndex(0.0));
        if cur > 0.0 {
            f = f.scale(norm / cur);
        }
        f
    }

    /// Random real function in an exact parity class.
    pub fn random_with_parity<R: rand::Rng>(
        nu: usize,
        cutoff: usize,
        band: usize,
        decay: f64,
        norm: f64,
        parity: ParityClass,
        rng: &mut R,
    ) -> TorusFunction {
        let raw = Self::random(nu, cutoff, band, decay, 1.0, rng);
        let mut p = raw.parity_project(parity);
        let cur = p.sobolev_norm(SobolevIndex(0.0));
        if cur > 0.0 {
            p = p.scale(norm / cur);
        }
        p
    }
}

/// The paper's bracket `<l, j> = max(1, |l|, |j|)` with `|l|` the sup norm.
pub fn mode_bracket(m: &[i64]) -> f64 {
    m.iter().map(|v| v.abs()).max().unwrap_or(0).max(1) as f64
}

// ----------------------------------------------------------------------
// serialization (external interface)
// ----------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone)]
struct ModeDto {
    l: Vec<i64>,
    j: i64,
    re: f64,
    im: f64,
}

/// JSON schema: `{"nu", "cutoff", "real", "modes": [{"l", "j", "re", "im"}]}`
/// with modes below [`SERIALIZE_EPS`] omitted.
#[derive(Serialize, Deserialize, Clone)]
struct TorusFunctionDto {
    nu: usize,
    cutoff: usize,
    real: bool,
    modes: Vec<ModeDto>,
}

impl From<TorusFunction> for TorusFunctionDto {
    fn from(f: TorusFunction) -> Self {
        let mut modes = Vec::new();
        for (m, c) in f.iter_modes() {
            if c.norm() < SERIALIZE_EPS {
                continue;
            }
            modes.push(ModeDto { l: m[..f.nu].to_vec(), j: m[f.nu], re: c.re, im: c.im });
        }
        TorusFunctionDto { nu: f.nu, cutoff: f.cutoff, real: f.is_real, modes }
    }
}

impl TryFrom<TorusFunctionDto> for TorusFunction {
    type Error = Error;

    fn try_from(dto: TorusFunctionDto) -> Result<Self> {
        let mut f = TorusFunction::zero(dto.nu, dto.cutoff, dto.real);
        for m in &dto.modes {
            f.set_coeff(&m.l, m.j, Complex64::new(m.re, m.im))?;
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cos_x(nu: usize, cutoff: usize) -> TorusFunction {
        // cos(x) = (e^{ix} + e^{-ix})/2
        let l0 = vec![0i64; nu];
        TorusFunction::from_modes(
            nu,
            cutoff,
            true,
            &[(l0, 1, Complex64::new(0.5, 0.0))],
        )
        .unwrap()
    }

    #[test]
    fn constant_synthesizes_to_ones() {
        let f = TorusFunction::constant(1, 4, 1.0);
        let g = f.synthesize(10).unwrap();
        for v in &g.data {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn cos_x_matches_grid() {
        let f = cos_x(1, 4);
        let g = f.synthesize(12).unwrap();
        for lin in 0..g.len() {
            let p = g.point(lin);
            let expect = p[1].cos();
            assert!((g.data[lin].re - expect).abs() < 1e-13, "node {lin}");
            assert!(g.data[lin].im.abs() < 1e-14);
        }
    }

    #[test]
    fn synthesize_rejects_small_grid() {
        let f = TorusFunction::constant(1, 8, 1.0);
        assert!(matches!(f.synthesize(17), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn analyze_single_mode_nu2() {
        // cos(phi_1 + 2x) on T^3
        let f = TorusFunction::from_modes(
            2,
            4,
            true,
            &[(vec![1, 0], 2, Complex64::new(0.5, 0.0))],
        )
        .unwrap();
        let g = f.synthesize(10).unwrap();
        let back = TorusFunction::analyze(&g, 4, true).unwrap();
        assert!((back.coeff(&[1, 0], 2) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((back.coeff(&[-1, 0], -2) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!(back.coeff(&[0, 0], 0).norm() < 1e-14);
    }

    #[test]
    fn round_trip_random_band_limited() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = TorusFunction::random(1, 10, 10, 0.6, 1.0, &mut rng);
        let g = f.synthesize(22).unwrap();
        let back = TorusFunction::analyze(&g, 10, true).unwrap();
        let err = f.sub(&back).unwrap().sobolev_norm(SobolevIndex(0.0));
        assert!(err < 1e-12 * f.sobolev_norm(SobolevIndex(0.0)), "round trip err {err}");
    }

    #[test]
    fn synthesis_matches_direct_summation() {
        // random 20-mode function vs naive double sum at grid nodes
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = TorusFunction::random(1, 6, 3, 0.8, 1.0, &mut rng);
        let g = f.synthesize(16).unwrap();
        for lin in (0..g.len()).step_by(7) {
            let p = g.point(lin);
            let mut direct = Complex64::new(0.0, 0.0);
            for (m, c) in f.iter_modes() {
                let phase = m[0] as f64 * p[0] + m[1] as f64 * p[1];
                direct += c * Complex64::from_polar(1.0, phase);
            }
            assert!((direct - g.data[lin]).norm() < 1e-12, "node {lin}");
        }
    }

    #[test]
    fn product_identity_and_trig() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = TorusFunction::random(1, 8, 4, 0.7, 2.0, &mut rng);
        let one = TorusFunction::constant(1, 8, 1.0);
        let p = f.product(&one).unwrap();
        let err = f.sub(&p).unwrap().sobolev_norm(SobolevIndex(0.0));
        assert!(err < 1e-13);

        // cos(x)^2 = 1/2 + cos(2x)/2
        let c = cos_x(1, 4);
        let c2 = c.product(&c).unwrap();
        assert!((c2.coeff(&[0], 0) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((c2.coeff(&[0], 2) - Complex64::new(0.25, 0.0)).norm() < 1e-14);
        assert!(c2.coeff(&[0], 1).norm() < 1e-14);
    }

    #[test]
    fn product_matches_pointwise_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = TorusFunction::random(1, 6, 3, 0.8, 1.3, &mut rng);
        let g = TorusFunction::random(1, 6, 3, 0.8, 0.9, &mut rng);
        let prod = f.product(&g).unwrap();
        let size = 40; // large enough that f*g (modes <= 12) is alias-free
        let gf = f.synthesize(size).unwrap();
        let gg = g.synthesize(size).unwrap();
        let gp = prod.synthesize(size).unwrap();
        for lin in 0..gf.len() {
            let expect = gf.data[lin] * gg.data[lin];
            assert!((gp.data[lin] - expect).norm() < 1e-12, "node {lin}");
        }
    }

    #[test]
    fn product_nu_mismatch_is_error() {
        let f = TorusFunction::constant(1, 4, 1.0);
        let g = TorusFunction::constant(2, 4, 1.0);
        assert!(matches!(f.product(&g), Err(Error::Shape(_))));
    }

    #[test]
    fn derivative_of_cos_is_minus_sin() {
        let c = cos_x(1, 4);
        let d = c.derivative(Dir::X);
        // -sin(x) has coefficients -1/(2i) at j=1 => +i/2... check on grid
        let g = d.synthesize(12).unwrap();
        for lin in 0..g.len() {
            let p = g.point(lin);
            assert!((g.data[lin].re + p[1].sin()).abs() < 1e-13);
        }
        // derivative of a constant vanishes
        let k = TorusFunction::constant(1, 4, 3.0);
        assert!(k.derivative(Dir::Phi(0)).sobolev_norm(SobolevIndex(0.0)) == 0.0);
    }

    #[test]
    fn derivative_matches_centered_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = TorusFunction::random(1, 6, 3, 0.7, 1.0, &mut rng);
        let d = f.derivative(Dir::X);
        let h = 1e-5;
        for k in 0..5 {
            let phi = 0.3 + k as f64;
            let x = 1.1 * k as f64;
            let fd = (f.eval_at(&[phi, x + h]) - f.eval_at(&[phi, x - h])) / (2.0 * h);
            let exact = d.eval_at(&[phi, x]);
            assert!((fd - exact).norm() < 1e-7 * (1.0 + exact.norm()), "point {k}");
        }
    }

    #[test]
    fn derivative_kills_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = TorusFunction::random(1, 6, 6, 0.8, 1.0, &mut rng);
        assert_eq!(f.derivative(Dir::X).mean(), Complex64::new(0.0, 0.0));
        assert_eq!(f.derivative(Dir::Phi(0)).mean(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn sobolev_norm_basics() {
        let one = TorusFunction::constant(1, 4, 1.0);
        for s in [0.0, 1.5, 4.0] {
            assert!((one.sobolev_norm(SobolevIndex(s)) - 1.0).abs() < 1e-15);
        }
        // cos x: two modes of amplitude 1/2 at bracket 1 => sqrt(1/2)
        let c = cos_x(1, 6);
        for s in [0.0, 2.0, 7.5] {
            assert!((c.sobolev_norm(SobolevIndex(s)) - 0.5f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn sobolev_norm_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let f = TorusFunction::random(1, 5, 5, 0.9, 1.0, &mut rng);
        let s = 2.0;
        let mut acc = 0.0;
        for (m, c) in f.iter_modes() {
            let w = m.iter().map(|v| v.abs()).max().unwrap().max(1) as f64;
            acc += w.powf(2.0 * s) * c.norm_sqr();
        }
        assert!((f.sobolev_norm(SobolevIndex(s)) - acc.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn parseval_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = TorusFunction::random(1, 8, 8, 0.8, 1.7, &mut rng);
        let g = f.synthesize(18).unwrap();
        let l2sq = f.sobolev_norm(SobolevIndex(0.0)).powi(2);
        assert!((g.mean_sq() - l2sq).abs() < 1e-12 * l2sq.max(1.0));
    }

    #[test]
    fn parity_projection_examples() {
        // even-even projection of cos(phi) cos(x) is itself
        let f = TorusFunction::from_modes(
            1,
            4,
            true,
            &[
                (vec![1], 1, Complex64::new(0.25, 0.0)),
                (vec![1], -1, Complex64::new(0.25, 0.0)),
            ],
        )
        .unwrap();
        let p = f.parity_project(ParityClass::EVEN_EVEN);
        assert!(f.sub(&p).unwrap().sobolev_norm(SobolevIndex(0.0)) < 1e-15);

        // even-x projection of sin(x) is zero
        let s = TorusFunction::from_modes(
            1,
            4,
            true,
            &[(vec![0], 1, Complex64::new(0.0, -0.5))],
        )
        .unwrap();
        let ps = s.parity_project(ParityClass::new(Parity::None, Parity::Even));
        assert!(ps.sobolev_norm(SobolevIndex(0.0)) < 1e-15);
    }

    #[test]
    fn parity_projectors_complete_idempotent_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let f = TorusFunction::random(1, 6, 6, 0.9, 1.0, &mut rng);
        let classes = [
            ParityClass::EVEN_EVEN,
            ParityClass::EVEN_ODD,
            ParityClass::ODD_EVEN,
            ParityClass::ODD_ODD,
        ];
        let parts: Vec<_> = classes.iter().map(|&c| f.parity_project(c)).collect();
        // completeness
        let mut sum = parts[0].clone();
        for p in &parts[1..] {
            sum = sum.add(p).unwrap();
        }
        assert!(f.sub(&sum).unwrap().sobolev_norm(SobolevIndex(0.0)) < 1e-14);
        // idempotence
        for (c, p) in classes.iter().zip(&parts) {
            let pp = p.parity_project(*c);
            assert!(p.sub(&pp).unwrap().sobolev_norm(SobolevIndex(0.0)) < 1e-15);
        }
        // mutual orthogonality via inner products on the grid
        for i in 0..4 {
            for k in (i + 1)..4 {
                let gi = parts[i].synthesize(14).unwrap();
                let gk = parts[k].synthesize(14).unwrap();
                let dot: Complex64 = gi
                    .data
                    .iter()
                    .zip(&gk.data)
                    .map(|(a, b)| a * b.conj())
                    .sum::<Complex64>()
                    / Complex64::new(gi.len() as f64, 0.0);
                assert!(dot.norm() < 1e-14, "classes {i},{k} not orthogonal");
            }
        }
    }

    #[test]
    fn declared_parity_holds_at_machine_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let f = TorusFunction::random_with_parity(
            1,
            8,
            5,
            0.8,
            1.0,
            ParityClass::EVEN_EVEN,
            &mut rng,
        );
        assert!(f.parity_violation(ParityClass::EVEN_EVEN) < 1e-15);
        let g = f.synthesize(20).unwrap();
        // ||f - f(-phi, .)|| and ||f - f(., -x)|| vanish on the grid
        let size = g.size;
        for lin in 0..g.len() {
            let idx = g.unravel(lin);
            let mphi = [(size - idx[0]) % size, idx[1]];
            let mx = [idx[0], (size - idx[1]) % size];
            let vr = g.data[mphi[0] * size + mphi[1]];
            let vx = g.data[mx[0] * size + mx[1]];
            assert!((g.data[lin] - vr).norm() < 1e-13);
            assert!((g.data[lin] - vx).norm() < 1e-13);
        }
    }

    #[test]
    fn real_storage_mirrors_on_write() {
        let mut f = TorusFunction::zero(1, 4, true);
        f.set_coeff(&[2], -1, Complex64::new(0.3, 0.7)).unwrap();
        assert_eq!(f.coeff(&[-2], 1), Complex64::new(0.3, -0.7));
        assert_eq!(f.conjugate_asymmetry(), 0.0);
    }

    #[test]
    fn serialization_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let f = TorusFunction::random(1, 5, 4, 0.7, 1.0, &mut rng);
        let json = serde_json::to_string(&f).unwrap();
        assert!(json.contains("\"modes\""));
        let back: TorusFunction = serde_json::from_str(&json).unwrap();
        let err = f.sub(&back).unwrap().sobolev_norm(SobolevIndex(0.0));
        assert!(err < 1e-14);
    }

    #[test]
    fn eval_at_matches_synthesis_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let f = TorusFunction::random(2, 4, 3, 0.8, 1.0, &mut rng);
        let g = f.synthesize(10).unwrap();
        for lin in (0..g.len()).step_by(97) {
            let p = g.point(lin);
            assert!((f.eval_at(&p) - g.data[lin]).norm() < 1e-12);
        }
    }

    #[test]
    fn sobolev_embedding_constant_is_moderate() {
        // ||f||_Linf <= C ||f||_{s0} with one fitted constant over a sample
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let s0 = SobolevIndex(crate::default_s0(1));
        let mut worst = 0.0f64;
        for _ in 0..12 {
            let f = TorusFunction::random(1, 10, 8, 0.75, 1.0, &mut rng);
            worst = worst.max(f.linf_norm() / f.sobolev_norm(s0));
        }
        assert!(worst < 10.0, "embedding constant blew up: {worst}");
    }
}
