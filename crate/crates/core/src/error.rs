use thiserror::Error;

/// Errors shared by the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid too small to hold the requested modes without aliasing.
    #[error("aliasing: grid size {grid} cannot resolve cutoff {cutoff} (need >= {min})")]
    Aliasing { grid: usize, cutoff: usize, min: usize },

    /// Dimension / shape mismatch between operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A right-hand side that must have zero mean does not.
    #[error("nonzero mean {mean:.3e} on a right-hand side that must be solvable (tol {tol:.1e})")]
    Mean { mean: f64, tol: f64 },

    /// A divisor fell below the resonance tolerance.
    #[error("small divisor {divisor:.3e} at mode (l={l:?}, j={j}) below tolerance {tol:.1e}")]
    SmallDivisor { l: Vec<i64>, j: i64, divisor: f64, tol: f64 },

    /// A displacement field is too large to define a torus diffeomorphism.
    #[error("not a diffeomorphism: {0}")]
    NotDiffeo(String),

    /// Iteration stagnated above tolerance; carries the best residual seen.
    #[error("no convergence after {iterations} iterations, best residual {residual:.3e} > tol {tol:.1e}")]
    NoConvergence { iterations: usize, residual: f64, tol: f64 },

    /// The metric degenerates (sign condition violated on the grid).
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    /// `D_m` must be inverted but the zero mode has zero symbol (m = 0).
    #[error("zero mode: D_m^-1 undefined for mass 0 at j = 0")]
    ZeroMode,

    /// A smallness condition needed for a series to converge is violated.
    #[error("smallness violated: {0}")]
    Smallness(String),

    /// CFL-type stability condition violated.
    #[error("stability: {0}")]
    Stability(String),

    /// A time integration blew up.
    #[error("diverged: norm {norm:.3e} exceeded {limit:.1e} at t = {time:.3}")]
    Diverged { norm: f64, limit: f64, time: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code convention: 2 tolerance, 3 small divisor,
    /// 4 smallness, 5 I/O (I/O mapped by the CLI).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SmallDivisor { .. } | Error::Mean { .. } => 3,
            Error::Smallness(_) | Error::NotDiffeo(_) => 4,
            _ => 2,
        }
    }
}
