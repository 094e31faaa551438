//! Crate-wide error type.

use crate::geometry::DensityField;

/// Everything that can go wrong across the crate, from construction-time
/// validation to runtime integration failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Grid construction with a degenerate extent or fewer than two cells.
    #[error("invalid grid: require x_max > x_min and n_cells >= 2, got [{x_min}, {x_max}] with {n_cells} cells")]
    InvalidGrid {
        x_min: f64,
        x_max: f64,
        n_cells: usize,
    },

    /// A density was expected to carry positive mass.
    #[error("empty density")]
    EmptyDensity,

    /// A field value is negative, NaN or infinite where a density is required.
    #[error("invalid density value {value} at cell {index}")]
    InvalidDensity { index: usize, value: f64 },

    /// Quantile positions must be strictly increasing.
    #[error("quantile positions not strictly increasing at index {index}")]
    NonMonotoneQuantiles { index: usize },

    /// Too few quantile points for the requested operation.
    #[error("need at least {min} quantile points, got {got}")]
    TooFewQuantiles { min: usize, got: usize },

    /// Quantile data cannot be represented on the target grid.
    #[error("support exceeds grid: position {position} outside [{x_min}, {x_max}]")]
    SupportExceedsGrid {
        position: f64,
        x_min: f64,
        x_max: f64,
    },

    /// A tabulated cost profile failed convexity validation.
    #[error("profile not convex near r = {r}")]
    ProfileNotConvex { r: f64 },

    /// A tabulated cost profile failed basic shape validation.
    #[error("invalid cost profile: {reason}")]
    InvalidProfile { reason: String },

    /// The tabulated conjugate lost strict convexity (e.g. affine segments).
    #[error("conjugate not strictly convex on tabulation grid near slope {slope}")]
    ConjugateNotStrictlyConvex { slope: f64 },

    /// A field passed to an operator contains NaN or infinities.
    #[error("non-finite field")]
    NonFiniteField,

    /// Two fields living on different grids were combined.
    #[error("mismatched grids")]
    MismatchedGrids,

    /// The explicit integrator produced a non-finite state.
    #[error("blow-up detected at t = {t}")]
    BlowUp {
        t: f64,
        /// Last finite state before the failure.
        last_good: Box<DensityField>,
    },

    /// The stable step size collapsed below a representable size.
    #[error("stiffness collapse: dt = {dt:e} below 1e-15 at t = {t}")]
    StiffnessCollapse { t: f64, dt: f64 },

    /// The damped Newton iteration did not reach the gradient tolerance.
    #[error("newton iteration failed at step {step}: gradient norm {grad_norm:e} after {iters} iterations")]
    NewtonFailure {
        step: usize,
        grad_norm: f64,
        iters: usize,
    },

    /// Configuration file or parameter problem.
    #[error("config error: {0}")]
    Config(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
