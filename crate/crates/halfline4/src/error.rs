//! Crate-wide error type.
//!
//! Every fallible routine in this crate returns [`Result`] with the single
//! [`Error`] enum below, split between input-validation failures and
//! numerical failures.  Callers that need to distinguish the two classes
//! (for example to pick a process exit code) can use [`Error::is_input_error`].

use num_complex::Complex64;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A routine that needs `|k|` bounded away from the origin was called
    /// with `|k|` below the supported threshold for this coefficient pair.
    #[error("|k| = {abs_k:.3e} is below the supported minimum {min:.3e} for this problem")]
    KTooSmall { abs_k: f64, min: f64 },

    /// An iterative computation failed to reach the requested tolerance.
    /// Carries the last two iterates so the caller can judge how bad it is.
    #[error(
        "no convergence: requested tol {tol:.3e}, last error estimate {err_est:.3e} \
         (last two values {prev} and {last})"
    )]
    NoConvergence {
        tol: f64,
        err_est: f64,
        prev: Complex64,
        last: Complex64,
    },

    /// A winding-number contour passed too close to a zero of the function.
    #[error("determinant modulus {modulus:.3e} on the contour at k = {at}; move the contour")]
    ZeroOnContour { at: Complex64, modulus: f64 },

    /// Adaptive phase tracking could not reduce a phase increment below
    /// pi/2 even at the maximum refinement depth.
    #[error("phase jump of {jump:.3} rad between k = {from} and k = {to} could not be resolved")]
    PhaseJump { from: Complex64, to: Complex64, jump: f64 },

    /// Newton iteration for a zero left its search box or stalled.
    #[error("zero refinement failed near k = {seed}: {reason}")]
    ZeroRefinement { seed: Complex64, reason: String },

    /// A quantity that must be evaluated away from zeros of the determinant
    /// was requested literally on a zero.
    #[error("evaluation point k = {at} coincides with a determinant zero")]
    SingularAtResonance { at: Complex64 },

    /// A beam profile dipped to zero or below somewhere on [0, 1].
    #[error("beam coefficient `{which}` is not strictly positive near x = {at:.6} (value {value:.3e})")]
    NonPositiveCoefficient { which: &'static str, at: f64, value: f64 },

    /// The beam profiles violate the boundary compatibility condition
    /// (3 a'/a + 5 b'/b)(0) = 0 required for the transformed operator to
    /// satisfy the same boundary conditions.
    #[error("beam boundary constraint violated: (3 a'/a + 5 b'/b)(0) = {value:.3e} exceeds {tol:.1e}")]
    BoundaryConstraintViolated { value: f64, tol: f64 },

    /// A construction required more smoothness (or flatness at an endpoint)
    /// than the supplied coefficient has.
    #[error("insufficient smoothness: {0}")]
    InsufficientSmoothness(String),

    /// The adaptive ODE integrator underflowed its step size.
    #[error("ODE integration failed at x = {x:.6}: step size {step:.3e} below minimum")]
    OdeFailure { x: f64, step: f64 },

    /// A product over zeros was requested with a zero set that does not
    /// account for the full winding of the region, so the result would be
    /// silently wrong.
    #[error("zero set incomplete: contour winding {expected} but the list accounts for {found}")]
    IncompleteZeroSet { expected: i64, found: i64 },

    /// Malformed input data (JSON structure, piece layout, degrees, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// JSON (de)serialization failure, with context.
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// File I/O failure, with context.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// `true` for errors caused by malformed or inconsistent *input*
    /// (as opposed to numerical failures during a well-posed computation).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveCoefficient { .. }
                | Error::BoundaryConstraintViolated { .. }
                | Error::InsufficientSmoothness(_)
                | Error::InvalidInput(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}
