use num_complex::Complex64;
use thiserror::Error;

/// Unified error type for every failure mode the library reports.
///
/// Numerical routines never panic on bad conditioning; they return one of
/// these variants so callers (sweep drivers, the CLI) can record the failure
/// and move on.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trace drift {drift:.3e} at t={t:.6} exceeds tolerance; reduce dt")]
    StepTooLarge { drift: f64, t: f64 },

    #[error("constrained steady-state solve is singular (residual {residual:.3e}); \
             degenerate steady states at this precision")]
    SingularSystem { residual: f64 },

    #[error("moment series did not converge within {max_terms} terms")]
    SeriesDivergence { max_terms: usize },

    #[error("required Fock cutoff exceeds hard maximum {hard_max}")]
    CutoffOverflow { hard_max: usize },

    #[error("eigenvalue iteration failed to converge (best residual {residual:.3e})")]
    NotConverged { residual: f64 },

    #[error("gap is ambiguous: {first} and {second} have real parts within 1e-12 \
             and are not a conjugate pair")]
    GapAmbiguous { first: Complex64, second: Complex64 },

    #[error("dimension {dim} exceeds dense-diagonalization limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("phase-space grid too small: boundary reaches {boundary_frac:.3e} of peak")]
    GridTooSmall { boundary_frac: f64 },

    #[error("fit window too small: only {kept} points survive exclusion (need {need})")]
    WindowTooSmall { kept: usize, need: usize },

    #[error("no interior minimum of |Re lambda| inside the bracket")]
    NoMinimumInBracket,

    #[error("degenerate fit: {reason}")]
    DegenerateFit { reason: &'static str },

    #[error("invalid parameters: {reason}")]
    InvalidParams { reason: String },

    #[error("LAPACK routine {routine} failed with info={info}")]
    LapackFailure { routine: &'static str, info: i32 },
}

pub type Result<T> = std::result::Result<T, CoreError>;
