use num_complex::Complex64;
use thiserror::Error;

/// Everything that can go wrong inside the toolkit.
///
/// Numerical failures keep enough context (node, eigenvalue, residual
/// history) for a caller to decide whether to retry with other settings.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("Theta vanishes at o = {o} (spurious real pole)")]
    DegenerateSymbol { o: Complex64 },

    #[error("no root with non-positive real part for lambda = {lambda}")]
    NoPhysicalRoot { lambda: f64 },

    #[error("operation requires tau > 0")]
    RequiresTau,

    #[error("amplification factor denominator vanishes at p = {pole}")]
    SingularDenominator { pole: Complex64 },

    #[error("arccos argument {argument} outside [-1, 1]; lambda too small for the trigonometric form")]
    ArccosDomain { argument: f64 },

    #[error("sensitivity Jacobian is singular at p = {pole}")]
    DegenerateJacobian { pole: Complex64 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("iteration did not converge after {} steps (last residual {:e})", .residuals.len(), .residuals.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { residuals: Vec<f64> },

    #[error("frequency node m = {m} collides with the pole of eigenspace j = {j}")]
    PoleCollision { m: usize, j: usize },

    #[error("pole-basis fit is ill-conditioned (condition number {condition:e})")]
    IllConditionedFit { condition: f64 },

    #[error("rank deficient fit: {nodes} nodes for {poles} poles")]
    RankDeficient { nodes: usize, poles: usize },

    #[error("trace restricted to eigenspace {j} is not invertible (smallest singular value {sigma_min:e})")]
    NonInvertibleTrace { j: usize, sigma_min: f64 },

    #[error("least-squares solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("residual grew for 5 consecutive steps (iteration {iteration})")]
    Divergence { iteration: usize },

    #[error("grid with {grid} points cannot resolve {modes} modes")]
    UnderResolved { grid: usize, modes: usize },

    #[error("source design failed: {0}")]
    SourceDesign(String),
}

pub type Result<T> = std::result::Result<T, Error>;
