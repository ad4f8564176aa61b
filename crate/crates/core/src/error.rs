use thiserror::Error;

/// Errors shared across assembly, stepping, Riccati, and diagnostics code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown initial-state kind `{0}`")]
    UnknownKind(String),

    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("step matrix is singular (dt = {dt}, theta = {theta})")]
    SingularStepMatrix { dt: f64, theta: f64 },

    #[error("control signal covers [0, {got}] but the horizon is {needed}")]
    ControlCoverage { needed: f64, got: f64 },

    #[error("time grid of length {got} does not divide the horizon {horizon} (dt = {dt})")]
    GridMismatch { horizon: f64, dt: f64, got: usize },

    #[error("eigen-decomposition requested at dimension {dim}, above the cap {cap}")]
    EigenCap { dim: usize, cap: usize },

    #[error("eigen/Cholesky factorization failed: {0}")]
    Factorization(&'static str),

    #[error("Schur decomposition did not converge at dimension {dim}")]
    SchurFailure { dim: usize },

    #[error(
        "Lyapunov equation is ill posed: eigenvalue {a:?} of A is nearly opposite to {b:?}"
    )]
    LyapunovIllPosed { a: (f64, f64), b: (f64, f64) },

    #[error("Lyapunov residual {residual:.3e} exceeds the bound {bound:.3e}")]
    LyapunovResidual { residual: f64, bound: f64 },

    #[error("Newton-Kleinman did not converge at step {step} after {iterations} iterations")]
    NewtonKleinmanStall { step: usize, iterations: usize },

    #[error(
        "Riccati snapshot at t = {t:.6} lost positivity: min eigenvalue {min_eig:.3e} (norm {norm:.3e})"
    )]
    LostPositivity { t: f64, min_eig: f64, norm: f64 },

    #[error("Riccati solution does not cover t = {t}")]
    RiccatiCoverage { t: f64 },

    #[error("mesh resolution {got} must be a positive multiple of 8 so the hole [3/8,5/8]^2 aligns with the grid")]
    MeshResolution { got: usize },

    #[error("inconsistent mesh tags: {0}")]
    MeshTags(String),

    #[error("divergence matrix rank {rank} is deficient (expected at least {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("fit window start {t_min:.3e} is below the mesh cutoff {cutoff:.3e}; the fit would measure discretization, not decay")]
    WindowBelowCutoff { t_min: f64, cutoff: f64 },

    #[error("fit window spans {decades:.2} decades, need at least {needed:.2}")]
    WindowTooNarrow { decades: f64, needed: f64 },

    #[error("empty series")]
    EmptySeries,

    #[error("L_p exponent must satisfy p >= 1, got {0}")]
    InvalidLpExponent(f64),

    #[error("smoothness parameter theta must lie in (0, 1/4), got {0}")]
    ThetaRange(f64),

    #[error(
        "time exponent q = {q} outside the admissible range 1 < q < 4/(3+4*theta) = {sup:.6}"
    )]
    QRange { q: f64, sup: f64 },

    #[error("configuration invalid:\n{}", issues.join("\n"))]
    InvalidConfig { issues: Vec<String> },

    #[error("matrix market parse error at line {line}: {msg}")]
    MatrixMarket { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
