use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point (t={t}, x={x:?}) lies outside the padded domain")]
    OutsideDomain { t: f64, x: [f64; 3] },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),

    #[error("singular construction: {0}")]
    SingularConstruction(String),

    #[error("rank-deficient system: {0}")]
    RankDeficient(String),

    #[error("null denominator |.|^2 = {value:e} for index tuple {indices:?}")]
    NullDenominator { indices: Vec<usize>, value: f64 },

    #[error("CFL violation: dt = {dt} is above the stable limit, use dt <= {suggested}")]
    Cfl { dt: f64, suggested: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("stencil needs {need} ghost layers, field has {have}")]
    InsufficientGhost { have: usize, need: usize },

    #[error("Picard iteration diverged after {iterations} iterations (last contraction ratio {ratio:.3e}): {reason}")]
    Diverged {
        iterations: usize,
        ratio: f64,
        reason: String,
    },

    #[error("epsilon corner {corner:?} failed: {source}")]
    CornerFailed {
        corner: Vec<i8>,
        #[source]
        source: Box<Error>,
    },

    #[error("gauge function vanishes at (t={t}, x={x})")]
    GaugeVanishes { t: f64, x: f64 },

    #[error("gauge function is {value} on the boundary, expected 1")]
    GaugeBoundary { value: f64 },

    #[error("gauge depends on time (|d_t rho| = {rate:e}); strict mode refuses")]
    TimeDependentGauge { rate: f64 },

    #[error("path covers s in [{lo}, {hi}], requested [{s0}, {s1}]")]
    CoverageGap { s0: f64, s1: f64, lo: f64, hi: f64 },

    #[error("conjugate point at s = {rho} on leg {leg}")]
    ConjugatePoint { leg: String, rho: f64 },

    #[error("ray from {0} never crosses the domain boundary")]
    NoCrossing(String),

    #[error("non-positive transport ratio {0} between media")]
    NonPositiveRatio(f64),

    #[error("one-form is not exact: two-path discrepancy {discrepancy:e} > {tol:e}")]
    NonExact { discrepancy: f64, tol: f64 },

    #[error("inconsistent measurements: {0}")]
    Inconsistent(String),

    #[error("coefficients undetermined: {0}")]
    Undetermined(String),

    #[error("ill-conditioned frames: |I3 difference| = {0} is below 0.1")]
    IllConditionedFrames(f64),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
