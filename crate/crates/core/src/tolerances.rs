//! Numerical tolerances shared by the library and its tests.

/// `|g^{ij}ζ_iζ_j| / |ζ|²` below which a covector counts as lightlike.
pub const LIGHTLIKE_REL: f64 = 1e-9;

/// Largest Hamiltonian value tolerated along a traced null ray.
pub const NULL_DRIFT: f64 = 1e-8;

/// Ray integrator re-projects onto the null cone every this many steps.
pub const REPROJECT_EVERY: usize = 100;

/// Frame members are null, and decompositions exact, to this level.
pub const FRAME: f64 = 1e-12;

/// Relative singular-value floor for rank decisions.
pub const RANK_REL: f64 = 1e-10;

/// Crossing normal speed (relative) below which a crossing is tangential.
pub const TRANSVERSAL: f64 = 1e-6;

/// Bisection width for boundary-crossing refinement.
pub const CROSSING_BISECTION: f64 = 1e-13;

/// Largest `|F₁(p)p|` accepted by the Picard solver.
pub const SMALL_DATA_BOUND: f64 = 0.5;

/// Default relative sup-norm stopping tolerance for Picard iteration.
pub const PICARD_RTOL: f64 = 1e-13;

/// Default Picard iteration cap.
pub const PICARD_MAX_ITER: usize = 60;

/// Gauge boundary certificate `|ρ − 1|` on boundary nodes.
pub const GAUGE_BOUNDARY: f64 = 1e-12;

/// Relative tolerance for adaptive transport quadrature.
pub const TRANSPORT_QUAD: f64 = 1e-13;

/// Scalar-ODE step bound for the transport integrator.
pub const TRANSPORT_ODE_STEP: f64 = 2e-3;

/// `|c′|` below which beta recovery switches to the fallback combination.
pub const CUBIC_DEGENERATE: f64 = 1e-8;

/// Beta₃ consistency gate (relative) for cubic root selection.
pub const BETA_GATE: f64 = 1e-3;

/// Minimum separation of I₃ between the two frames of the time test.
pub const I3_SEPARATION: f64 = 0.1;

/// Relative two-path discrepancy of `ϱ` above which `Δb` is declared non-exact.
pub const RHO_PATHS: f64 = 1e-6;

/// Magnitude below which a time-derivative term counts as vanishing.
pub const TIME_INDEPENDENCE: f64 = 1e-10;
