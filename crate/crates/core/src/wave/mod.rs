//! Finite-difference solvers for the damped nonlinear wave equation
//!
//! `□p + ⟨b, ∇p⟩ + h p − Σ β_{m+1} ∂_t²(p^{m+1}) = 0` on `(0, T) × (0, 1)` with
//! Dirichlet data, where `⟨b, ∇p⟩ = b_t ∂_t p − c² b_x ∂_x p`.

mod box_op;
mod convergence;
mod dn;
mod export;
mod plane;
mod solver;

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use box_op::{apply_box_g, box_analytic, box_discrete, continuum_residual, Lattice};
pub use convergence::{convergence_order, OrderEstimate};
pub use dn::{dn_trace, DnTrace};
pub use export::{read_dump, write_dn_csv, write_dump, write_field_csv, DumpHeader};
pub use plane::{solve_linear_2d, Grid2d, PlaneSource, Wavefield2d};
pub use solver::{
    discrete_residual, probe_threshold, solve_linear, solve_nonlinear, PicardOptions, ThresholdReport, CONTRACTION_BOUND,
};

use crate::error::{Error, Result};
use crate::field::{self, Field, OneForm, SpacetimePoint};
use crate::lorentz::ProductMetric;

/// Uniform space-time grid on `[0, T] × [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1d {
    /// Number of spatial intervals.
    pub nx: usize,
    /// Number of time steps.
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
}

impl Grid1d {
    pub fn new(nx: usize, nt: usize, t_end: f64) -> Result<Self> {
        if nx < 4 || nt < 4 || !(t_end > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid needs nx, nt >= 4 and T > 0 (nx={nx}, nt={nt}, T={t_end})"
            )));
        }
        Ok(Self {
            nx,
            nt,
            dx: 1.0 / nx as f64,
            dt: t_end / nt as f64,
        })
    }

    /// Grid with `dt ≤ courant · dx`.
    pub fn with_courant(nx: usize, t_end: f64, courant: f64) -> Result<Self> {
        let dx = 1.0 / nx as f64;
        let nt = (t_end / (courant * dx) - 1e-9).ceil() as usize;
        Self::new(nx, nt, t_end)
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn t_end(&self) -> f64 {
        self.nt as f64 * self.dt
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nt + 1, self.nx + 1)
    }

    pub fn zeros(&self) -> Array2<f64> {
        Array2::zeros(self.shape())
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: &dyn field::ScalarField) -> Array2<f64> {
        if let Some(c) = f.constant_value() {
            return Array2::from_elem(self.shape(), c);
        }
        Array2::from_shape_fn(self.shape(), |(n, i)| {
            f.value(&SpacetimePoint::on_line(self.t(n), self.x(i)))
        })
    }

    pub(crate) fn check_same(&self, other: &Grid1d) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Coefficients of the forward problem.
#[derive(Clone)]
pub struct MediumParams {
    pub metric: ProductMetric,
    pub b: OneForm,
    pub h: Field,
    /// `β₂, β₃, …, β_{Mmax}`.
    pub betas: Vec<Field>,
}

impl fmt::Debug for MediumParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MediumParams")
            .field("metric", &self.metric)
            .field("b", &self.b)
            .field("h", &self.h)
            .field("betas", &self.betas)
            .finish()
    }
}

impl MediumParams {
    /// Linear medium with `b = 0`, `h = 0`.
    pub fn new(metric: ProductMetric) -> Self {
        Self {
            metric,
            b: OneForm::zero(),
            h: field::constant(0.0),
            betas: Vec::new(),
        }
    }

    pub fn with_one_form(mut self, b: OneForm) -> Self {
        self.b = b;
        self
    }

    pub fn with_potential(mut self, h: Field) -> Self {
        self.h = h;
        self
    }

    pub fn with_betas(mut self, betas: Vec<Field>) -> Self {
        self.betas = betas;
        self
    }

    /// Constant `β₂, β₃, …`.
    pub fn with_constant_betas(self, betas: &[f64]) -> Self {
        self.with_betas(betas.iter().map(|&b| field::constant(b)).collect())
    }

    /// `β_k` for `k ≥ 2`.
    pub fn beta(&self, k: usize) -> Option<&Field> {
        k.checked_sub(2).and_then(|j| self.betas.get(j))
    }

    /// Largest `m + 1` carried by the series.
    pub fn max_order(&self) -> usize {
        self.betas.len() + 1
    }

    /// Same medium with every `β` removed.
    pub fn linear_part(&self) -> Self {
        Self {
            betas: Vec::new(),
            ..self.clone()
        }
    }

    pub fn is_linear(&self) -> bool {
        self.betas.iter().all(|b| b.constant_value() == Some(0.0))
    }

    pub fn sample(&self, grid: &Grid1d) -> Result<SampledMedium> {
        SampledMedium::new(self, grid)
    }
}

/// Medium coefficients evaluated on the nodes of a [`Grid1d`].
#[derive(Debug, Clone)]
pub struct SampledMedium {
    pub grid: Grid1d,
    /// `c` per spatial node.
    pub speed: Vec<f64>,
    /// `c c′ − c² b_x`, the coefficient of `∂_x p`.
    pub drift: Array2<f64>,
    pub b_t: Array2<f64>,
    pub b_x: Array2<f64>,
    pub h: Array2<f64>,
    pub betas: Vec<Array2<f64>>,
}

impl SampledMedium {
    pub fn new(params: &MediumParams, grid: &Grid1d) -> Result<Self> {
        if params.metric.dim() != 1 {
            return Err(Error::Unsupported(
                "grid solvers run in one space dimension; use a dim-1 metric".into(),
            ));
        }
        let mut speed = Vec::with_capacity(grid.nx + 1);
        let mut cc1 = Vec::with_capacity(grid.nx + 1);
        for i in 0..=grid.nx {
            let x = nalgebra::Vector3::new(grid.x(i), 0.0, 0.0);
            let c = params.metric.speed(&x);
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidInput(format!("sound speed {c} at x = {}", grid.x(i))));
            }
            speed.push(c);
            cc1.push(c * params.metric.speed_gradient(&x)[0]);
        }
        let b_t = grid.sample(params.b.components[0].as_ref());
        let b_x = grid.sample(params.b.components[1].as_ref());
        let drift = Array2::from_shape_fn(grid.shape(), |(n, i)| {
            cc1[i] - speed[i] * speed[i] * b_x[(n, i)]
        });
        Ok(Self {
            grid: *grid,
            speed,
            drift,
            b_t,
            b_x,
            h: grid.sample(params.h.as_ref()),
            betas: params.betas.iter().map(|b| grid.sample(b.as_ref())).collect(),
        })
    }

    pub fn max_speed(&self) -> f64 {
        self.speed.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_linear(&self) -> bool {
        self.betas.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    /// SHA-256 of the sampled coefficients, hex encoded.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.grid.nx as u64).to_le_bytes());
        hasher.update((self.grid.nt as u64).to_le_bytes());
        hasher.update(self.grid.dx.to_le_bytes());
        hasher.update(self.grid.dt.to_le_bytes());
        for v in &self.speed {
            hasher.update(v.to_le_bytes());
        }
        let arrays = [&self.drift, &self.b_t, &self.b_x, &self.h];
        for a in arrays.into_iter().chain(self.betas.iter()) {
            for v in a.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Time profile of Dirichlet data on one boundary node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    /// `sin⁸(π(t − start)/width)` on its support: seven continuous derivatives.
    Bump { start: f64, width: f64 },
    /// `sin²(π(t − start)/width)` on its support.
    SineSquared { start: f64, width: f64 },
}

impl Profile {
    fn window(start: f64, width: f64, t: f64) -> Option<f64> {
        let tau = (t - start) / width;
        (0.0..=1.0).contains(&tau).then_some(std::f64::consts::PI * tau)
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Bump { start, width } => Self::window(start, width, t).map_or(0.0, |a| a.sin().powi(8)),
            Profile::SineSquared { start, width } => {
                Self::window(start, width, t).map_or(0.0, |a| a.sin().powi(2))
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let pi = std::f64::consts::PI;
        match *self {
            Profile::Zero => 0.0,
            Profile::Bump { start, width } => Self::window(start, width, t)
                .map_or(0.0, |a| 8.0 * a.sin().powi(7) * a.cos() * pi / width),
            Profile::SineSquared { start, width } => Self::window(start, width, t)
                .map_or(0.0, |a| 2.0 * a.sin() * a.cos() * pi / width),
        }
    }

    /// Number of continuous derivatives.
    pub fn smoothness(&self) -> usize {
        match self {
            Profile::Zero => usize::MAX,
            Profile::Bump { .. } => 7,
            Profile::SineSquared { .. } => 1,
        }
    }

    fn start(&self) -> f64 {
        match *self {
            Profile::Zero => f64::INFINITY,
            Profile::Bump { start, .. } | Profile::SineSquared { start, .. } => start,
        }
    }
}

/// Dirichlet data `amplitude · profile(t)` at `x = 0` and `x = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySource {
    pub amplitude: f64,
    pub profiles: [Profile; 2],
}

impl BoundarySource {
    pub fn zero() -> Self {
        Self {
            amplitude: 0.0,
            profiles: [Profile::Zero; 2],
        }
    }

    pub fn left(amplitude: f64, profile: Profile) -> Self {
        Self {
            amplitude,
            profiles: [profile, Profile::Zero],
        }
    }

    /// The C⁶ pulse used throughout: a `sin⁸` bump at `x = 0`.
    pub fn bump(amplitude: f64, start: f64, width: f64) -> Self {
        Self::left(amplitude, Profile::Bump { start, width })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            amplitude: self.amplitude * factor,
            ..*self
        }
    }

    /// Value at boundary node `side` (0: `x = 0`, 1: `x = 1`).
    pub fn value(&self, t: f64, side: usize) -> f64 {
        self.amplitude * self.profiles[side].value(t)
    }

    pub fn smoothness(&self) -> usize {
        self.profiles.iter().map(Profile::smoothness).min().unwrap_or(usize::MAX)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.profiles {
            if let Profile::Bump { start, width } | Profile::SineSquared { start, width } = *p {
                if start < 0.0 || !(width > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "source window [{start}, {start}+{width}] must lie in t >= 0"
                    )));
                }
            }
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidInput("source amplitude is not finite".into()));
        }
        Ok(())
    }

    /// Earliest time the data can be nonzero.
    pub fn onset(&self) -> f64 {
        self.profiles.iter().map(Profile::start).fold(f64::INFINITY, f64::min)
    }
}

/// Sum of several boundary sources, evaluated term by term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceSum(pub Vec<(f64, BoundarySource)>);

impl SourceSum {
    pub fn value(&self, t: f64, side: usize) -> f64 {
        self.0.iter().map(|(w, s)| w * s.value(t, side)).sum()
    }
}

impl From<BoundarySource> for SourceSum {
    fn from(s: BoundarySource) -> Self {
        SourceSum(vec![(1.0, s)])
    }
}

impl From<&BoundarySource> for SourceSum {
    fn from(s: &BoundarySource) -> Self {
        SourceSum(vec![(1.0, *s)])
    }
}

/// Convergence record of a Picard solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PicardDiagnostics {
    pub iterations: usize,
    /// Sup-norm difference between successive iterates.
    pub increments: Vec<f64>,
    /// Ratios of successive increments.
    pub ratios: Vec<f64>,
    /// Sup of `|F₁(p)p|` on the final iterate.
    pub small_data_level: f64,
    /// Sup-norm residual of the discrete equation.
    pub residual: f64,
}

impl PicardDiagnostics {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

/// Solution samples on a [`Grid1d`], indexed `[n, i]`.
#[derive(Debug, Clone)]
pub struct Wavefield {
    pub grid: Grid1d,
    pub values: Array2<f64>,
    pub diagnostics: PicardDiagnostics,
    pub medium_hash: String,
}

impl Wavefield {
    /// Samples that did not come from a solve (no diagnostics, no medium hash).
    pub fn from_values(grid: Grid1d, values: Array2<f64>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::GridMismatch(format!("samples {:?}, grid {:?}", values.dim(), grid.shape())));
        }
        Ok(Self {
            grid,
            values,
            diagnostics: PicardDiagnostics::default(),
            medium_hash: String::new(),
        })
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn at(&self, n: usize, i: usize) -> f64 {
        self.values[(n, i)]
    }

    /// Pointwise quotient `p / ϱ`.
    pub fn divided_by(&self, rho: &Array2<f64>) -> Result<Wavefield> {
        if rho.dim() != self.values.dim() {
            return Err(Error::GridMismatch("gauge samples do not match the field".into()));
        }
        Ok(Wavefield {
            values: &self.values / rho,
            ..self.clone()
        })
    }
}

pub(crate) fn sup_norm(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Shared handle to externally computed forcing, indexed like the grid.
pub type Forcing = Arc<Array2<f64>>;
