//! Recovery of the one-form difference, the gauge factor `ϱ` and `β₂, β₃`
//! from symbol-level measurements of a hidden medium against a known
//! reference medium with the same metric.
//!
//! The hidden medium is reachable only through a [`MeasurementOracle`].

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector, Rotation3, Vector3, Vector4};
use rayon::prelude::*;
use serde::Serialize;

use crate::covector::{build_i3_frame, interaction_sums, CovectorFrame};
use crate::error::{Error, Result};
use crate::field::{ScalarField, SpacetimePoint};
use crate::gauge::GaugeFunction;
use crate::lorentz::AxisBox;
use crate::tolerances;
use crate::transport::{
    synthesize_m3_at, synthesize_m4, trace_leg, FourFrameSweep, FrameGeometry, LegRole, M4Functional,
    MeasurementFunctional, SymbolContext,
};
use crate::wave::MediumParams;

/// Symbol-level measurements of a medium.
pub trait MeasurementOracle: Send + Sync {
    /// `M₃` for the legs of `geometry`, with the measurement point at the
    /// boundary or at parameter `y_param` along the outgoing leg.
    fn m3(&self, geometry: &FrameGeometry, y_param: Option<f64>) -> Result<MeasurementFunctional>;

    /// `M₄` over a four-frame sweep.
    fn m4(&self, sweep: &FourFrameSweep) -> Result<M4Functional>;
}

/// Oracle synthesizing measurements from medium parameters it keeps private.
pub struct SyntheticOracle {
    medium: MediumParams,
    symbols: [f64; 4],
}

impl SyntheticOracle {
    /// Oracle with unit source symbols.
    pub fn new(medium: MediumParams) -> Self {
        Self {
            medium,
            symbols: [1.0; 4],
        }
    }

    pub fn with_symbols(mut self, symbols: [f64; 4]) -> Self {
        self.symbols = symbols;
        self
    }
}

impl MeasurementOracle for SyntheticOracle {
    fn m3(&self, geometry: &FrameGeometry, y_param: Option<f64>) -> Result<MeasurementFunctional> {
        synthesize_m3_at(geometry, &self.medium, &self.symbols[..3], y_param)
    }

    fn m4(&self, sweep: &FourFrameSweep) -> Result<M4Functional> {
        synthesize_m4(sweep, &self.medium, &self.symbols)
    }
}

/// Knobs of the recovery pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryOptions {
    /// Sliding-`y` differencing step; one Richardson halving is applied.
    pub ds: f64,
    /// Parameter distance from a probe's base point to the probed point.
    pub probe_offset: f64,
    /// Null directions per one-form solve (at least four).
    pub directions: usize,
    /// `(φ, θ)` of the `I₃` frame used for `M₃`.
    pub m3_frame: (f64, f64),
    /// `φ` and Laurent parameters of the `M₄` sweep.
    pub m4_phi: f64,
    pub m4_s_values: Vec<f64>,
    /// Gauss–Legendre nodes per path segment when integrating `ϱ`.
    pub rho_nodes: usize,
    /// Spatial box whose faces anchor the `ϱ` integration paths.
    #[serde(skip)]
    pub bounds: AxisBox,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            ds: 1e-2,
            probe_offset: 0.05,
            directions: 5,
            m3_frame: (0.9, 1.1),
            m4_phi: 0.4,
            m4_s_values: FourFrameSweep::default_s_values(),
            rho_nodes: 12,
            bounds: AxisBox::unit_cube(),
        }
    }
}

impl RecoveryOptions {
    fn validate(&self) -> Result<()> {
        if !(self.ds > 0.0 && self.probe_offset > self.ds) {
            return Err(Error::InvalidInput(format!(
                "need 0 < ds < probe_offset, got ds = {}, offset = {}",
                self.ds, self.probe_offset
            )));
        }
        if self.directions < 4 {
            return Err(Error::InvalidInput(format!("{} directions cannot fix a one-form", self.directions)));
        }
        if self.rho_nodes == 0 {
            return Err(Error::InvalidInput("rho_nodes must be positive".into()));
        }
        Ok(())
    }

    fn m3_template(&self) -> Result<CovectorFrame> {
        build_i3_frame(self.m3_frame.0, self.m3_frame.1)
    }
}

/// Legs of a probe: the outgoing leg from the base point passes the probed
/// point at parameter `s_at`.
#[derive(Debug, Clone)]
pub struct ProbeGeometry {
    pub geometry: FrameGeometry,
    pub s_at: f64,
}

fn spatial_direction(v: &Vector4<f64>) -> Vector3<f64> {
    // ζ₀ < 0 moves along +ζ', ζ₀ > 0 along −ζ'
    (v.fixed_rows::<3>(1) / -v[0]).normalize()
}

fn rotation_onto(from: &Vector3<f64>, to: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::rotation_between(from, to).unwrap_or_else(|| {
        let helper = if from.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(from.cross(&helper)), PI)
    })
}

/// Places a frame so that its outgoing leg passes `p` in the spatial
/// direction `direction`, `offset` after the frame's base point.
pub fn probe_geometry(
    ctx: &SymbolContext,
    p: &SpacetimePoint,
    direction: &Vector3<f64>,
    template: &CovectorFrame,
    offset: f64,
    ds: f64,
) -> Result<ProbeGeometry> {
    let d = direction.normalize();
    let back = trace_leg(ctx, p, &Vector4::new(-1.0, d[0], d[1], d[2]), LegRole::Incoming(0))?;
    if back.s_end < offset {
        return Err(Error::InvalidInput(format!("probe base {offset} behind the boundary at {}", back.s_end)));
    }
    let q = back.path.point_at(offset)?;
    let forward = -back.path.covector_at(offset)?.0;
    let at_q = Vector3::new(forward[1], forward[2], forward[3]).normalize();
    let frame = template.clone().rotated(&rotation_onto(&spatial_direction(&template.target), &at_q));
    let geometry = FrameGeometry::trace(ctx, &q, &frame)?;
    if geometry.outgoing.s_end < offset + ds {
        return Err(Error::InvalidInput(format!(
            "probed point within {ds} of the boundary along the outgoing leg"
        )));
    }
    Ok(ProbeGeometry { geometry, s_at: offset })
}

/// `⟨Δb, ẋ⟩` at one parameter along a probe's outgoing leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeSample {
    pub s: f64,
    pub point: [f64; 4],
    pub velocity: [f64; 4],
    pub value: f64,
    /// Difference between the Richardson value and the finer central difference.
    pub richardson_gap: f64,
}

/// `−2 d/ds log E(s)`, `E` the ratio of the hidden and reference `M₃` as
/// the measurement point slides along the outgoing leg, by central
/// differences with steps `ds` and `ds/2` combined by Richardson.
pub fn log_derivative_probe(
    geometry: &FrameGeometry,
    s_values: &[f64],
    hidden: &dyn MeasurementOracle,
    reference: &dyn MeasurementOracle,
    ds: f64,
) -> Result<Vec<ProbeSample>> {
    let log_e = |s: f64| -> Result<f64> {
        let ratio = hidden.m3(geometry, Some(s))?.value / reference.m3(geometry, Some(s))?.value;
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::NonPositiveRatio(ratio));
        }
        Ok(ratio.ln())
    };
    let end = geometry.outgoing.s_end;
    s_values
        .iter()
        .map(|&s| {
            if s - ds < 0.0 || s + ds > end {
                return Err(Error::InvalidInput(format!("probe stencil around s = {s} leaves [0, {end}]")));
            }
            let central = |h: f64| -> Result<f64> { Ok((log_e(s + h)? - log_e(s - h)?) / (2.0 * h)) };
            let (coarse, fine) = (central(ds)?, central(ds / 2.0)?);
            let value = -2.0 * (4.0 * fine - coarse) / 3.0;
            let (pos, vel) = geometry.outgoing.path.state_at(s)?;
            Ok(ProbeSample {
                s,
                point: pos.into(),
                velocity: vel.into(),
                value,
                richardson_gap: (value + 2.0 * fine).abs(),
            })
        })
        .collect()
}

/// Least-squares one-form from its pairings with several velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OneFormSolution {
    pub delta_b: [f64; 4],
    /// Largest absolute residual of the pairings.
    pub residual: f64,
    /// Ratio of extreme singular values of the direction matrix.
    pub condition: f64,
    pub directions: usize,
}

/// Solves `⟨Δb, ẋ_k⟩ = m_k` in the least-squares sense.
pub fn solve_oneform_point(probes: &[(Vector4<f64>, f64)]) -> Result<OneFormSolution> {
    if probes.len() < 4 {
        return Err(Error::RankDeficient(format!("{} probe directions for a 4-component one-form", probes.len())));
    }
    let a = DMatrix::from_fn(probes.len(), 4, |i, j| probes[i].0[j]);
    let m = DVector::from_iterator(probes.len(), probes.iter().map(|p| p.1));
    let svd = a.clone().svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > tolerances::RANK_REL * smax) {
        return Err(Error::RankDeficient(format!(
            "probe directions span fewer than 4 dimensions (σ_min/σ_max = {:e})",
            smin / smax
        )));
    }
    let x = svd.solve(&m, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;
    Ok(OneFormSolution {
        delta_b: [x[0], x[1], x[2], x[3]],
        residual: (&a * &x - m).amax(),
        condition: smax / smin,
        directions: probes.len(),
    })
}

/// Candidate spatial directions: generic ones first, then families nearly
/// tangent to each coordinate plane for points close to a face.
fn direction_pool() -> Vec<Vector3<f64>> {
    let mut pool: Vec<Vector3<f64>> = [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [-1.0, -1.0, -1.0],
        [-1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, -1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    for tilt in [0.25f64, -0.25, 0.1, -0.1, 0.0] {
        for axis in 0..3 {
            for k in 0..8 {
                let a = k as f64 * PI / 4.0 + 0.3;
                let mut v = Vector3::zeros();
                v[axis] = tilt;
                v[(axis + 1) % 3] = (1.0 - tilt * tilt).sqrt() * a.cos();
                v[(axis + 2) % 3] = (1.0 - tilt * tilt).sqrt() * a.sin();
                pool.push(v);
            }
        }
    }
    pool
}

/// Component of `v` orthogonal to the span of `basis` (orthonormal), relative to `|v|`.
fn novelty(basis: &[Vector4<f64>], v: &Vector4<f64>) -> (f64, Vector4<f64>) {
    let r = basis.iter().fold(*v, |r, e| r - e * e.dot(v));
    (r.norm() / v.norm(), r.normalize())
}

/// Minimum relative new component for a direction to count as independent.
const DIRECTION_NOVELTY: f64 = 0.05;

/// `Δb` at `p` from probes along `opts.directions` null directions chosen
/// greedily from a fixed pool among those whose legs fit in the domain.
pub fn recover_oneform(
    ctx: &SymbolContext,
    p: &SpacetimePoint,
    hidden: &dyn MeasurementOracle,
    reference: &dyn MeasurementOracle,
    opts: &RecoveryOptions,
) -> Result<OneFormSolution> {
    let template = opts.m3_template()?;
    let mut basis: Vec<Vector4<f64>> = Vec::new();
    let mut chosen = Vec::new();
    for d in direction_pool() {
        if chosen.len() == opts.directions {
            break;
        }
        let Ok(probe) = probe_geometry(ctx, p, &d, &template, opts.probe_offset, opts.ds) else {
            continue;
        };
        let v = probe.geometry.outgoing.path.state_at(probe.s_at)?.1;
        if basis.len() < 4 {
            let (fresh, e) = novelty(&basis, &v);
            if fresh < DIRECTION_NOVELTY {
                continue;
            }
            basis.push(e);
        }
        chosen.push(probe);
    }
    if basis.len() < 4 {
        return Err(Error::RankDeficient(format!(
            "only {} independent probe directions fit at {:?}",
            basis.len(),
            p.to_vector().as_slice()
        )));
    }
    let rows = chosen
        .par_iter()
        .map(|probe| {
            let sample = log_derivative_probe(&probe.geometry, &[probe.s_at], hidden, reference, opts.ds)?[0];
            Ok((Vector4::from(sample.velocity), sample.value))
        })
        .collect::<Result<Vec<_>>>()?;
    solve_oneform_point(&rows)
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
                let step = pn / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            (0.5 * (1.0 - x), 0.5 * w)
        })
        .collect()
}

/// `ϱ(q)` from each path and their spread.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub path_values: Vec<f64>,
    /// Largest relative deviation of a path value from the first.
    pub discrepancy: f64,
}

/// Polyline in spacetime starting on the boundary.
pub type Path = Vec<SpacetimePoint>;

/// `ϱ(q) = exp(½ ∫ Δb)` along each path (which must start where `ϱ = 1` and
/// end at the same `q`), by Gauss–Legendre quadrature per segment. Paths
/// disagreeing beyond [`tolerances::RHO_PATHS`] mean `Δb` is not exact.
pub fn integrate_rho(
    delta_b: &(dyn Fn(&SpacetimePoint) -> Result<Vector4<f64>> + Sync),
    paths: &[Path],
    nodes: usize,
) -> Result<RhoEstimate> {
    if paths.len() < 2 || paths.iter().any(|p| p.len() < 2) {
        return Err(Error::InvalidInput("need two or more paths of two or more points".into()));
    }
    let end = paths[0].last().expect("checked").to_vector();
    if paths.iter().any(|p| (p.last().expect("checked").to_vector() - end).amax() > 1e-12) {
        return Err(Error::InvalidInput("paths end at different points".into()));
    }
    let rule = gauss_legendre(nodes);
    // (path, weight · segment vector, node)
    let jobs: Vec<(usize, Vector4<f64>, SpacetimePoint)> = paths
        .iter()
        .enumerate()
        .flat_map(|(k, path)| {
            let rule = &rule;
            path.windows(2).flat_map(move |w| {
                let (a, b) = (w[0].to_vector(), w[1].to_vector());
                rule.iter()
                    .map(move |&(t, wt)| (k, (b - a) * wt, SpacetimePoint::from_vector(&(a + (b - a) * t))))
            })
        })
        .collect();
    let terms = jobs
        .par_iter()
        .map(|(k, dx, x)| Ok((*k, delta_b(x)?.dot(dx))))
        .collect::<Result<Vec<_>>>()?;
    let mut integrals = vec![0.0; paths.len()];
    for (k, v) in terms {
        integrals[k] += v;
    }
    let path_values: Vec<f64> = integrals.iter().map(|i| (0.5 * i).exp()).collect();
    let discrepancy = path_values
        .iter()
        .map(|v| (v - path_values[0]).abs() / path_values[0].abs())
        .fold(0.0, f64::max);
    if discrepancy > tolerances::RHO_PATHS {
        return Err(Error::NonExact {
            discrepancy,
            tol: tolerances::RHO_PATHS,
        });
    }
    Ok(RhoEstimate {
        value: path_values.iter().sum::<f64>() / path_values.len() as f64,
        path_values,
        discrepancy,
    })
}

/// Two straight paths at fixed time from the nearest faces of `bounds` along
/// the two axes closest to a face.
pub fn boundary_paths(bounds: &AxisBox, q: &SpacetimePoint) -> Vec<Path> {
    let mut faces: Vec<(f64, usize, f64)> = (0..3)
        .flat_map(|k| [(q.x[k] - bounds.lo[k], k, bounds.lo[k]), (bounds.hi[k] - q.x[k], k, bounds.hi[k])])
        .collect();
    faces.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used = Vec::new();
    let mut paths = Vec::new();
    for (_, axis, face) in faces {
        if used.contains(&axis) {
            continue;
        }
        used.push(axis);
        let mut start = *q;
        start.x[axis] = face;
        paths.push(vec![start, *q]);
        if paths.len() == 2 {
            break;
        }
    }
    paths
}

/// Which polynomial fixed `β₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaBranch {
    /// `10β₂³ − 3aβ₂ − c′ = 0` from `4β₂³ − 3β₂β₃`.
    Cubic,
    /// `58β₂³ − 9aβ₂ − e = 0` from `40β₂³ − 9β₂β₃`.
    Remark,
}

impl std::fmt::Display for BetaBranch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BetaBranch::Cubic => "cubic",
            BetaBranch::Remark => "remark",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaRecovery {
    pub beta2: f64,
    pub beta3: f64,
    pub branch: BetaBranch,
    /// Real roots of the branch polynomial.
    pub roots: Vec<f64>,
    /// `|β₃ − ϱ²β₃¹|` relative to `|a| + |ϱ²β₃¹|`.
    pub residual: f64,
}

/// Real roots of `x³ + px + q`, ascending, polished by Newton.
pub fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    let disc = -(4.0 * p * p * p + 27.0 * q * q);
    let mut roots = if disc > 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3).map(|k| m * (phi - 2.0 * PI * k as f64 / 3.0).cos()).collect::<Vec<_>>()
    } else {
        let r = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        vec![(-q / 2.0 + r).cbrt() + (-q / 2.0 - r).cbrt()]
    };
    for x in &mut roots {
        for _ in 0..3 {
            let d = 3.0 * *x * *x + p;
            if d == 0.0 {
                break;
            }
            let step = (*x * *x * *x + p * *x + q) / d;
            if !step.is_finite() {
                break;
            }
            *x -= step;
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// `(β₂, β₃)` of the hidden medium at a point from `a = 2β₂² + β₃`,
/// `c′ = 4β₂³ − 3β₂β₃` and optionally `e = 40β₂³ − 9β₂β₃`, selecting the
/// root closest to `ϱβ₂¹` and gating on `β₃ ≈ ϱ²β₃¹`.
pub fn recover_betas_point(
    a: f64,
    c_prime: f64,
    remark: Option<f64>,
    rho_hint: f64,
    beta_ref: (f64, f64),
) -> Result<BetaRecovery> {
    let degenerate = |v: f64| v.abs() < tolerances::CUBIC_DEGENERATE;
    let (branch, lead, lin, constant) = match remark {
        Some(e) if degenerate(c_prime) && !degenerate(e) => (BetaBranch::Remark, 58.0, 9.0, e),
        _ => (BetaBranch::Cubic, 10.0, 3.0, c_prime),
    };
    if degenerate(a) && degenerate(constant) {
        return Err(Error::Undetermined(format!(
            "2β₂² + β₃ = {a:e} and the quartic combination = {constant:e} both vanish"
        )));
    }
    if ![a, c_prime, rho_hint].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite recovery input".into()));
    }
    let roots = depressed_cubic_roots(-lin * a / lead, -constant / lead);
    let want = rho_hint * beta_ref.0;
    let beta2 = *roots
        .iter()
        .min_by(|x, y| (*x - want).abs().total_cmp(&(*y - want).abs()))
        .ok_or_else(|| Error::Inconsistent("no real root".into()))?;
    let beta3 = a - 2.0 * beta2 * beta2;
    let expected = rho_hint * rho_hint * beta_ref.1;
    let residual = (beta3 - expected).abs() / (a.abs() + expected.abs());
    if !(residual <= tolerances::BETA_GATE) {
        return Err(Error::Inconsistent(format!(
            "selected β₂ = {beta2} gives β₃ = {beta3}, expected {expected} (relative {residual:e})"
        )));
    }
    Ok(BetaRecovery {
        beta2,
        beta3,
        branch,
        roots,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointDiagnostics {
    pub oneform_residual: f64,
    pub oneform_condition: f64,
    pub directions: usize,
    pub rho_paths: Vec<f64>,
    pub rho_discrepancy: f64,
    pub beta_branch: BetaBranch,
    pub beta3_residual: f64,
    pub m4_fit_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRecord {
    pub q: [f64; 4],
    pub delta_b: [f64; 4],
    pub rho: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub diagnostics: PointDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPoint {
    pub q: [f64; 4],
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryResult {
    pub points: Vec<PointRecord>,
    pub skipped: Vec<SkippedPoint>,
}

const CSV_HEADER: [&str; 15] = [
    "q_t",
    "q_x1",
    "q_x2",
    "q_x3",
    "db_t",
    "db_x1",
    "db_x2",
    "db_x3",
    "rho",
    "beta2",
    "beta3",
    "oneform_residual",
    "rho_discrepancy",
    "beta3_residual",
    "beta_branch",
];

impl RecoveryResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per recovered point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
        w.write_record(CSV_HEADER)?;
        for p in &self.points {
            let d = &p.diagnostics;
            let mut row: Vec<String> = p.q.iter().chain(&p.delta_b).map(f64::to_string).collect();
            row.extend(
                [p.rho, p.beta2, p.beta3, d.oneform_residual, d.rho_discrepancy, d.beta3_residual]
                    .iter()
                    .map(f64::to_string),
            );
            row.push(d.beta_branch.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn beta_at(medium: &MediumParams, k: usize, q: &SpacetimePoint) -> f64 {
    medium.beta(k).map_or(0.0, |b| b.value(q))
}

/// Full pipeline at one point: `Δb`, `ϱ`, then `(β₂, β₃)`.
pub fn recover_point(
    ctx: &SymbolContext,
    q: &SpacetimePoint,
    hidden: &dyn MeasurementOracle,
    reference: &MediumParams,
    opts: &RecoveryOptions,
) -> Result<PointRecord> {
    opts.validate()?;
    let known = SyntheticOracle::new(reference.clone());
    let oneform = recover_oneform(ctx, q, hidden, &known, opts)?;
    let field = |x: &SpacetimePoint| -> Result<Vector4<f64>> {
        Ok(Vector4::from(recover_oneform(ctx, x, hidden, &known, opts)?.delta_b))
    };
    let rho = integrate_rho(&field, &boundary_paths(&opts.bounds, q), opts.rho_nodes)?;
    let r = rho.value;

    let geometry = FrameGeometry::trace(ctx, q, &opts.m3_template()?)?;
    let (m3_hidden, m3_known) = (hidden.m3(&geometry, None)?, known.m3(&geometry, None)?);
    if m3_known.degenerate {
        return Err(Error::Undetermined("reference 2β₂² + β₃ vanishes".into()));
    }
    let (b2, b3) = (beta_at(reference, 2, q), beta_at(reference, 3, q));
    // each incoming leg carries 1/ϱ(q) and the outgoing leg ϱ(q)
    let a = m3_known.coefficient * m3_hidden.value / m3_known.value * r * r;

    let sweep = FourFrameSweep::trace(ctx, q, opts.m4_phi, &opts.m4_s_values)?;
    let (m4_hidden, m4_known) = (hidden.m4(&sweep)?, known.m4(&sweep)?);
    let c_known = 4.0 * b2.powi(3) - 3.0 * b2 * b3;
    let e_known = 40.0 * b2.powi(3) - 9.0 * b2 * b3;
    let c_prime = c_known * m4_hidden.leading / m4_known.leading * r.powi(3);
    let remark = (e_known.abs() >= tolerances::CUBIC_DEGENERATE)
        .then(|| e_known * m4_hidden.subleading / m4_known.subleading * r.powi(3));
    let c_prime = if c_known.abs() < tolerances::CUBIC_DEGENERATE { 0.0 } else { c_prime };
    let betas = recover_betas_point(a, c_prime, remark, r, (b2, b3))?;

    Ok(PointRecord {
        q: q.to_vector().into(),
        delta_b: oneform.delta_b,
        rho: r,
        beta2: betas.beta2,
        beta3: betas.beta3,
        diagnostics: PointDiagnostics {
            oneform_residual: oneform.residual,
            oneform_condition: oneform.condition,
            directions: oneform.directions,
            rho_paths: rho.path_values,
            rho_discrepancy: rho.discrepancy,
            beta_branch: betas.branch,
            beta3_residual: betas.residual,
            m4_fit_residual: m4_hidden.fit.residual,
        },
    })
}

/// [`recover_point`] over `points` in parallel; failures are reported as
/// skipped points with their reason.
pub fn recover(
    ctx: &SymbolContext,
    points: &[SpacetimePoint],
    hidden: &dyn MeasurementOracle,
    reference: &MediumParams,
    opts: &RecoveryOptions,
) -> RecoveryResult {
    let outcomes: Vec<_> = points
        .par_iter()
        .map(|q| recover_point(ctx, q, hidden, reference, opts).map_err(|e| (q, e)))
        .collect();
    let mut result = RecoveryResult {
        points: Vec::new(),
        skipped: Vec::new(),
    };
    for o in outcomes {
        match o {
            Ok(p) => result.points.push(p),
            Err((q, e)) => result.skipped.push(SkippedPoint {
                q: q.to_vector().into(),
                reason: e.to_string(),
            }),
        }
    }
    result
}

/// Residuals of one recovered point against the gauge relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaugeResiduals {
    pub q: [f64; 4],
    /// Largest component of `Δb − 2ϱ⁻¹dϱ`.
    pub delta_b: f64,
    /// `|ϱ̃ − ϱ| / ϱ`.
    pub rho: f64,
    /// `|β₂ − ϱβ₂¹| / |ϱβ₂¹|`, absolute when the reference vanishes.
    pub beta2: f64,
    /// `|β₃ − ϱ²β₃¹| / |ϱ²β₃¹|`, absolute when the reference vanishes.
    pub beta3: f64,
}

/// One statistic of each residual over all points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualStats {
    pub delta_b: f64,
    pub rho: f64,
    pub beta2: f64,
    pub beta3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeReport {
    pub points: Vec<GaugeResiduals>,
    pub max: ResidualStats,
    /// Root mean square over points.
    pub rms: ResidualStats,
}

impl GaugeReport {
    /// Every residual at most `tol`.
    pub fn within(&self, tol: f64) -> bool {
        let m = &self.max;
        [m.delta_b, m.rho, m.beta2, m.beta3].iter().all(|v| *v <= tol)
    }
}

fn relative(got: f64, want: f64) -> f64 {
    let d = (got - want).abs();
    if want == 0.0 {
        d
    } else {
        d / want.abs()
    }
}

/// Compares a recovery with the gauge `ϱ` that produced the hidden medium
/// from `reference`.
pub fn verify_gauge_relations(result: &RecoveryResult, gauge: &GaugeFunction, reference: &MediumParams) -> GaugeReport {
    let points: Vec<GaugeResiduals> = result
        .points
        .iter()
        .map(|p| {
            let q = SpacetimePoint::from_vector(&Vector4::from(p.q));
            let rho = gauge.value(&q);
            let d = gauge.field().differential(&q).0;
            let delta_b = (0..4).map(|k| (p.delta_b[k] - 2.0 * d[k] / rho).abs()).fold(0.0, f64::max);
            GaugeResiduals {
                q: p.q,
                delta_b,
                rho: relative(p.rho, rho),
                beta2: relative(p.beta2, rho * beta_at(reference, 2, &q)),
                beta3: relative(p.beta3, rho * rho * beta_at(reference, 3, &q)),
            }
        })
        .collect();
    let fold = |f: &dyn Fn(&GaugeResiduals) -> f64| -> (f64, f64) {
        let max = points.iter().map(f).fold(0.0, f64::max);
        let rms = if points.is_empty() {
            0.0
        } else {
            (points.iter().map(|p| f(p).powi(2)).sum::<f64>() / points.len() as f64).sqrt()
        };
        (max, rms)
    };
    let (db, r, b2, b3) = (fold(&|p| p.delta_b), fold(&|p| p.rho), fold(&|p| p.beta2), fold(&|p| p.beta3));
    GaugeReport {
        max: ResidualStats {
            delta_b: db.0,
            rho: r.0,
            beta2: b2.0,
            beta3: b3.0,
        },
        rms: ResidualStats {
            delta_b: db.1,
            rho: r.1,
            beta2: b2.1,
            beta3: b3.1,
        },
        points,
    }
}

/// Outcome of the time-independence test at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeVerdict {
    pub i3: [f64; 2],
    /// `c₃(1 − β₂) + 2c₂β₂I₃` for each frame.
    pub lhs: [f64; 2],
    /// `|c₃(1 − β₂)|` solved from the two frames.
    pub c3_term: f64,
    /// `|c₂β₂|` solved from the two frames.
    pub c2_term: f64,
    /// `|c₄β₄|` when `β₂ = β₃ = 0`.
    pub c4_term: Option<f64>,
    pub time_independent: bool,
}

/// Evaluates the third-order time-independence condition for two `I₃`
/// frames at `q`, with `c_k = 2ϱ⁻¹β_k∂_t(ϱ^k)`; when `β₂ = β₃ = 0` the
/// fourth-order condition `c₄β₄ = 0` decides instead.
pub fn verify_time_independence(
    q: &SpacetimePoint,
    rho: &dyn ScalarField,
    betas: (f64, f64, f64),
    frames: [&CovectorFrame; 2],
) -> Result<TimeVerdict> {
    let (b2, b3, b4) = betas;
    let i3 = frames
        .iter()
        .map(|f| {
            interaction_sums(f, b2, b3, b4)?
                .i3
                .ok_or_else(|| Error::InvalidInput("time-independence test needs I₃ frames".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    if (i3[0] - i3[1]).abs() < tolerances::I3_SEPARATION {
        return Err(Error::IllConditionedFrames((i3[0] - i3[1]).abs()));
    }
    let r = rho.value(q);
    let rt = rho.differential(q).0[0];
    let (c2, c3, c4) = (4.0 * b2 * rt, 6.0 * b3 * r * rt, 8.0 * b4 * r * r * rt);
    let lhs = [0, 1].map(|f| c3 * (1.0 - b2) + 2.0 * c2 * b2 * i3[f]);
    // L_f = X + Y I₃^{(f)} with X = c₃(1 − β₂), Y = 2c₂β₂
    let y = (lhs[0] - lhs[1]) / (i3[0] - i3[1]);
    let x = lhs[0] - y * i3[0];
    let (c3_term, c2_term) = (x.abs(), (y / 2.0).abs());
    let c4_term = (b2 == 0.0 && b3 == 0.0).then(|| (c4 * b4).abs());
    let tol = tolerances::TIME_INDEPENDENCE;
    let time_independent = match c4_term {
        Some(t) => t <= tol,
        None => c3_term <= tol && c2_term <= tol,
    };
    Ok(TimeVerdict {
        i3: [i3[0], i3[1]],
        lhs,
        c3_term,
        c2_term,
        c4_term,
        time_independent,
    })
}
