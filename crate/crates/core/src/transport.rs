//! Principal-symbol transport along null bicharacteristics and the M₃/M₄
//! measurement functionals built from it.
//!
//! The transport ratio of a leg from `s₀` to `s₁` is
//! `exp(−½ ∫_{s₀}^{s₁} b(ẋ(s)) ds)` with the half-density term `c_ω` set to
//! zero; it cancels in every ratio between media sharing the metric.

use std::sync::Arc;

use nalgebra::Vector4;
use serde::Serialize;

use crate::covector::{build_four_frame, fit_laurent, interaction_sums, CovectorFrame, LaurentFit};
use crate::error::{Error, Result};
use crate::field::{Covector, OneForm, SpacetimePoint};
use crate::lorentz::{from_orthonormal_frame, trace_bicharacteristic, AxisBox, Bicharacteristic, Domain, ProductMetric, StepControl};
use crate::tolerances;
use crate::wave::MediumParams;

/// `b(x(s))(ẋ(s))` on the Hermite interpolant of the path.
pub fn transport_integrand(path: &Bicharacteristic, b: &OneForm, s: f64) -> Result<f64> {
    let (pos, vel) = path.state_at(s)?;
    let p = SpacetimePoint::from_vector(&pos);
    Ok(b.at(&p).0.dot(&vel))
}

fn check_coverage(path: &Bicharacteristic, s0: f64, s1: f64) -> Result<()> {
    let (lo, hi) = path.s_range();
    let slack = 1e-12 * (1.0 + hi.abs());
    let (a, b) = (s0.min(s1), s0.max(s1));
    if !(a >= lo - slack && b <= hi + slack) {
        return Err(Error::CoverageGap { s0, s1, lo, hi });
    }
    Ok(())
}

/// Sample parameters strictly inside `(a, b)`, with the ends, in order.
fn breakpoints(path: &Bicharacteristic, a: f64, b: f64) -> Vec<f64> {
    let mut out = vec![a];
    out.extend(path.samples().iter().map(|p| p.s).filter(|&s| s > a && s < b));
    out.push(b);
    out
}

/// Simpson panel: end points, midpoint and the panel estimate.
#[derive(Clone, Copy)]
struct Panel {
    a: (f64, f64),
    m: (f64, f64),
    b: (f64, f64),
    whole: f64,
}

impl Panel {
    fn new(f: &dyn Fn(f64) -> Result<f64>, a: (f64, f64), b: (f64, f64)) -> Result<Self> {
        let m = 0.5 * (a.0 + b.0);
        let m = (m, f(m)?);
        let whole = (b.0 - a.0) / 6.0 * (a.1 + 4.0 * m.1 + b.1);
        Ok(Self { a, m, b, whole })
    }
}

fn simpson(f: &dyn Fn(f64) -> Result<f64>, p: Panel, tol: f64, depth: u32) -> Result<f64> {
    let (left, right) = (Panel::new(f, p.a, p.m)?, Panel::new(f, p.m, p.b)?);
    let delta = left.whole + right.whole - p.whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left.whole + right.whole + delta / 15.0);
    }
    Ok(simpson(f, left, tol / 2.0, depth - 1)? + simpson(f, right, tol / 2.0, depth - 1)?)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
fn adaptive_simpson(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    let panel = Panel::new(f, (a, f(a)?), (b, f(b)?))?;
    simpson(f, panel, tol, 40)
}

/// `∫_{s₀}^{s₁} b(ẋ) ds`, piecewise between path samples.
pub fn transport_exponent(path: &Bicharacteristic, b: &OneForm, s0: f64, s1: f64) -> Result<f64> {
    check_coverage(path, s0, s1)?;
    if b.is_zero() || s0 == s1 {
        return Ok(0.0);
    }
    let (a, c, sign) = if s0 < s1 { (s0, s1, 1.0) } else { (s1, s0, -1.0) };
    let f = |s: f64| transport_integrand(path, b, s);
    let knots = breakpoints(path, a, c);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let share = tolerances::TRANSPORT_QUAD * (w[1] - w[0]) / (c - a);
        total += adaptive_simpson(&f, w[0], w[1], share)?;
    }
    Ok(sign * total)
}

/// Closed-form ratio `exp(−½ ∫_{s₀}^{s₁} b(ẋ) ds)` by quadrature.
pub fn transport_closed_form(path: &Bicharacteristic, b: &OneForm, s0: f64, s1: f64) -> Result<f64> {
    Ok((-0.5 * transport_exponent(path, b, s0, s1)?).exp())
}

/// Ratio `a(s₁)/a(s₀)` from RK4 on `da/ds = −½ b(ẋ) a`, with sub-steps of at
/// most `step` inside every sample interval.
pub fn transport_ode_solve(path: &Bicharacteristic, b: &OneForm, s0: f64, s1: f64, step: f64) -> Result<f64> {
    check_coverage(path, s0, s1)?;
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("ODE step must be positive, got {step}")));
    }
    if b.is_zero() || s0 == s1 {
        return Ok(1.0);
    }
    let (a, c) = (s0.min(s1), s0.max(s1));
    let rate = |s: f64| -> Result<f64> { Ok(-0.5 * transport_integrand(path, b, s)?) };
    let mut y = 1.0;
    for w in breakpoints(path, a, c).windows(2) {
        let n = ((w[1] - w[0]) / step).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / n as f64;
        for k in 0..n {
            let s = w[0] + k as f64 * h;
            let (r1, r2, r4) = (rate(s)?, rate(s + h / 2.0)?, rate(s + h)?);
            let k1 = r1 * y;
            let k2 = r2 * (y + h / 2.0 * k1);
            let k3 = r2 * (y + h / 2.0 * k2);
            let k4 = r4 * (y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    Ok(if s0 < s1 { y } else { 1.0 / y })
}

/// Ray geometry shared by every medium with the same metric.
#[derive(Clone)]
pub struct SymbolContext {
    pub metric: ProductMetric,
    pub domain: Arc<dyn Domain>,
    pub control: StepControl,
    /// Parameter budget for each leg; legs must leave the domain before it.
    pub s_max: f64,
}

impl std::fmt::Debug for SymbolContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolContext")
            .field("metric", &self.metric)
            .field("s_max", &self.s_max)
            .finish_non_exhaustive()
    }
}

impl SymbolContext {
    /// 3+1-D Minkowski space over the unit cube.
    pub fn minkowski_cube() -> Self {
        Self {
            metric: ProductMetric::minkowski(3),
            domain: Arc::new(AxisBox::unit_cube()),
            control: StepControl::with_step(2e-2),
            s_max: 2.0,
        }
    }
}

/// Role of a leg in a measurement functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LegRole {
    /// From `q` to the measurement point `y` on the boundary.
    Outgoing,
    /// From the boundary entry point `x^o_j` to `q` (0-based `j`).
    Incoming(usize),
}

impl std::fmt::Display for LegRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LegRole::Outgoing => write!(f, "outgoing"),
            LegRole::Incoming(j) => write!(f, "incoming {}", j + 1),
        }
    }
}

/// A traced leg: the path starts at `q` and runs to the boundary at `s_end`
/// (backward in time for incoming legs).
#[derive(Debug, Clone)]
pub struct Leg {
    pub role: LegRole,
    pub path: Bicharacteristic,
    pub s_end: f64,
    pub end: SpacetimePoint,
}

impl Leg {
    /// Transport ratio of the leg in its causal direction.
    pub fn ratio(&self, b: &OneForm) -> Result<f64> {
        match self.role {
            LegRole::Outgoing => transport_closed_form(&self.path, b, 0.0, self.s_end),
            LegRole::Incoming(_) => transport_closed_form(&self.path, b, self.s_end, 0.0),
        }
    }

    /// Outgoing ratio from `q` to the point at parameter `s` along the leg.
    pub fn ratio_to(&self, b: &OneForm, s: f64) -> Result<f64> {
        transport_closed_form(&self.path, b, 0.0, s)
    }
}

/// Traces the leg through `q` along the null direction of the Minkowski-frame
/// covector `zeta`, future-pointing for outgoing legs and past-pointing for
/// incoming ones, and checks it for conjugate points before the boundary.
pub fn trace_leg(ctx: &SymbolContext, q: &SpacetimePoint, zeta: &Vector4<f64>, role: LegRole) -> Result<Leg> {
    if zeta[0] == 0.0 {
        return Err(Error::InvalidInput(format!("covector {zeta:?} has no time component")));
    }
    // ζ₀ = −½ makes ẋ = 2g⁻¹ζ future-pointing with ẋ⁰ = 1
    let unit = zeta / (-2.0 * zeta[0]);
    let oriented = match role {
        LegRole::Outgoing => unit,
        LegRole::Incoming(_) => -unit,
    };
    let z = from_orthonormal_frame(&ctx.metric, &q.x, &Covector(oriented));
    let path = trace_bicharacteristic(&ctx.metric, q, &z, ctx.s_max, ctx.control)?.annotate(ctx.domain.as_ref(), &ctx.metric)?;
    let exit = path
        .crossings
        .and_then(|c| c.exit)
        .ok_or_else(|| Error::NoCrossing(format!("{role} leg from {:?}", q.to_vector().as_slice())))?;
    if let Some(rho) = path.conjugate.filter(|&r| r <= exit.s) {
        return Err(Error::ConjugatePoint {
            leg: role.to_string(),
            rho,
        });
    }
    Ok(Leg {
        role,
        path,
        s_end: exit.s,
        end: exit.point,
    })
}

/// Legs of one frame at `q`: outgoing along the target, incoming along each member.
#[derive(Debug, Clone)]
pub struct FrameGeometry {
    pub q: SpacetimePoint,
    pub frame: CovectorFrame,
    pub outgoing: Leg,
    pub incoming: Vec<Leg>,
}

impl FrameGeometry {
    pub fn trace(ctx: &SymbolContext, q: &SpacetimePoint, frame: &CovectorFrame) -> Result<Self> {
        if !ctx.domain.contains(&q.x) {
            return Err(Error::OutsideDomain {
                t: q.t,
                x: [q.x[0], q.x[1], q.x[2]],
            });
        }
        let outgoing = trace_leg(ctx, q, &frame.target, LegRole::Outgoing)?;
        let incoming = frame
            .members
            .iter()
            .enumerate()
            .map(|(j, m)| trace_leg(ctx, q, m, LegRole::Incoming(j)))
            .collect::<Result<_>>()?;
        Ok(Self {
            q: *q,
            frame: frame.clone().at(*q),
            outgoing,
            incoming,
        })
    }

    fn incoming_product(&self, b: &OneForm) -> Result<f64> {
        self.incoming.iter().map(|l| l.ratio(b)).product()
    }
}

/// Which functional a [`MeasurementFunctional`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FunctionalKind {
    M3,
    M4,
}

/// A synthesized symbol-level measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementFunctional {
    pub kind: FunctionalKind,
    pub q: [f64; 4],
    /// Nonlinear coefficient at `q` (`2β₂² + β₃` or `𝒞`).
    pub coefficient: f64,
    /// Outgoing ratio times the incoming ratios.
    pub transport: f64,
    pub symbols: f64,
    pub value: f64,
    /// `|coefficient|` fell below the nondegeneracy gate.
    pub degenerate: bool,
}

fn beta_at(medium: &MediumParams, k: usize, q: &SpacetimePoint) -> f64 {
    medium.beta(k).map_or(0.0, |b| b.value(q))
}

fn check_symbols(symbols: &[f64], n: usize) -> Result<f64> {
    if symbols.len() != n {
        return Err(Error::InvalidInput(format!("{n} source symbols expected, got {}", symbols.len())));
    }
    Ok(symbols.iter().product())
}

/// `2β₂² + β₃` at `q`.
pub fn m3_coefficient(medium: &MediumParams, q: &SpacetimePoint) -> f64 {
    let b2 = beta_at(medium, 2, q);
    2.0 * b2 * b2 + beta_at(medium, 3, q)
}

/// `(2β₂² + β₃)(q) · T(q → y) · Π T(x^o_j → q) · Π σ_j` with `y` at the
/// boundary, or at parameter `y_param` along the outgoing leg when given.
pub fn synthesize_m3_at(
    geometry: &FrameGeometry,
    medium: &MediumParams,
    symbols: &[f64],
    y_param: Option<f64>,
) -> Result<MeasurementFunctional> {
    if geometry.incoming.len() != 3 {
        return Err(Error::InvalidInput(format!("M3 needs a three-frame, got {} members", geometry.incoming.len())));
    }
    let sigma = check_symbols(symbols, 3)?;
    let q = geometry.q;
    let coefficient = m3_coefficient(medium, &q);
    let out = match y_param {
        None => geometry.outgoing.ratio(&medium.b)?,
        Some(s) => geometry.outgoing.ratio_to(&medium.b, s)?,
    };
    let transport = out * geometry.incoming_product(&medium.b)?;
    Ok(MeasurementFunctional {
        kind: FunctionalKind::M3,
        q: q.to_vector().into(),
        coefficient,
        transport,
        symbols: sigma,
        value: coefficient * transport * sigma,
        degenerate: coefficient.abs() < tolerances::BETA_GATE,
    })
}

/// [`synthesize_m3_at`] with the legs traced for `frame` at `q`.
pub fn synthesize_m3(
    ctx: &SymbolContext,
    q: &SpacetimePoint,
    frame: &CovectorFrame,
    medium: &MediumParams,
    symbols: &[f64],
) -> Result<MeasurementFunctional> {
    synthesize_m3_at(&FrameGeometry::trace(ctx, q, frame)?, medium, symbols, None)
}

/// Four-frame legs over a sweep of the Laurent parameter `s = sin(θ/2)`.
#[derive(Debug, Clone)]
pub struct FourFrameSweep {
    pub phi: f64,
    pub s_values: Vec<f64>,
    pub geometries: Vec<FrameGeometry>,
}

impl FourFrameSweep {
    pub fn trace(ctx: &SymbolContext, q: &SpacetimePoint, phi: f64, s_values: &[f64]) -> Result<Self> {
        let geometries = s_values
            .iter()
            .map(|&s| {
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::InvalidInput(format!("Laurent parameter {s} outside (0, 1)")));
                }
                FrameGeometry::trace(ctx, q, &build_four_frame(phi, 2.0 * s.asin())?)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            phi,
            s_values: s_values.to_vec(),
            geometries,
        })
    }

    /// Default sweep: 16 points on `s ∈ [0.05, 0.2]`.
    pub fn default_s_values() -> Vec<f64> {
        (0..16).map(|k| 0.05 + 0.01 * k as f64).collect()
    }
}

/// Full-`𝒞` values over a sweep and the extracted leading functional.
#[derive(Debug, Clone, Serialize)]
pub struct M4Functional {
    pub q: [f64; 4],
    /// `(s, M₄(s))` with the full `𝒞 = Cβ₂³ + Dβ₂β₃ + β₄`.
    pub samples: Vec<(f64, f64)>,
    pub fit: LaurentFit,
    /// `−2 ×` the `s⁻³` coefficient: `(4β₂³ − 3β₂β₃)(q)` times the limiting
    /// transport and symbols.
    pub leading: f64,
    /// `4 ×` the `s⁻¹` coefficient: carries `40β₂³ − 9β₂β₃` when the leading
    /// combination vanishes.
    pub subleading: f64,
}

/// Orders of the Laurent fit of `M₄(s)`.
pub const M4_ORDERS: [i32; 6] = [-3, -2, -1, 0, 1, 2];

/// `M₄(s) = 𝒞(s) · T(q → y) · Π T(x^o_j(s) → q) · Π σ_j` over the sweep, and
/// its `s⁻³` coefficient from [`fit_laurent`].
pub fn synthesize_m4(sweep: &FourFrameSweep, medium: &MediumParams, symbols: &[f64]) -> Result<M4Functional> {
    let sigma = check_symbols(symbols, 4)?;
    let first = sweep
        .geometries
        .first()
        .ok_or_else(|| Error::InvalidInput("empty four-frame sweep".into()))?;
    let q = first.q;
    let (b2, b3, b4) = (beta_at(medium, 2, &q), beta_at(medium, 3, &q), beta_at(medium, 4, &q));
    let mut samples = Vec::with_capacity(sweep.s_values.len());
    for (&s, g) in sweep.s_values.iter().zip(&sweep.geometries) {
        let curly = interaction_sums(&g.frame, b2, b3, b4)?
            .curly_c
            .expect("four-frames give 𝒞");
        let transport = g.outgoing.ratio(&medium.b)? * g.incoming_product(&medium.b)?;
        samples.push((s, curly * transport * sigma));
    }
    let fit = fit_laurent(&samples, &M4_ORDERS)?;
    Ok(M4Functional {
        q: q.to_vector().into(),
        leading: -2.0 * fit.coefficient(-3).expect("order −3 is fitted"),
        subleading: 4.0 * fit.coefficient(-1).expect("order −1 is fitted"),
        samples,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covector::build_i3_frame;
    use crate::field;
    use crate::gauge::{apply_gauge, GaugeFunction, GaugeOptions};

    fn straight_ray(dir: [f64; 3]) -> Bicharacteristic {
        let m = ProductMetric::minkowski(3);
        let d = nalgebra::Vector3::from(dir).normalize();
        let z = Covector::new([-0.5, 0.5 * d[0], 0.5 * d[1], 0.5 * d[2]]);
        trace_bicharacteristic(&m, &SpacetimePoint::new(0.0, [0.5; 3]), &z, 1.0, StepControl::with_step(0.05)).unwrap()
    }

    fn wavy_b() -> OneForm {
        OneForm::new([
            field::from_fn(|p| 0.3 + 0.2 * (2.0 * p.x[0]).sin()),
            field::from_fn(|p| 0.1 * p.t * p.x[1]),
            field::from_fn(|p| -0.2 * (p.x[2] + p.t).cos()),
            field::constant(0.05),
        ])
    }

    #[test]
    fn zero_one_form_gives_unit_ratio() {
        let path = straight_ray([1.0, 0.2, 0.0]);
        assert_eq!(transport_closed_form(&path, &OneForm::zero(), 0.0, 0.8).unwrap(), 1.0);
        assert_eq!(transport_ode_solve(&path, &OneForm::zero(), 0.0, 0.8, 1e-3).unwrap(), 1.0);
    }

    #[test]
    fn constant_damping_on_a_straight_ray() {
        let path = straight_ray([0.0, 1.0, 1.0]);
        let beta = 0.7;
        let b = OneForm::damping(beta);
        assert_eq!(path.first().velocity.0[0], 1.0);
        let want = (-0.5 * beta * 0.6).exp();
        let closed = transport_closed_form(&path, &b, 0.1, 0.7).unwrap();
        let ode = transport_ode_solve(&path, &b, 0.1, 0.7, tolerances::TRANSPORT_ODE_STEP).unwrap();
        assert!((closed - want).abs() < 1e-10 * want);
        assert!((ode - want).abs() < 1e-10 * want);
    }

    #[test]
    fn ode_matches_quadrature_for_variable_b() {
        let path = straight_ray([1.0, -0.3, 0.4]);
        let b = wavy_b();
        let closed = transport_closed_form(&path, &b, 0.0, 0.9).unwrap();
        let ode = transport_ode_solve(&path, &b, 0.0, 0.9, tolerances::TRANSPORT_ODE_STEP).unwrap();
        assert!((closed - ode).abs() < 1e-8 * closed, "{closed} {ode}");
        let back = transport_closed_form(&path, &b, 0.9, 0.0).unwrap();
        assert!((closed * back - 1.0).abs() < 1e-13);
    }

    #[test]
    fn ratios_multiply_over_concatenation() {
        let path = straight_ray([0.3, 1.0, -0.2]);
        let b = wavy_b();
        let whole = transport_closed_form(&path, &b, 0.05, 0.95).unwrap();
        let split = transport_closed_form(&path, &b, 0.05, 0.4321).unwrap() * transport_closed_form(&path, &b, 0.4321, 0.95).unwrap();
        assert!((whole - split).abs() < 1e-12 * whole);
    }

    #[test]
    fn uncovered_interval_is_a_coverage_gap() {
        let path = straight_ray([1.0, 0.0, 0.0]);
        assert!(matches!(
            transport_closed_form(&path, &wavy_b(), 0.0, 2.0),
            Err(Error::CoverageGap { .. })
        ));
    }

    #[test]
    fn gauge_term_contributes_the_endpoint_quotient() {
        let path = straight_ray([1.0, 0.5, -0.3]);
        let rho = field::sine_bump(0.2, 3);
        let b = wavy_b();
        let r = rho.clone();
        let gauge_part = OneForm::new(std::array::from_fn(|k| {
            let r = r.clone();
            field::from_fn(move |p| 2.0 * r.differential(p).0[k] / r.value(p))
        }));
        let gauged = OneForm::new(std::array::from_fn(|k| {
            let (a, g) = (b.components[k].clone(), gauge_part.components[k].clone());
            field::from_fn(move |p| a.value(p) + g.value(p))
        }));
        let (s0, s1) = (0.1, 0.6);
        let quotient = rho.value(&path.point_at(s0).unwrap()) / rho.value(&path.point_at(s1).unwrap());
        let got = transport_closed_form(&path, &gauge_part, s0, s1).unwrap();
        assert!((got - quotient).abs() < 1e-9, "{got} {quotient}");
        let both = transport_closed_form(&path, &gauged, s0, s1).unwrap();
        let base = transport_closed_form(&path, &b, s0, s1).unwrap();
        assert!((both - base * quotient).abs() < 1e-9 * both);
    }

    fn centre() -> SpacetimePoint {
        SpacetimePoint::new(1.0, [0.5, 0.45, 0.55])
    }

    fn flat_medium(betas: &[f64]) -> MediumParams {
        MediumParams::new(ProductMetric::minkowski(3)).with_constant_betas(betas)
    }

    #[test]
    fn m3_without_damping_is_the_coefficient() {
        let frame = build_i3_frame(0.9, 1.1).unwrap();
        let ctx = SymbolContext::minkowski_cube();
        let m = synthesize_m3(&ctx, &centre(), &frame, &flat_medium(&[1.0, 2.0]), &[1.0; 3]).unwrap();
        assert_eq!(m.value, 4.0);
        assert!(!m.degenerate);
        let zero = synthesize_m3(&ctx, &centre(), &frame, &flat_medium(&[0.0, 0.0]), &[1.0; 3]).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(zero.degenerate);
    }

    #[test]
    fn m3_is_gauge_invariant() {
        let ctx = SymbolContext::minkowski_cube();
        let reference = flat_medium(&[1.0, 2.0]).with_one_form(wavy_b());
        let gauge = GaugeFunction::sine_bump(0.1, 3).unwrap();
        let hidden = apply_gauge(&reference, &gauge, GaugeOptions::default()).unwrap();
        let geometry = FrameGeometry::trace(&ctx, &centre(), &build_i3_frame(0.9, 1.1).unwrap()).unwrap();
        let a = synthesize_m3_at(&geometry, &reference, &[1.0; 3], None).unwrap();
        let b = synthesize_m3_at(&geometry, &hidden, &[1.0; 3], None).unwrap();
        assert!((a.value - b.value).abs() < 1e-8 * a.value.abs(), "{} {}", a.value, b.value);
        assert!((a.coefficient - b.coefficient).abs() > 1e-3);
    }

    #[test]
    fn m4_full_value_is_the_interaction_sum() {
        let ctx = SymbolContext::minkowski_cube();
        let sweep = FourFrameSweep::trace(&ctx, &centre(), 0.4, &FourFrameSweep::default_s_values()).unwrap();
        let medium = flat_medium(&[1.0, 2.0, 0.0]);
        let m4 = synthesize_m4(&sweep, &medium, &[1.0; 4]).unwrap();
        let direct = interaction_sums(&sweep.geometries[3].frame, 1.0, 2.0, 0.0).unwrap().curly_c.unwrap();
        assert_eq!(m4.samples[3].1, direct);
        assert!((m4.leading + 2.0).abs() < 0.03 * 2.0, "{}", m4.leading);
    }

    #[test]
    fn m4_leading_term_is_gauge_invariant() {
        let ctx = SymbolContext::minkowski_cube();
        let reference = flat_medium(&[1.0, 2.0, 0.5]).with_one_form(wavy_b());
        let gauge = GaugeFunction::sine_bump(0.1, 3).unwrap();
        let hidden = apply_gauge(&reference, &gauge, GaugeOptions::default()).unwrap();
        let sweep = FourFrameSweep::trace(&ctx, &centre(), 0.4, &FourFrameSweep::default_s_values()).unwrap();
        let a = synthesize_m4(&sweep, &reference, &[1.0; 4]).unwrap();
        let b = synthesize_m4(&sweep, &hidden, &[1.0; 4]).unwrap();
        assert!((a.leading - b.leading).abs() < 1e-6 * a.leading.abs(), "{} {}", a.leading, b.leading);
    }

    #[test]
    fn conjugate_point_on_a_leg_is_refused() {
        // a strong lens focuses rays passing through the centre
        let speed = field::from_fn(|p| {
            let r2 = (p.x[0] - 0.5).powi(2) + (p.x[1] - 0.5).powi(2) + (p.x[2] - 0.5).powi(2);
            1.0 - 0.6 * (-r2 / 0.02).exp()
        });
        let ctx = SymbolContext {
            metric: ProductMetric::new(speed, 3).unwrap(),
            control: StepControl::with_step(5e-3),
            s_max: 3.0,
            ..SymbolContext::minkowski_cube()
        };
        let q = SpacetimePoint::new(1.0, [0.05, 0.5, 0.5]);
        let err = trace_leg(&ctx, &q, &Vector4::new(-1.0, 1.0, 0.0, 0.0), LegRole::Outgoing).unwrap_err();
        assert!(matches!(err, Error::ConjugatePoint { .. }), "{err}");
    }
}
