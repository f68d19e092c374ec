//! Gauge transformations `(b, h, β) ↦ (b + 2ϱ⁻¹dϱ, h + ⟨b, ϱ⁻¹dϱ⟩ + ϱ⁻¹□ϱ, ϱ^m β_{m+1})`
//! and the numerical checks that they leave the DN map unchanged.

use std::sync::Arc;

use nalgebra::Matrix4;
use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{self, Covector, Field, OneForm, SmoothField, SpacetimePoint};
use crate::lorentz::ProductMetric;
use crate::tolerances;
use crate::wave::{
    box_analytic, box_discrete, continuum_residual, convergence_order, dn_trace, solve_nonlinear, BoundarySource,
    Grid1d, MediumParams, OrderEstimate, PicardOptions, Wavefield,
};

/// A nonvanishing `ϱ` equal to 1 on the boundary of the unit interval or cube.
#[derive(Debug, Clone)]
pub struct GaugeFunction {
    rho: Field,
    dim: usize,
}

/// Spatial sample points on the boundary and in the interior of `[0, 1]^dim`.
fn lattice(dim: usize, per_axis: usize) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let axis: Vec<f64> = (0..=per_axis).map(|k| k as f64 / per_axis as f64).collect();
    let mut boundary = Vec::new();
    let mut interior = Vec::new();
    let mut visit = |x: [f64; 3]| {
        let on_face = x[..dim].iter().any(|&v| v == 0.0 || v == 1.0);
        if on_face {
            boundary.push(x);
        } else {
            interior.push(x);
        }
    };
    match dim {
        1 => axis.iter().for_each(|&a| visit([a, 0.0, 0.0])),
        _ => {
            for &a in &axis {
                for &b in &axis {
                    for &c in &axis {
                        visit([a, b, c]);
                    }
                }
            }
        }
    }
    (boundary, interior)
}

impl GaugeFunction {
    /// Validates `ϱ` on a sample lattice over `t ∈ {0, ½, 1}`: nonvanishing
    /// inside, `|ϱ − 1| ≤ 1e−12` on the boundary.
    pub fn new(rho: Field, dim: usize) -> Result<Self> {
        if dim != 1 && dim != 3 {
            return Err(Error::InvalidInput(format!("gauge dimension must be 1 or 3, got {dim}")));
        }
        let per_axis = if dim == 1 { 64 } else { 8 };
        let (boundary, interior) = lattice(dim, per_axis);
        for t in [0.0, 0.5, 1.0] {
            for x in &boundary {
                let v = rho.value(&SpacetimePoint::new(t, *x));
                if (v - 1.0).abs() > tolerances::GAUGE_BOUNDARY {
                    return Err(Error::GaugeBoundary { value: v });
                }
            }
            for x in &interior {
                let v = rho.value(&SpacetimePoint::new(t, *x));
                // continuous and equal to 1 on the boundary: nonvanishing means positive
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::GaugeVanishes { t, x: x[0] });
                }
            }
        }
        Ok(Self { rho, dim })
    }

    /// `ϱ = 1 + amplitude · Π sin(πx_k)`.
    pub fn sine_bump(amplitude: f64, dim: usize) -> Result<Self> {
        Self::new(field::sine_bump(amplitude, dim), dim)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            rho: field::constant(1.0),
            dim,
        }
    }

    pub fn field(&self) -> &Field {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        self.rho.constant_value() == Some(1.0)
    }

    pub fn value(&self, p: &SpacetimePoint) -> f64 {
        self.rho.value(p)
    }

    /// Largest `|∂_t ϱ|` over the validation lattice.
    pub fn time_rate(&self) -> f64 {
        if self.rho.constant_value().is_some() {
            return 0.0;
        }
        let (b, i) = lattice(self.dim, if self.dim == 1 { 32 } else { 4 });
        let mut worst = 0.0f64;
        for t in [0.1, 0.4, 0.7] {
            for x in b.iter().chain(&i) {
                worst = worst.max(self.rho.differential(&SpacetimePoint::new(t, *x)).0[0].abs());
            }
        }
        worst
    }

    /// `1/ϱ` with closed-form derivatives in terms of those of `ϱ`.
    pub fn inverse(&self) -> Self {
        if self.is_identity() {
            return self.clone();
        }
        let (r1, r2, r3) = (self.rho.clone(), self.rho.clone(), self.rho.clone());
        let value = move |p: &SpacetimePoint| 1.0 / r1.value(p);
        let differential = move |p: &SpacetimePoint| {
            let r = r2.value(p);
            Covector(-r2.differential(p).0 / (r * r))
        };
        let hessian = move |p: &SpacetimePoint| -> Matrix4<f64> {
            let r = r3.value(p);
            let d = r3.differential(p).0;
            -r3.hessian(p) / (r * r) + d * d.transpose() * (2.0 / (r * r * r))
        };
        Self {
            rho: Arc::new(SmoothField::new(value, differential).with_hessian(hessian)),
            dim: self.dim,
        }
    }

    /// `ϱ₁ ϱ₂` with product-rule derivatives.
    pub fn product(&self, other: &GaugeFunction) -> Self {
        let (a, b) = (self.rho.clone(), other.rho.clone());
        let (a1, b1, a2, b2) = (a.clone(), b.clone(), a.clone(), b.clone());
        let value = move |p: &SpacetimePoint| a.value(p) * b.value(p);
        let differential =
            move |p: &SpacetimePoint| Covector(a1.differential(p).0 * b1.value(p) + b1.differential(p).0 * a1.value(p));
        let hessian = move |p: &SpacetimePoint| {
            let (da, db) = (a2.differential(p).0, b2.differential(p).0);
            a2.hessian(p) * b2.value(p) + b2.hessian(p) * a2.value(p) + da * db.transpose() + db * da.transpose()
        };
        Self {
            rho: Arc::new(SmoothField::new(value, differential).with_hessian(hessian)),
            dim: self.dim.max(other.dim),
        }
    }
}

/// How `□ϱ` enters `h^ϱ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxMode {
    /// From the field's differential and Hessian.
    Analytic,
    /// With the grid solver's central stencil and steps.
    Discrete { dt: f64, dx: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeOptions {
    /// Refuse time-dependent gauges.
    pub strict: bool,
    pub box_mode: BoxMode,
}

impl Default for GaugeOptions {
    fn default() -> Self {
        Self {
            strict: true,
            box_mode: BoxMode::Analytic,
        }
    }
}

impl GaugeOptions {
    pub fn discrete(grid: &Grid1d) -> Self {
        Self {
            strict: true,
            box_mode: BoxMode::Discrete {
                dt: grid.dt,
                dx: grid.dx,
            },
        }
    }
}

/// `⟨b, ω⟩ = b_t ω_t − c² Σ b_k ω_k`.
pub fn pairing(metric: &ProductMetric, p: &SpacetimePoint, b: &Covector, w: &Covector) -> f64 {
    let c = metric.speed(&p.x);
    let mut s = 0.0;
    for k in 1..=metric.dim() {
        s += b.0[k] * w.0[k];
    }
    b.0[0] * w.0[0] - c * c * s
}

/// Transformed medium `(b^ϱ, h^ϱ, ϱ^m β_{m+1})`.
pub fn apply_gauge(params: &MediumParams, gauge: &GaugeFunction, opts: GaugeOptions) -> Result<MediumParams> {
    if gauge.is_identity() {
        return Ok(params.clone());
    }
    if opts.strict {
        let rate = gauge.time_rate();
        if rate > 0.0 {
            return Err(Error::TimeDependentGauge { rate });
        }
    }
    let rho = gauge.rho.clone();
    let components = std::array::from_fn(|k| {
        let (bk, r) = (params.b.components[k].clone(), rho.clone());
        field::from_fn(move |p| bk.value(p) + 2.0 * r.differential(p).0[k] / r.value(p))
    });
    let (b, h, r, metric) = (params.b.clone(), params.h.clone(), rho.clone(), params.metric.clone());
    let mode = opts.box_mode;
    let h_new = field::from_fn(move |p| {
        let rv = r.value(p);
        let w = Covector(r.differential(p).0 / rv);
        let boxed = match mode {
            BoxMode::Analytic => box_analytic(&metric, r.as_ref(), p),
            BoxMode::Discrete { dt, dx } => box_discrete(&metric, r.as_ref(), p, dt, dx),
        };
        h.value(p) + pairing(&metric, p, &b.at(p), &w) + boxed / rv
    });
    let betas = params
        .betas
        .iter()
        .enumerate()
        .map(|(j, beta)| {
            let (beta, r) = (beta.clone(), rho.clone());
            let m = j as i32 + 1;
            field::from_fn(move |p| r.value(p).powi(m) * beta.value(p))
        })
        .collect();
    Ok(MediumParams {
        metric: params.metric.clone(),
        b: OneForm::new(components),
        h: h_new,
        betas,
    })
}

/// Outcome of [`gauge_solution_transform`].
#[derive(Debug, Clone)]
pub struct GaugedSolution {
    /// `p̃ = ϱ⁻¹ p`.
    pub field: Wavefield,
    /// Sup of the continuum residual of the original equation on `p`.
    pub residual_original: f64,
    /// Same for the gauged equation on `p̃`.
    pub residual_gauged: f64,
    /// `max |p̃ − p|` over boundary nodes.
    pub boundary_change: f64,
}

/// `p̃ = ϱ⁻¹ p`, with residuals of both equations evaluated by the
/// fourth-order continuum stencil.
pub fn gauge_solution_transform(
    params: &MediumParams,
    gauged: &MediumParams,
    field: &Wavefield,
    gauge: &GaugeFunction,
) -> Result<GaugedSolution> {
    let g = field.grid;
    let rho = g.sample(gauge.rho.as_ref());
    let tilde = field.divided_by(&rho)?;
    let sup = |a: &Array2<f64>| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual_original = sup(&continuum_residual(params, &g, &field.values)?);
    let residual_gauged = sup(&continuum_residual(gauged, &g, &tilde.values)?);
    let mut boundary_change = 0.0f64;
    for n in 0..=g.nt {
        for i in [0, g.nx] {
            boundary_change = boundary_change.max((tilde.values[(n, i)] - field.values[(n, i)]).abs());
        }
    }
    Ok(GaugedSolution {
        field: tilde,
        residual_original,
        residual_gauged,
        boundary_change,
    })
}

/// Options of [`dn_discrepancy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyOptions {
    pub picard: PicardOptions,
    /// Constant added to `h^ϱ`; nonzero values break the gauge (negative control).
    pub h_perturbation: f64,
    pub strict: bool,
}

impl Default for DiscrepancyOptions {
    fn default() -> Self {
        Self {
            picard: PicardOptions::default(),
            h_perturbation: 0.0,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDiscrepancy {
    pub dx: f64,
    pub dt: f64,
    /// Discrete `L²((0, T) × ∂Ω)` norm of the trace difference.
    pub absolute: f64,
    /// `absolute` divided by the norm of the original trace.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyReport {
    pub grids: Vec<GridDiscrepancy>,
    /// Observed order over the ladder; `None` for fewer than three grids or
    /// identically zero discrepancies.
    pub order: Option<OrderEstimate>,
}

/// Solves the original and gauged problems on each grid and compares their
/// DN traces. `□ϱ` uses the solver stencil of each grid.
pub fn dn_discrepancy(
    params: &MediumParams,
    gauge: &GaugeFunction,
    source: &BoundarySource,
    grids: &[Grid1d],
    opts: DiscrepancyOptions,
) -> Result<DiscrepancyReport> {
    source.validate()?;
    let mut rows = Vec::with_capacity(grids.len());
    for grid in grids {
        let mut gauged = apply_gauge(
            params,
            gauge,
            GaugeOptions {
                strict: opts.strict,
                ..GaugeOptions::discrete(grid)
            },
        )?;
        if opts.h_perturbation != 0.0 {
            let (h, d) = (gauged.h.clone(), opts.h_perturbation);
            gauged.h = field::from_fn(move |p| h.value(p) + d);
        }
        let (a, b) = rayon::join(
            || solve_nonlinear(params, grid, source, None, opts.picard),
            || solve_nonlinear(&gauged, grid, source, None, opts.picard),
        );
        let (a, b) = (a?, b?);
        let (ta, tb) = (dn_trace(params, &a)?, dn_trace(&gauged, &b)?);
        let absolute = ta.l2_distance(&tb)?;
        let norm = ta.l2_norm();
        rows.push(GridDiscrepancy {
            dx: grid.dx,
            dt: grid.dt,
            absolute,
            relative: if norm > 0.0 { absolute / norm } else { absolute },
        });
    }
    let order = if rows.len() >= 3 && rows.iter().all(|r| r.absolute > 0.0) {
        Some(convergence_order(&rows.iter().map(|r| (r.dx, r.absolute)).collect::<Vec<_>>())?)
    } else {
        None
    };
    Ok(DiscrepancyReport { grids: rows, order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn flat() -> MediumParams {
        MediumParams::new(ProductMetric::constant(1.0, 1).unwrap())
    }

    #[test]
    fn identity_gauge_changes_nothing() {
        let m = flat().with_constant_betas(&[0.5, 0.2]);
        let g = apply_gauge(&m, &GaugeFunction::identity(1), Default::default()).unwrap();
        assert!(Arc::ptr_eq(&g.h, &m.h));
        assert!(Arc::ptr_eq(&g.betas[0], &m.betas[0]));
    }

    #[test]
    fn sine_gauge_matches_direct_substitution() {
        let m = flat().with_constant_betas(&[0.5]);
        let gauge = GaugeFunction::sine_bump(0.1, 1).unwrap();
        let g = apply_gauge(&m, &gauge, Default::default()).unwrap();
        for x in [0.1, 0.37, 0.8] {
            let p = SpacetimePoint::on_line(0.2, x);
            let rho = 1.0 + 0.1 * (PI * x).sin();
            let bx = 0.2 * PI * (PI * x).cos() / rho;
            assert!((g.b.components[1].value(&p) - bx).abs() < 1e-14);
            assert_eq!(g.b.components[0].value(&p), 0.0);
            // c ≡ 1: □ϱ = −ϱ_xx
            let boxed = 0.1 * PI * PI * (PI * x).sin();
            assert!((g.h.value(&p) - boxed / rho).abs() < 1e-12);
            assert!((g.betas[0].value(&p) - 0.5 * rho).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_restores_the_medium() {
        let speed = field::from_fn(|p| 1.0 + 0.2 * p.x[0]);
        let m = MediumParams::new(ProductMetric::new(speed, 1).unwrap())
            .with_one_form(OneForm::constant([0.3, -0.1, 0.0, 0.0]))
            .with_potential(field::from_fn(|p| 0.4 * p.x[0]))
            .with_constant_betas(&[0.5, 2.0, 1.0]);
        let gauge = GaugeFunction::sine_bump(0.1, 1).unwrap();
        let there = apply_gauge(&m, &gauge, Default::default()).unwrap();
        let back = apply_gauge(&there, &gauge.inverse(), Default::default()).unwrap();
        for x in [0.05, 0.3, 0.61, 0.9] {
            let p = SpacetimePoint::on_line(0.4, x);
            for k in 0..2 {
                assert!((back.b.components[k].value(&p) - m.b.components[k].value(&p)).abs() < 1e-15);
            }
            for (a, b) in back.betas.iter().zip(&m.betas) {
                assert!((a.value(&p) - b.value(&p)).abs() < 1e-15);
            }
            assert!((back.h.value(&p) - m.h.value(&p)).abs() < 1e-10, "{}", back.h.value(&p) - m.h.value(&p));
        }
    }

    #[test]
    fn composition_multiplies_gauges() {
        let m = flat()
            .with_one_form(OneForm::constant([0.2, 0.1, 0.0, 0.0]))
            .with_constant_betas(&[0.5, 2.0]);
        let g1 = GaugeFunction::sine_bump(0.1, 1).unwrap();
        let g2 = GaugeFunction::new(
            field::from_fn(|p| 1.0 + 0.05 * (2.0 * PI * p.x[0]).sin()),
            1,
        )
        .unwrap();
        let seq = apply_gauge(&apply_gauge(&m, &g2, Default::default()).unwrap(), &g1, Default::default()).unwrap();
        let once = apply_gauge(&m, &g1.product(&g2), Default::default()).unwrap();
        for x in [0.2, 0.45, 0.7] {
            let p = SpacetimePoint::on_line(0.0, x);
            assert!((seq.b.components[1].value(&p) - once.b.components[1].value(&p)).abs() < 1e-9);
            for (a, b) in seq.betas.iter().zip(&once.betas) {
                assert!((a.value(&p) - b.value(&p)).abs() < 1e-14);
            }
            assert!((seq.h.value(&p) - once.h.value(&p)).abs() < 1e-6);
        }
    }

    #[test]
    fn strict_mode_refuses_time_dependence() {
        let rho = field::from_fn(|p| 1.0 + 0.05 * p.t * (PI * p.x[0]).sin());
        let gauge = GaugeFunction::new(rho, 1).unwrap();
        assert!(matches!(
            apply_gauge(&flat(), &gauge, Default::default()),
            Err(Error::TimeDependentGauge { .. })
        ));
        let lax = GaugeOptions {
            strict: false,
            ..Default::default()
        };
        assert!(apply_gauge(&flat(), &gauge, lax).is_ok());
    }

    #[test]
    fn invalid_gauges_are_rejected() {
        assert!(matches!(
            GaugeFunction::new(field::constant(1.1), 1),
            Err(Error::GaugeBoundary { .. })
        ));
        let vanishing = field::from_fn(|p| 1.0 - 4.0 * (PI * p.x[0]).sin());
        assert!(GaugeFunction::new(vanishing, 1).is_err());
    }

    #[test]
    fn transformed_solution_solves_the_gauged_equation() {
        let m = flat().with_constant_betas(&[0.5]);
        let gauge = GaugeFunction::sine_bump(0.1, 1).unwrap();
        let gauged = apply_gauge(&m, &gauge, Default::default()).unwrap();
        let grid = Grid1d::with_courant(200, 0.8, 0.5).unwrap();
        let src = BoundarySource::bump(1e-3, 0.02, 0.4);
        let w = solve_nonlinear(&m, &grid, src, None, Default::default()).unwrap();
        let out = gauge_solution_transform(&m, &gauged, &w, &gauge).unwrap();
        assert!(out.residual_gauged <= 10.0 * out.residual_original, "{out:?}");
        assert!(out.boundary_change <= 1e-12 * src.amplitude);
    }

    #[test]
    fn identity_gauge_gives_zero_discrepancy() {
        let m = flat().with_constant_betas(&[0.5]);
        let grids = [Grid1d::with_courant(50, 0.5, 0.5).unwrap()];
        let r = dn_discrepancy(&m, &GaugeFunction::identity(1), &BoundarySource::bump(1e-3, 0.02, 0.3), &grids, Default::default())
            .unwrap();
        assert_eq!(r.grids[0].absolute, 0.0);
    }
}
