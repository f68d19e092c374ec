use nalgebra::Vector3;
use ndarray::{s, Array2};

use super::{Grid1d, MediumParams};
use crate::error::{Error, Result};
use crate::field::{ScalarField, SpacetimePoint};
use crate::lorentz::ProductMetric;

/// Ghost layers required by [`apply_box_g`].
pub const GHOST_LAYERS: usize = 2;

/// Placement of a `[n, i]` sample array in the `(t, x)` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub t0: f64,
    pub x0: f64,
    pub dt: f64,
    pub dx: f64,
}

impl From<&Grid1d> for Lattice {
    fn from(g: &Grid1d) -> Self {
        Self {
            t0: 0.0,
            x0: 0.0,
            dt: g.dt,
            dx: g.dx,
        }
    }
}

/// Coefficient of `∇u` in the wave operator: `(2 − d) c ∇c`.
fn first_order(metric: &ProductMetric, x: &Vector3<f64>) -> Vector3<f64> {
    let d = metric.dim() as f64;
    (2.0 - d) * metric.speed(x) * metric.speed_gradient(x)
}

/// `□u = ∂_t²u − c²Δu + c^d ∂_i(c^{2−d}) ∂_i u` by second-order central
/// differences on the samples of a one-dimensional metric.
///
/// The result covers the samples that are at least [`GHOST_LAYERS`] away from
/// every edge of `u`.
pub fn apply_box_g(metric: &ProductMetric, u: &Array2<f64>, lattice: Lattice, ghost: usize) -> Result<Array2<f64>> {
    if metric.dim() != 1 {
        return Err(Error::Unsupported("apply_box_g works on (t, x) samples".into()));
    }
    if ghost < GHOST_LAYERS {
        return Err(Error::InsufficientGhost {
            have: ghost,
            need: GHOST_LAYERS,
        });
    }
    let (rows, cols) = u.dim();
    if rows <= 2 * ghost || cols <= 2 * ghost {
        return Err(Error::InsufficientGhost { have: 0, need: GHOST_LAYERS });
    }
    let Lattice { x0, dt, dx, .. } = lattice;
    let mut out = Array2::zeros((rows - 2 * ghost, cols - 2 * ghost));
    for i in ghost..cols - ghost {
        let x = Vector3::new(x0 + i as f64 * dx, 0.0, 0.0);
        let c = metric.speed(&x);
        let a = first_order(metric, &x)[0];
        for n in ghost..rows - ghost {
            let utt = (u[(n + 1, i)] - 2.0 * u[(n, i)] + u[(n - 1, i)]) / (dt * dt);
            let uxx = (u[(n, i + 1)] - 2.0 * u[(n, i)] + u[(n, i - 1)]) / (dx * dx);
            let ux = (u[(n, i + 1)] - u[(n, i - 1)]) / (2.0 * dx);
            out[(n - ghost, i - ghost)] = utt - c * c * uxx + a * ux;
        }
    }
    Ok(out)
}

/// `□ϱ` at `p` with the same central stencil as the grid solvers, using time
/// step `dt` and spatial step `dx` along each active axis.
pub fn box_discrete(metric: &ProductMetric, rho: &dyn ScalarField, p: &SpacetimePoint, dt: f64, dx: f64) -> f64 {
    let v = |dtau: f64, k: usize, h: f64| {
        let mut q = *p;
        q.t += dtau;
        if h != 0.0 {
            q.x[k] += h;
        }
        rho.value(&q)
    };
    let r0 = rho.value(p);
    let mut out = (v(dt, 0, 0.0) - 2.0 * r0 + v(-dt, 0, 0.0)) / (dt * dt);
    let c = metric.speed(&p.x);
    let a = first_order(metric, &p.x);
    for k in 0..metric.dim() {
        let (plus, minus) = (v(0.0, k, dx), v(0.0, k, -dx));
        out -= c * c * (plus - 2.0 * r0 + minus) / (dx * dx);
        out += a[k] * (plus - minus) / (2.0 * dx);
    }
    out
}

/// `□ϱ` at `p` from the field's own differential and Hessian.
pub fn box_analytic(metric: &ProductMetric, rho: &dyn ScalarField, p: &SpacetimePoint) -> f64 {
    let h = rho.hessian(p);
    let d = rho.differential(p);
    let c = metric.speed(&p.x);
    let a = first_order(metric, &p.x);
    let mut out = h[(0, 0)];
    for k in 0..metric.dim() {
        out += -c * c * h[(k + 1, k + 1)] + a[k] * d.0[k + 1];
    }
    out
}

fn d2_4(a: f64, b: f64, c: f64, d: f64, e: f64, h: f64) -> f64 {
    (-a + 16.0 * b - 30.0 * c + 16.0 * d - e) / (12.0 * h * h)
}

fn d1_4(a: f64, b: f64, d: f64, e: f64, h: f64) -> f64 {
    (a - 8.0 * b + 8.0 * d - e) / (12.0 * h)
}

/// Residual of the continuous equation on grid samples, evaluated with
/// fourth-order central differences at nodes two or more steps from the edges
/// (zero elsewhere). Measures how far samples are from a true solution,
/// independently of the scheme that produced them.
pub fn continuum_residual(params: &MediumParams, grid: &Grid1d, p: &Array2<f64>) -> Result<Array2<f64>> {
    if p.dim() != grid.shape() {
        return Err(Error::GridMismatch(format!("samples {:?}, grid {:?}", p.dim(), grid.shape())));
    }
    let sm = params.sample(grid)?;
    let (dt, dx) = (grid.dt, grid.dx);
    let powers: Vec<Array2<f64>> = (2..=params.max_order()).map(|k| p.mapv(|v| v.powi(k as i32))).collect();
    let mut out = grid.zeros();
    for n in 2..grid.nt - 1 {
        for i in 2..grid.nx - 1 {
            let tt = |u: &Array2<f64>| {
                d2_4(u[(n - 2, i)], u[(n - 1, i)], u[(n, i)], u[(n + 1, i)], u[(n + 2, i)], dt)
            };
            let col = p.slice(s![n, i - 2..=i + 2]);
            let uxx = d2_4(col[0], col[1], col[2], col[3], col[4], dx);
            let ux = d1_4(col[0], col[1], col[3], col[4], dx);
            let ut = d1_4(p[(n - 2, i)], p[(n - 1, i)], p[(n + 1, i)], p[(n + 2, i)], dt);
            let c = sm.speed[i];
            let mut r = tt(p) - c * c * uxx + sm.drift[(n, i)] * ux + sm.b_t[(n, i)] * ut + sm.h[(n, i)] * p[(n, i)];
            for (beta, pw) in sm.betas.iter().zip(&powers) {
                r -= beta[(n, i)] * tt(pw);
            }
            out[(n, i)] = r;
        }
    }
    Ok(out)
}
