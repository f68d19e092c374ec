use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;
use ndarray::{Array2, Array3};

use super::MediumParams;
use crate::error::{Error, Result};
use crate::field::SpacetimePoint;

/// Uniform grid on `[0, T] × [0, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2d {
    pub n: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
}

impl Grid2d {
    pub fn with_courant(n: usize, t_end: f64, courant: f64) -> Result<Self> {
        if n < 4 || !(t_end > 0.0) || !(courant > 0.0) {
            return Err(Error::InvalidInput(format!("bad 2-D grid (n={n}, T={t_end})")));
        }
        let dx = 1.0 / n as f64;
        let nt = (t_end / (courant * dx) - 1e-9).ceil() as usize;
        Ok(Self {
            n,
            nt,
            dx,
            dt: t_end / nt as f64,
        })
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }
}

/// Dirichlet data `g(t, x, y)` on the boundary of the unit square.
#[derive(Clone)]
pub struct PlaneSource(pub Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>);

impl fmt::Debug for PlaneSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PlaneSource")
    }
}

/// Samples indexed `[k, i, j]` for `(t_k, x_i, y_j)`.
#[derive(Debug, Clone)]
pub struct Wavefield2d {
    pub grid: Grid2d,
    pub values: Array3<f64>,
}

impl Wavefield2d {
    pub fn snapshot(&self, k: usize) -> Array2<f64> {
        self.values.index_axis(ndarray::Axis(0), k).to_owned()
    }
}

/// Linear 2+1-D solve on the unit square (`x³ = 0`, `β` ignored). In two space
/// dimensions the first-order part of `□` vanishes, leaving
/// `p_tt − c²Δp + b_t p_t − c²(b_x p_x + b_y p_y) + h p = 0`.
pub fn solve_linear_2d(params: &MediumParams, grid: &Grid2d, source: &PlaneSource) -> Result<Wavefield2d> {
    let n = grid.n;
    let (dt, dx) = (grid.dt, grid.dx);
    let at = |t: f64, i: usize, j: usize| SpacetimePoint::new(t, [grid.x(i), grid.x(j), 0.0]);
    let speed = Array2::from_shape_fn((n + 1, n + 1), |(i, j)| {
        params.metric.speed(&Vector3::new(grid.x(i), grid.x(j), 0.0))
    });
    let cmax = speed.iter().copied().fold(0.0, f64::max);
    let limit = dx / (cmax * 2f64.sqrt());
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, suggested: limit });
    }
    let mut p = Array3::zeros((grid.nt + 1, n + 1, n + 1));
    let boundary = |p: &mut Array3<f64>, k: usize| {
        let t = grid.t(k);
        for m in 0..=n {
            for (i, j) in [(0, m), (n, m), (m, 0), (m, n)] {
                p[(k, i, j)] = (source.0)(t, grid.x(i), grid.x(j));
            }
        }
    };
    boundary(&mut p, 0);
    boundary(&mut p, 1);
    let b = &params.b.components;
    for k in 1..grid.nt {
        let t = grid.t(k);
        for i in 1..n {
            for j in 1..n {
                let q = at(t, i, j);
                let (bt, bx, by, h) = (b[0].value(&q), b[1].value(&q), b[2].value(&q), params.h.value(&q));
                let c2 = speed[(i, j)].powi(2);
                let p0 = p[(k, i, j)];
                let lap = (p[(k, i + 1, j)] + p[(k, i - 1, j)] + p[(k, i, j + 1)] + p[(k, i, j - 1)] - 4.0 * p0) / (dx * dx);
                let px = (p[(k, i + 1, j)] - p[(k, i - 1, j)]) / (2.0 * dx);
                let py = (p[(k, i, j + 1)] - p[(k, i, j - 1)]) / (2.0 * dx);
                let prev = p[(k - 1, i, j)];
                let rhs = c2 * lap + c2 * (bx * px + by * py) - h * p0 + (2.0 * p0 - prev) / (dt * dt) + bt * prev / (2.0 * dt);
                p[(k + 1, i, j)] = rhs / (1.0 / (dt * dt) + bt / (2.0 * dt));
            }
        }
        boundary(&mut p, k + 1);
    }
    Ok(Wavefield2d {
        grid: *grid,
        values: p,
    })
}
