use ndarray::{Array2, Zip};
use serde::Serialize;

use super::{sup_norm, BoundarySource, Grid1d, MediumParams, PicardDiagnostics, SampledMedium, SourceSum, Wavefield};
use crate::error::{Error, Result};
use crate::tolerances;

/// Stopping rules for [`solve_nonlinear`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    /// Stop when successive iterates differ by at most `rtol · ‖p‖_∞`.
    pub rtol: f64,
    pub max_iter: usize,
    /// Largest admissible `|F₁(p)p|`.
    pub small_data_bound: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            rtol: tolerances::PICARD_RTOL,
            max_iter: tolerances::PICARD_MAX_ITER,
            small_data_bound: tolerances::SMALL_DATA_BOUND,
        }
    }
}

/// Increments within this many ulps of `‖p‖_∞` count as converged.
const ROUNDOFF_ULPS: f64 = 16.0;

/// Increments this close to round-off that stop shrinking count as converged.
const PLATEAU_ULPS: f64 = 1024.0;

/// Frozen nonlinear data of one Picard step: `a = F₁(w)w` and the right-hand
/// side `Σ β_k D_tt(w^k) − a D_tt w`.
struct Frozen {
    a: Array2<f64>,
    q: Array2<f64>,
}

fn dtt(u: &Array2<f64>, n: usize, i: usize, dt: f64) -> f64 {
    (u[(n + 1, i)] - 2.0 * u[(n, i)] + u[(n - 1, i)]) / (dt * dt)
}

fn freeze(sm: &SampledMedium, w: &Array2<f64>) -> Frozen {
    let g = sm.grid;
    let mut a = g.zeros();
    let mut q = g.zeros();
    let powers: Vec<Array2<f64>> = (0..sm.betas.len()).map(|j| w.mapv(|v| v.powi(j as i32 + 2))).collect();
    for (j, beta) in sm.betas.iter().enumerate() {
        let k = (j + 2) as f64;
        Zip::from(&mut a)
            .and(beta)
            .and(w)
            .for_each(|a, &b, &w| *a += k * b * w.powi(j as i32 + 1));
    }
    for n in 1..g.nt {
        for i in 1..g.nx {
            let mut v = -a[(n, i)] * dtt(w, n, i, g.dt);
            for (beta, pw) in sm.betas.iter().zip(&powers) {
                v += beta[(n, i)] * dtt(pw, n, i, g.dt);
            }
            q[(n, i)] = v;
        }
    }
    Frozen { a, q }
}

/// One explicit sweep of
/// `(1 − a) D_tt p + b_t D_t p − c² D_xx p + drift D_x p + h p = g + q`.
fn march(sm: &SampledMedium, source: &SourceSum, forcing: Option<&Array2<f64>>, frozen: Option<&Frozen>) -> Result<Array2<f64>> {
    let g = sm.grid;
    let (dt, dx) = (g.dt, g.dx);
    let a_max = frozen.map_or(0.0, |f| f.a.iter().fold(0.0f64, |m, v| m.max(*v)));
    let kappa = 1.0 / (1.0 - a_max.max(0.0));
    let c_eff = sm.max_speed() * kappa.sqrt();
    if dt * c_eff > dx * (1.0 + 1e-12) {
        return Err(Error::Cfl {
            dt,
            suggested: dx / c_eff,
        });
    }
    if let Some(f) = forcing {
        if f.dim() != g.shape() {
            return Err(Error::GridMismatch(format!("forcing {:?}, grid {:?}", f.dim(), g.shape())));
        }
    }
    let mut p = g.zeros();
    for n in 0..=g.nt {
        p[(n, 0)] = source.value(g.t(n), 0);
        p[(n, g.nx)] = source.value(g.t(n), 1);
    }
    let (idt2, idx2, i2dt, i2dx) = (1.0 / (dt * dt), 1.0 / (dx * dx), 0.5 / dt, 0.5 / dx);
    for n in 1..g.nt {
        for i in 1..g.nx {
            let a = frozen.map_or(0.0, |f| f.a[(n, i)]);
            let mut rhs = frozen.map_or(0.0, |f| f.q[(n, i)]);
            if let Some(f) = forcing {
                rhs += f[(n, i)];
            }
            let c = sm.speed[i];
            let bt = sm.b_t[(n, i)];
            let (pm, p0, pp) = (p[(n, i - 1)], p[(n, i)], p[(n, i + 1)]);
            let prev = p[(n - 1, i)];
            rhs += c * c * (pp - 2.0 * p0 + pm) * idx2 - sm.drift[(n, i)] * (pp - pm) * i2dx - sm.h[(n, i)] * p0;
            rhs += (1.0 - a) * (2.0 * p0 - prev) * idt2 + bt * prev * i2dt;
            p[(n + 1, i)] = rhs / ((1.0 - a) * idt2 + bt * i2dt);
        }
    }
    Ok(p)
}

/// Solves the linear part of the problem (`β` ignored) with Dirichlet data
/// and optional interior forcing `g`, from zero initial data.
///
/// Explicit leapfrog; the `b_t ∂_t p` term is centred on levels `n ± 1`.
pub fn solve_linear(
    params: &MediumParams,
    grid: &Grid1d,
    source: impl Into<SourceSum>,
    forcing: Option<&Array2<f64>>,
) -> Result<Wavefield> {
    let sm = params.linear_part().sample(grid)?;
    let values = march(&sm, &source.into(), forcing, None)?;
    let residual = residual_of(&sm, &values, forcing);
    Ok(Wavefield {
        grid: *grid,
        values,
        diagnostics: PicardDiagnostics {
            iterations: 1,
            residual,
            ..Default::default()
        },
        medium_hash: sm.hash(),
    })
}

/// Solves the full nonlinear problem by Picard iteration on frozen-coefficient
/// linear sweeps. A fixed point satisfies the discrete equation with
/// `D_tt(p^k)` differenced as a power.
pub fn solve_nonlinear(
    params: &MediumParams,
    grid: &Grid1d,
    source: impl Into<SourceSum>,
    forcing: Option<&Array2<f64>>,
    opts: PicardOptions,
) -> Result<Wavefield> {
    let source = source.into();
    let sm = params.sample(grid)?;
    let mut w = grid.zeros();
    let mut diag = PicardDiagnostics::default();
    let mut frozen: Option<Frozen> = None;
    let mut rising = 0;
    for it in 1..=opts.max_iter {
        let p = march(&sm, &source, forcing, frozen.as_ref())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iterations: it,
                ratio: diag.ratios.last().copied().unwrap_or(f64::NAN),
                reason: "non-finite iterate".into(),
            });
        }
        let incr = Zip::from(&p).and(&w).fold(0.0f64, |m, a, b| m.max((a - b).abs()));
        if let Some(&prev) = diag.increments.last() {
            let r = if prev > 0.0 { incr / prev } else { 0.0 };
            diag.ratios.push(r);
            rising = if r > 1.0 { rising + 1 } else { 0 };
        }
        diag.increments.push(incr);
        diag.iterations = it;
        let norm = sup_norm(&p);
        w = p;
        // the floor and plateau rules let rtol = 0 mean "iterate to round-off"
        let floor = ROUNDOFF_ULPS * f64::EPSILON * norm;
        let plateau = incr <= PLATEAU_ULPS * f64::EPSILON * norm && diag.ratios.last().is_some_and(|&r| r >= 0.5);
        if incr <= (opts.rtol * norm).max(floor) || plateau || sm.is_linear() {
            let f = freeze(&sm, &w);
            diag.small_data_level = sup_norm(&f.a);
            diag.residual = residual_of(&sm, &w, forcing);
            return Ok(Wavefield {
                grid: *grid,
                values: w,
                diagnostics: diag,
                medium_hash: sm.hash(),
            });
        }
        if rising >= 2 {
            return Err(Error::Diverged {
                iterations: it,
                ratio: *diag.ratios.last().unwrap(),
                reason: "increments grow".into(),
            });
        }
        let f = freeze(&sm, &w);
        let level = sup_norm(&f.a);
        if level > opts.small_data_bound {
            return Err(Error::Diverged {
                iterations: it,
                ratio: diag.ratios.last().copied().unwrap_or(f64::NAN),
                reason: format!("|F1(p)p| = {level:.3e} exceeds the small-data bound {}", opts.small_data_bound),
            });
        }
        frozen = Some(f);
    }
    Err(Error::Diverged {
        iterations: opts.max_iter,
        ratio: diag.ratios.last().copied().unwrap_or(f64::NAN),
        reason: "iteration cap reached".into(),
    })
}

fn residual_of(sm: &SampledMedium, p: &Array2<f64>, forcing: Option<&Array2<f64>>) -> f64 {
    let g = sm.grid;
    let powers: Vec<Array2<f64>> = (0..sm.betas.len()).map(|j| p.mapv(|v| v.powi(j as i32 + 2))).collect();
    let mut worst = 0.0f64;
    for n in 1..g.nt {
        for i in 1..g.nx {
            let c = sm.speed[i];
            let mut r = dtt(p, n, i, g.dt) - c * c * (p[(n, i + 1)] - 2.0 * p[(n, i)] + p[(n, i - 1)]) / (g.dx * g.dx)
                + sm.drift[(n, i)] * (p[(n, i + 1)] - p[(n, i - 1)]) / (2.0 * g.dx)
                + sm.b_t[(n, i)] * (p[(n + 1, i)] - p[(n - 1, i)]) / (2.0 * g.dt)
                + sm.h[(n, i)] * p[(n, i)];
            for (beta, pw) in sm.betas.iter().zip(&powers) {
                r -= beta[(n, i)] * dtt(pw, n, i, g.dt);
            }
            if let Some(f) = forcing {
                r -= f[(n, i)];
            }
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Sup-norm residual of the discrete equation (scheme stencils, `D_tt` of
/// powers) on interior nodes.
pub fn discrete_residual(params: &MediumParams, field: &Wavefield, forcing: Option<&Array2<f64>>) -> Result<f64> {
    let sm = params.sample(&field.grid)?;
    Ok(residual_of(&sm, &field.values, forcing))
}

/// Largest contraction ratio counted as "contracting" by [`probe_threshold`].
pub const CONTRACTION_BOUND: f64 = 0.5;

/// Empirical small-data radius of the Picard solver for one source shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    /// Largest amplitude seen converging with every ratio below [`CONTRACTION_BOUND`].
    pub contraction: f64,
    /// Smallest amplitude seen raising [`Error::Diverged`].
    pub divergence: f64,
    /// `(amplitude, Some(max ratio))` for converged solves, `None` for diverged ones.
    pub samples: Vec<(f64, Option<f64>)>,
}

/// Sweeps the amplitude of `source` upward by doubling from `start` until a
/// solve diverges, then bisects both the contraction and the divergence
/// edges to relative width `rel_width`.
pub fn probe_threshold(
    params: &MediumParams,
    grid: &Grid1d,
    source: &BoundarySource,
    start: f64,
    rel_width: f64,
    opts: PicardOptions,
) -> Result<ThresholdReport> {
    if !(start > 0.0 && rel_width > 0.0) {
        return Err(Error::InvalidInput("start and rel_width must be positive".into()));
    }
    if params.is_linear() {
        return Err(Error::InvalidInput("a linear medium has no small-data threshold".into()));
    }
    let mut samples = Vec::new();
    let mut run = |amp: f64| -> Result<Option<f64>> {
        let out = match solve_nonlinear(params, grid, source.scaled(amp / source.amplitude), None, opts) {
            Ok(w) => Some(w.diagnostics.max_ratio()),
            Err(Error::Diverged { .. }) => None,
            Err(e) => return Err(e),
        };
        samples.push((amp, out));
        Ok(out)
    };
    let contracts = |o: Option<f64>| o.is_some_and(|r| r < CONTRACTION_BOUND);
    if !contracts(run(start)?) {
        return Err(Error::InvalidInput(format!("amplitude {start} does not contract; start lower")));
    }
    // doubling: `good` contracts, `hi` is the first amplitude that does not
    let (mut good, mut hi) = (start, f64::INFINITY);
    let (mut lo, mut div) = (start, 2.0 * start);
    loop {
        let out = run(div)?;
        if contracts(out) {
            good = div;
        } else {
            hi = hi.min(div);
        }
        if out.is_none() {
            break;
        }
        lo = div;
        div *= 2.0;
        if div > 1e6 * start {
            return Err(Error::InvalidInput("no divergence found over six decades".into()));
        }
    }
    while hi - good > rel_width * good {
        let mid = 0.5 * (good + hi);
        if contracts(run(mid)?) {
            good = mid;
        } else {
            hi = mid;
        }
    }
    while div - lo > rel_width * lo {
        let mid = 0.5 * (lo + div);
        if run(mid)?.is_some() {
            lo = mid;
        } else {
            div = mid;
        }
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ThresholdReport {
        contraction: good,
        divergence: div,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{self, OneForm};
    use crate::lorentz::ProductMetric;
    use crate::wave::{BoundarySource, Profile};

    fn flat() -> MediumParams {
        MediumParams::new(ProductMetric::constant(1.0, 1).unwrap())
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let g = Grid1d::with_courant(50, 0.5, 0.5).unwrap();
        let w = solve_nonlinear(&flat().with_constant_betas(&[0.5]), &g, BoundarySource::zero(), None, Default::default())
            .unwrap();
        assert!(w.values.iter().all(|&v| v == 0.0));
        assert_eq!(w.diagnostics.iterations, 1);
    }

    #[test]
    fn dalembert_pulse_converges_at_second_order() {
        let profile = Profile::Bump { start: 0.05, width: 0.3 };
        let src = BoundarySource::left(1.0, profile);
        let err = |nx: usize| {
            let g = Grid1d::with_courant(nx, 0.6, 0.5).unwrap();
            let w = solve_linear(&flat(), &g, src, None).unwrap();
            let mut e = 0.0f64;
            for n in 0..=g.nt {
                for i in 0..=g.nx {
                    e = e.max((w.values[(n, i)] - profile.value(g.t(n) - g.x(i))).abs());
                }
            }
            e
        };
        let (e1, e2, e3) = (err(100), err(200), err(400));
        let order = (e1 / e3).log2() / 2.0;
        assert!((order - 2.0).abs() < 0.1, "order {order} ({e1:e}, {e2:e}, {e3:e})");
    }

    fn bessel_i1(z: f64) -> f64 {
        let mut term = z / 2.0;
        let mut sum = term;
        for k in 1..30 {
            term *= (z / 2.0).powi(2) / (k as f64 * (k + 1) as f64);
            sum += term;
        }
        sum
    }

    /// Half-line telegraph solution driven by `f` at `x = 0`:
    /// `e^{−ax} f(t−x) + a x ∫_x^t e^{−aτ} I₁(a√(τ²−x²))/√(τ²−x²) f(t−τ) dτ`, `a = b₀/2`.
    fn telegraph(f: &Profile, a: f64, t: f64, x: f64) -> f64 {
        let head = (-a * x).exp() * f.value(t - x);
        if t <= x {
            return head;
        }
        let m = 2000;
        let h = (t - x) / m as f64;
        let g = |tau: f64| {
            let r = (tau * tau - x * x).max(0.0).sqrt();
            let k = if r < 1e-12 { a / 2.0 } else { bessel_i1(a * r) / r };
            (-a * tau).exp() * k * f.value(t - tau)
        };
        let mut acc = g(x) + g(t);
        for j in 1..m {
            acc += g(x + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        head + a * x * acc * h / 3.0
    }

    #[test]
    fn damped_pulse_matches_telegraph_solution() {
        let b0 = 0.8;
        let profile = Profile::Bump { start: 0.02, width: 0.2 };
        let medium = flat().with_one_form(OneForm::damping(b0));
        let err = |nx: usize| {
            let g = Grid1d::with_courant(nx, 0.6, 0.5).unwrap();
            let w = solve_linear(&medium, &g, BoundarySource::left(1.0, profile), None).unwrap();
            let n = g.nt;
            (0..=g.nx)
                .step_by(nx / 20)
                .map(|i| (w.values[(n, i)] - telegraph(&profile, b0 / 2.0, g.t(n), g.x(i))).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(200), err(400));
        assert!(e2 < 2e-2, "{e2:e}");
        assert!((e1 / e2).log2() > 1.8, "{e1:e} {e2:e}");
    }

    #[test]
    fn linear_solve_is_additive() {
        let g = Grid1d::with_courant(60, 0.7, 0.5).unwrap();
        let m = flat()
            .with_one_form(OneForm::damping(0.3))
            .with_potential(field::from_fn(|p| 0.5 * p.x[0]));
        let s1 = BoundarySource::bump(1.0, 0.05, 0.2);
        let s2 = BoundarySource {
            amplitude: 0.7,
            profiles: [Profile::Zero, Profile::SineSquared { start: 0.1, width: 0.3 }],
        };
        let a = solve_linear(&m, &g, s1, None).unwrap();
        let b = solve_linear(&m, &g, s2, None).unwrap();
        let ab = solve_linear(&m, &g, SourceSum(vec![(1.0, s1), (1.0, s2)]), None).unwrap();
        let diff = &ab.values - &(&a.values + &b.values);
        assert!(sup_norm(&diff) < 1e-12);
    }

    #[test]
    fn picard_contracts_and_scales_linearly() {
        let g = Grid1d::with_courant(100, 0.8, 0.5).unwrap();
        let m = flat().with_constant_betas(&[0.5]);
        let src = BoundarySource::bump(1e-3, 0.05, 0.3);
        let w = solve_nonlinear(&m, &g, src, None, Default::default()).unwrap();
        assert!(w.diagnostics.max_ratio() < 0.1, "{:?}", w.diagnostics);
        assert!(w.diagnostics.residual < 1e-12, "{:?}", w.diagnostics);
        let half = solve_nonlinear(&m, &g, src.scaled(0.5), None, Default::default()).unwrap();
        let ratio = w.sup_norm() / half.sup_norm();
        assert!((ratio / 2.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn manufactured_nonlinear_solution_second_order() {
        use std::f64::consts::PI;
        let amp = 0.1;
        let speed = field::from_fn(|p| 1.0 + 0.2 * p.x[0]);
        let m = MediumParams::new(ProductMetric::new(speed, 1).unwrap())
            .with_one_form(OneForm::damping(0.3))
            .with_potential(field::constant(0.1))
            .with_constant_betas(&[0.5]);
        let exact = |t: f64, x: f64| amp * t.powi(4) * (PI * x).sin();
        let forcing = |t: f64, x: f64| {
            let (s, c) = ((PI * x).sin(), (PI * x).cos());
            let sp = 1.0 + 0.2 * x;
            12.0 * amp * t * t * s + sp * sp * PI * PI * amp * t.powi(4) * s
                + sp * 0.2 * PI * amp * t.powi(4) * c
                + 0.3 * 4.0 * amp * t.powi(3) * s
                + 0.1 * exact(t, x)
                - 0.5 * 56.0 * amp * amp * t.powi(6) * s * s
        };
        let err = |nx: usize| {
            let g = Grid1d::with_courant(nx, 0.5, 0.5).unwrap();
            let f = Array2::from_shape_fn(g.shape(), |(n, i)| forcing(g.t(n), g.x(i)));
            let w = solve_nonlinear(&m, &g, BoundarySource::zero(), Some(&f), Default::default()).unwrap();
            w.values
                .indexed_iter()
                .map(|((n, i), v)| (v - exact(g.t(n), g.x(i))).abs())
                .fold(0.0, f64::max)
        };
        let est = crate::wave::convergence_order(&[(1.0 / 50.0, err(50)), (1.0 / 100.0, err(100)), (1.0 / 200.0, err(200))])
            .unwrap();
        assert!((est.order - 2.0).abs() < 0.2, "{est:?}");
    }

    #[test]
    fn large_data_diverges() {
        let g = Grid1d::with_courant(100, 0.8, 0.5).unwrap();
        let m = flat().with_constant_betas(&[0.5]);
        let err = solve_nonlinear(&m, &g, BoundarySource::bump(2.0, 0.05, 0.3), None, Default::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn threshold_probe_brackets_the_edges() {
        let g = Grid1d::with_courant(60, 0.8, 0.5).unwrap();
        let m = flat().with_constant_betas(&[0.5]);
        let src = BoundarySource::bump(1.0, 0.05, 0.3);
        let r = probe_threshold(&m, &g, &src, 1e-2, 0.05, Default::default()).unwrap();
        assert!(r.contraction < r.divergence, "{r:?}");
        let at = solve_nonlinear(&m, &g, src.scaled(r.contraction), None, Default::default()).unwrap();
        assert!(at.diagnostics.max_ratio() < CONTRACTION_BOUND);
        let above = solve_nonlinear(&m, &g, src.scaled(r.divergence), None, Default::default());
        assert!(matches!(above, Err(Error::Diverged { .. })));
    }

    #[test]
    fn cfl_violation_suggests_a_step() {
        let g = Grid1d::new(50, 20, 1.0).unwrap();
        match solve_linear(&flat(), &g, BoundarySource::zero(), None) {
            Err(Error::Cfl { suggested, .. }) => assert!((suggested - 0.02).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn domain_of_dependence() {
        let g = Grid1d::with_courant(200, 0.6, 0.5).unwrap();
        let src = BoundarySource::bump(1.0, 0.2, 0.2);
        let w = solve_linear(&flat(), &g, src, None).unwrap();
        // numerical cone: one cell per step
        let first = (0..=g.nt).find(|&n| w.values[(n, 0)] != 0.0).unwrap();
        for n in first..=g.nt {
            for i in 0..=g.nx {
                if i > n - first {
                    assert!(w.values[(n, i)].abs() < 1e-12);
                }
            }
        }
    }
}
