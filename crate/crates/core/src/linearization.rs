//! Higher-order linearization: mixed ε-derivatives of solutions by finite
//! differences, and the cascade of linear solves that predicts them.

use ndarray::{Array2, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::SpacetimePoint;
use crate::gauge::GaugeFunction;
use crate::wave::{
    dn_trace, solve_linear, solve_nonlinear, BoundarySource, DnTrace, Grid1d, MediumParams, PicardOptions,
    SourceSum, Wavefield,
};

/// Fraction of the small-data amplitude used as the default `ε`.
pub const DEFAULT_EPSILON_FRACTION: f64 = 1e-3;

/// Boundary data `Σ ε_j f_j` with `J ∈ {2, 3, 4}` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSource {
    sources: Vec<BoundarySource>,
    epsilons: Vec<f64>,
}

impl MultiSource {
    /// All slots share `epsilon`.
    pub fn new(sources: Vec<BoundarySource>, epsilon: f64) -> Result<Self> {
        let n = sources.len();
        Self::with_epsilons(sources, vec![epsilon; n])
    }

    pub fn with_epsilons(sources: Vec<BoundarySource>, epsilons: Vec<f64>) -> Result<Self> {
        if !(2..=4).contains(&sources.len()) {
            return Err(Error::InvalidInput(format!("J must be 2, 3 or 4, got {}", sources.len())));
        }
        if epsilons.len() != sources.len() {
            return Err(Error::InvalidInput(format!(
                "{} epsilons for {} sources",
                epsilons.len(),
                sources.len()
            )));
        }
        if let Some(e) = epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {e}")));
        }
        for s in &sources {
            s.validate()?;
        }
        Ok(Self { sources, epsilons })
    }

    pub fn order(&self) -> usize {
        self.sources.len()
    }

    pub fn sources(&self) -> &[BoundarySource] {
        &self.sources
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    /// Same sources with every `ε` halved.
    pub fn halved(&self) -> Self {
        Self {
            sources: self.sources.clone(),
            epsilons: self.epsilons.iter().map(|e| e / 2.0).collect(),
        }
    }

    /// Sign patterns `σ ∈ {±1}^J`.
    fn corners(&self) -> Vec<Vec<i8>> {
        let j = self.order();
        (0..1u32 << j)
            .map(|m| (0..j).map(|b| if m >> b & 1 == 1 { -1 } else { 1 }).collect())
            .collect()
    }

    fn corner_source(&self, corner: &[i8]) -> SourceSum {
        SourceSum(
            corner
                .iter()
                .zip(&self.epsilons)
                .zip(&self.sources)
                .map(|((&s, &e), f)| (f64::from(s) * e, *f))
                .collect(),
        )
    }
}

/// What a mixed derivative is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Field,
    DnTrace,
}

/// A mixed derivative of the solution or of its DN trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Mixed {
    Field(Array2<f64>),
    Trace(DnTrace),
}

impl Mixed {
    pub fn values(&self) -> &Array2<f64> {
        match self {
            Mixed::Field(v) => v,
            Mixed::Trace(t) => &t.values,
        }
    }

    fn combine(&self, other: &Mixed, f: impl Fn(f64, f64) -> f64) -> Mixed {
        let mut out = self.clone();
        let values = match &mut out {
            Mixed::Field(v) => v,
            Mixed::Trace(t) => &mut t.values,
        };
        Zip::from(values).and(other.values()).for_each(|a, &b| *a = f(*a, b));
        out
    }
}

/// `∂_{ε₁}…∂_{ε_J} p |_{ε=0}` by the `2^J`-corner central product stencil
/// `Σ_σ (Π σ_j) p(Σ σ_j ε_j f_j) / Π(2ε_j)`. Corner solves run in parallel.
pub fn fd_mixed_derivative(
    params: &MediumParams,
    grid: &Grid1d,
    sources: &MultiSource,
    target: Target,
    opts: PicardOptions,
) -> Result<Mixed> {
    let corners = sources.corners();
    let fields: Vec<Array2<f64>> = corners
        .par_iter()
        .map(|c| {
            solve_nonlinear(params, grid, sources.corner_source(c), None, opts)
                .map(|w| w.values)
                .map_err(|e| Error::CornerFailed {
                    corner: c.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let denom: f64 = sources.epsilons.iter().map(|e| 2.0 * e).product();
    let mut acc = grid.zeros();
    for (c, f) in corners.iter().zip(&fields) {
        let sign: f64 = c.iter().map(|&s| f64::from(s)).product();
        acc.scaled_add(sign / denom, f);
    }
    match target {
        Target::Field => Ok(Mixed::Field(acc)),
        Target::DnTrace => Ok(Mixed::Trace(dn_trace(params, &Wavefield::from_values(*grid, acc)?)?)),
    }
}

/// Richardson pass `(4 D(ε/2) − D(ε)) / 3` on [`fd_mixed_derivative`].
pub fn fd_mixed_richardson(
    params: &MediumParams,
    grid: &Grid1d,
    sources: &MultiSource,
    target: Target,
    opts: PicardOptions,
) -> Result<Mixed> {
    let coarse = fd_mixed_derivative(params, grid, sources, target, opts)?;
    let fine = fd_mixed_derivative(params, grid, &sources.halved(), target, opts)?;
    Ok(fine.combine(&coarse, |f, c| (4.0 * f - c) / 3.0))
}

/// Which cascade a [`CascadeTerms`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CascadeForm {
    /// `A₂, A₃, A₄` of the original equation.
    Plain,
    /// `B₂, B₃` with the time-dependent gauge terms `c_k, d_k`.
    Modified,
}

/// Cascade fields for every index combination over `J` linear waves.
///
/// `A₂^{ij}` is symmetric in `(i, j)` and `A₃^{ijk}` in `(j, k)`; the stored
/// copies are bitwise equal. `A₄` is present only when `J = 4`.
#[derive(Debug, Clone)]
pub struct CascadeTerms {
    pub grid: Grid1d,
    pub form: CascadeForm,
    waves: usize,
    a2: Vec<Array2<f64>>,
    a3: Vec<Array2<f64>>,
    a4: Vec<Array2<f64>>,
}

fn flat(idx: &[usize], waves: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * waves + i)
}

fn tuples(waves: usize, len: usize) -> Vec<Vec<usize>> {
    (0..waves.pow(len as u32))
        .map(|mut m| {
            let mut t = vec![0; len];
            for slot in t.iter_mut().rev() {
                *slot = m % waves;
                m /= waves;
            }
            t
        })
        .collect()
}

/// Permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in permutations(n - 1) {
            let mut p = vec![first];
            p.extend(rest.into_iter().map(|r| if r >= first { r + 1 } else { r }));
            out.push(p);
        }
    }
    out
}

impl CascadeTerms {
    pub fn waves(&self) -> usize {
        self.waves
    }

    pub fn a2(&self, i: usize, j: usize) -> &Array2<f64> {
        &self.a2[flat(&[i, j], self.waves)]
    }

    pub fn a3(&self, i: usize, j: usize, k: usize) -> &Array2<f64> {
        &self.a3[flat(&[i, j, k], self.waves)]
    }

    pub fn a4(&self, i: usize, j: usize, k: usize, l: usize) -> Option<&Array2<f64>> {
        self.a4.get(flat(&[i, j, k, l], self.waves))
    }

    /// `Σ_{Σ(3)} A₃^{ijk}` over the first three waves.
    pub fn u3(&self) -> Option<Array2<f64>> {
        (self.waves >= 3).then(|| self.permutation_sum(&self.a3, 3))
    }

    /// `Σ_{Σ(4)} A₄^{ijkl}` over the four waves.
    pub fn u4(&self) -> Option<Array2<f64>> {
        (!self.a4.is_empty()).then(|| self.permutation_sum(&self.a4, 4))
    }

    fn permutation_sum(&self, terms: &[Array2<f64>], n: usize) -> Array2<f64> {
        let mut out = self.grid.zeros();
        for p in permutations(n) {
            out += &terms[flat(&p, self.waves)];
        }
        out
    }

    /// Largest `|A₂^{ij} − A₂^{ji}|`.
    pub fn pair_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.waves {
            for j in 0..self.waves {
                Zip::from(self.a2(i, j))
                    .and(self.a2(j, i))
                    .for_each(|a, b| worst = worst.max((a - b).abs()));
            }
        }
        worst
    }
}

/// Shared state of the cascade solves on one grid.
struct Solver<'a> {
    params: &'a MediumParams,
    grid: Grid1d,
    betas: Vec<Option<Array2<f64>>>,
}

impl<'a> Solver<'a> {
    fn new(params: &'a MediumParams, grid: Grid1d) -> Result<Self> {
        let sm = params.sample(&grid)?;
        let betas = sm
            .betas
            .into_iter()
            .zip(&params.betas)
            .map(|(a, f)| (f.constant_value() != Some(0.0)).then_some(a))
            .collect();
        Ok(Self { params, grid, betas })
    }

    fn beta(&self, k: usize) -> Option<&Array2<f64>> {
        k.checked_sub(2).and_then(|j| self.betas.get(j)).and_then(Option::as_ref)
    }

    /// `Q_bvp(F)`: zero Dirichlet data, zero initial data, interior forcing.
    fn q(&self, forcing: &Array2<f64>) -> Result<Array2<f64>> {
        if forcing.iter().all(|v| *v == 0.0) {
            return Ok(self.grid.zeros());
        }
        Ok(solve_linear(self.params, &self.grid, BoundarySource::zero(), Some(forcing))?.values)
    }

    /// `out += coeff · D_tt u` on interior nodes.
    fn add_dtt(&self, out: &mut Array2<f64>, coeff: &Array2<f64>, scale: f64, u: &Array2<f64>) {
        let g = self.grid;
        let idt2 = 1.0 / (g.dt * g.dt);
        for n in 1..g.nt {
            for i in 1..g.nx {
                let d = (u[(n + 1, i)] - 2.0 * u[(n, i)] + u[(n - 1, i)]) * idt2;
                out[(n, i)] += scale * coeff[(n, i)] * d;
            }
        }
    }

    /// `out += coeff · D_t u` on interior nodes.
    fn add_dt(&self, out: &mut Array2<f64>, coeff: &Array2<f64>, u: &Array2<f64>) {
        let g = self.grid;
        let i2dt = 0.5 / g.dt;
        for n in 1..g.nt {
            for i in 1..g.nx {
                out[(n, i)] += coeff[(n, i)] * (u[(n + 1, i)] - u[(n - 1, i)]) * i2dt;
            }
        }
    }

    /// `out += coeff · u` on interior nodes.
    fn add_mul(&self, out: &mut Array2<f64>, coeff: &Array2<f64>, u: &Array2<f64>) {
        let g = self.grid;
        for n in 1..g.nt {
            for i in 1..g.nx {
                out[(n, i)] += coeff[(n, i)] * u[(n, i)];
            }
        }
    }
}

fn product(fields: &[&Array2<f64>]) -> Array2<f64> {
    let mut out = fields[0].clone();
    for f in &fields[1..] {
        out *= *f;
    }
    out
}

fn check_waves(v: &[Wavefield], max: usize) -> Result<Grid1d> {
    let first = v
        .first()
        .ok_or_else(|| Error::InvalidInput("cascade needs at least one linear wave".into()))?;
    if v.len() > max {
        return Err(Error::InvalidInput(format!("at most {max} linear waves, got {}", v.len())));
    }
    for w in &v[1..] {
        first.grid.check_same(&w.grid)?;
    }
    Ok(first.grid)
}

/// Fills `count` symmetric slots by solving only canonical index tuples.
fn solve_all(
    waves: usize,
    len: usize,
    canonical: impl Fn(&[usize]) -> Vec<usize> + Sync,
    solve: impl Fn(&[usize]) -> Result<Array2<f64>> + Sync,
) -> Result<Vec<Array2<f64>>> {
    let all = tuples(waves, len);
    let unique: Vec<&Vec<usize>> = all.iter().filter(|t| canonical(t) == **t).collect();
    let solved: Vec<Array2<f64>> = unique.par_iter().map(|t| solve(t)).collect::<Result<_>>()?;
    Ok(all
        .iter()
        .map(|t| {
            let c = canonical(t);
            let k = unique.iter().position(|u| **u == c).expect("canonical tuple is solved");
            solved[k].clone()
        })
        .collect())
}

fn sorted_pair(t: &[usize]) -> Vec<usize> {
    let mut out = t.to_vec();
    out.sort_unstable();
    out
}

fn sorted_tail(t: &[usize]) -> Vec<usize> {
    let mut out = t.to_vec();
    out[1..].sort_unstable();
    out
}

/// `A₂, A₃` (and `A₄` when `J = 4`) by nested linear solves:
///
/// `A₂^{ij} = Q(β₂ ∂_t²(v_i v_j))`,
/// `A₃^{ijk} = Q(2β₂ ∂_t²(v_i A₂^{jk}) + β₃ ∂_t²(v_i v_j v_k))`,
/// `A₄^{ijkl} = Q(2β₂ ∂_t²(v_i A₃^{jkl}) + β₂ ∂_t²(A₂^{ij} A₂^{kl}) + 3β₃ ∂_t²(v_i v_j A₂^{kl}) + β₄ ∂_t²(v_i v_j v_k v_l))`,
///
/// with `Q` the discrete zero-data solve and `∂_t²` the scheme's second difference.
pub fn cascade_terms(params: &MediumParams, v: &[Wavefield]) -> Result<CascadeTerms> {
    let grid = check_waves(v, 4)?;
    let s = Solver::new(params, grid)?;
    let waves = v.len();
    let v: Vec<&Array2<f64>> = v.iter().map(|w| &w.values).collect();
    let a2 = solve_all(waves, 2, sorted_pair, |t| {
        let mut f = grid.zeros();
        if let Some(b2) = s.beta(2) {
            s.add_dtt(&mut f, b2, 1.0, &product(&[v[t[0]], v[t[1]]]));
        }
        s.q(&f)
    })?;
    let a2_at = |i: usize, j: usize| &a2[flat(&[i, j], waves)];
    let a3 = solve_all(waves, 3, sorted_tail, |t| {
        let (i, j, k) = (t[0], t[1], t[2]);
        let mut f = grid.zeros();
        if let Some(b2) = s.beta(2) {
            s.add_dtt(&mut f, b2, 2.0, &product(&[v[i], a2_at(j, k)]));
        }
        if let Some(b3) = s.beta(3) {
            s.add_dtt(&mut f, b3, 1.0, &product(&[v[i], v[j], v[k]]));
        }
        s.q(&f)
    })?;
    let a4 = if waves == 4 {
        let a3_at = |i: usize, j: usize, k: usize| &a3[flat(&[i, j, k], waves)];
        solve_all(waves, 4, |t| t.to_vec(), |t| {
            let (i, j, k, l) = (t[0], t[1], t[2], t[3]);
            let mut f = grid.zeros();
            if let Some(b2) = s.beta(2) {
                s.add_dtt(&mut f, b2, 2.0, &product(&[v[i], a3_at(j, k, l)]));
                s.add_dtt(&mut f, b2, 1.0, &product(&[a2_at(i, j), a2_at(k, l)]));
            }
            if let Some(b3) = s.beta(3) {
                s.add_dtt(&mut f, b3, 3.0, &product(&[v[i], v[j], a2_at(k, l)]));
            }
            if let Some(b4) = s.beta(4) {
                s.add_dtt(&mut f, b4, 1.0, &product(&[v[i], v[j], v[k], v[l]]));
            }
            s.q(&f)
        })?
    } else {
        Vec::new()
    };
    Ok(CascadeTerms {
        grid,
        form: CascadeForm::Plain,
        waves,
        a2,
        a3,
        a4,
    })
}

/// `c_k = 2ϱ⁻¹β_k ∂_t(ϱ^k)` and `d_k = ϱ⁻¹β_k ∂_t²(ϱ^k)` on the grid, from
/// the derivatives of `ϱ`.
fn gauge_coefficients(s: &Solver, gauge: &GaugeFunction, k: usize) -> Result<Option<(Array2<f64>, Array2<f64>)>> {
    let Some(beta) = s.beta(k) else {
        return Ok(None);
    };
    let g = s.grid;
    let rho = gauge.field();
    let kf = k as f64;
    let mut c = g.zeros();
    let mut d = g.zeros();
    for n in 0..=g.nt {
        for i in 0..=g.nx {
            let p = SpacetimePoint::on_line(g.t(n), g.x(i));
            let r = rho.value(&p);
            if !(r > 0.0) {
                return Err(Error::GaugeVanishes { t: p.t, x: p.x[0] });
            }
            let rt = rho.differential(&p).0[0];
            let rtt = rho.hessian(&p)[(0, 0)];
            let b = beta[(n, i)];
            c[(n, i)] = 2.0 * b * kf * r.powi(k as i32 - 2) * rt;
            d[(n, i)] = b * kf * ((kf - 1.0) * r.powi(k as i32 - 3) * rt * rt + r.powi(k as i32 - 2) * rtt);
        }
    }
    Ok(Some((c, d)))
}

/// `B₂, B₃` of the cascade for `p = ϱ p̃` with a time-dependent gauge:
///
/// `B₂^{ij} = A₂^{ij} + Q(c₂ ∂_t(v_i v_j) + d₂ v_i v_j)`,
/// `B₃^{ijk} = A₃^{ijk} + Q(2β₂ ∂_t²(v_i Q(c₂ ∂_t(v_j v_k) + d₂ v_j v_k)) + c₃ ∂_t(v_i B₂^{jk})
///   + c₃ ∂_t(v_i v_j v_k) + d₃ v_i B₂^{jk} + d₃ v_i v_j v_k)`.
///
/// When `∂_t ϱ` vanishes on the grid the result equals [`cascade_terms`] exactly.
pub fn cascade_modified(params: &MediumParams, gauge: &GaugeFunction, v: &[Wavefield]) -> Result<CascadeTerms> {
    let grid = check_waves(v, 3)?;
    let mut plain = cascade_terms(params, v)?;
    plain.form = CascadeForm::Modified;
    let s = Solver::new(params, grid)?;
    let c2d2 = gauge_coefficients(&s, gauge, 2)?;
    let c3d3 = gauge_coefficients(&s, gauge, 3)?;
    let all_zero = |cd: &Option<(Array2<f64>, Array2<f64>)>| {
        cd.as_ref()
            .is_none_or(|(c, d)| c.iter().chain(d.iter()).all(|x| *x == 0.0))
    };
    if all_zero(&c2d2) && all_zero(&c3d3) {
        return Ok(plain);
    }
    let waves = v.len();
    let v: Vec<&Array2<f64>> = v.iter().map(|w| &w.values).collect();
    let extra = solve_all(waves, 2, sorted_pair, |t| {
        let mut f = grid.zeros();
        if let Some((c2, d2)) = &c2d2 {
            let vv = product(&[v[t[0]], v[t[1]]]);
            s.add_dt(&mut f, c2, &vv);
            s.add_mul(&mut f, d2, &vv);
        }
        s.q(&f)
    })?;
    let b2: Vec<Array2<f64>> = plain.a2.iter().zip(&extra).map(|(a, e)| a + e).collect();
    let b2_at = |i: usize, j: usize| &b2[flat(&[i, j], waves)];
    let extra_at = |i: usize, j: usize| &extra[flat(&[i, j], waves)];
    let a3 = &plain.a3;
    let b3 = solve_all(waves, 3, sorted_tail, |t| {
        let (i, j, k) = (t[0], t[1], t[2]);
        let mut f = grid.zeros();
        if let Some(beta2) = s.beta(2) {
            s.add_dtt(&mut f, beta2, 2.0, &product(&[v[i], extra_at(j, k)]));
        }
        if let Some((c3, d3)) = &c3d3 {
            let vb = product(&[v[i], b2_at(j, k)]);
            let vvv = product(&[v[i], v[j], v[k]]);
            s.add_dt(&mut f, c3, &vb);
            s.add_dt(&mut f, c3, &vvv);
            s.add_mul(&mut f, d3, &vb);
            s.add_mul(&mut f, d3, &vvv);
        }
        Ok(&a3[flat(t, waves)] + &s.q(&f)?)
    })?;
    Ok(CascadeTerms {
        grid,
        form: CascadeForm::Modified,
        waves,
        a2: b2,
        a3: b3,
        a4: Vec::new(),
    })
}

/// Linear waves, cascade and the summed multi-wave interaction fields.
#[derive(Debug, Clone)]
pub struct MultiWave {
    pub waves: Vec<Wavefield>,
    pub terms: CascadeTerms,
    pub u3: Option<Array2<f64>>,
    pub u4: Option<Array2<f64>>,
    /// `∂_ν U₃ + ½⟨b, ν⟩U₃` on the boundary.
    pub u3_trace: Option<DnTrace>,
    pub u4_trace: Option<DnTrace>,
}

/// Solves `v_j` for each source, runs the cascade and forms `U₃`, `U₄` with
/// their DN traces.
pub fn assemble_multi_wave(params: &MediumParams, grid: &Grid1d, sources: &[BoundarySource]) -> Result<MultiWave> {
    for s in sources {
        s.validate()?;
    }
    let waves: Vec<Wavefield> = sources
        .par_iter()
        .map(|f| solve_linear(params, grid, f, None))
        .collect::<Result<_>>()?;
    let terms = cascade_terms(params, &waves)?;
    let trace = |u: &Option<Array2<f64>>| -> Result<Option<DnTrace>> {
        u.as_ref()
            .map(|u| dn_trace(params, &Wavefield::from_values(*grid, u.clone())?))
            .transpose()
    };
    let (u3, u4) = (terms.u3(), terms.u4());
    Ok(MultiWave {
        u3_trace: trace(&u3)?,
        u4_trace: trace(&u4)?,
        waves,
        terms,
        u3,
        u4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field;
    use crate::lorentz::ProductMetric;
    use crate::wave::Profile;

    fn grid() -> Grid1d {
        Grid1d::with_courant(60, 0.9, 0.5).unwrap()
    }

    fn medium(betas: &[f64]) -> MediumParams {
        MediumParams::new(ProductMetric::constant(1.0, 1).unwrap()).with_constant_betas(betas)
    }

    /// Pulses entering from both ends so that every pair meets inside.
    fn sources(j: usize) -> Vec<BoundarySource> {
        let left = |start| BoundarySource::bump(1.0, start, 0.3);
        let right = |start| BoundarySource {
            amplitude: 1.0,
            profiles: [Profile::Zero, Profile::Bump { start, width: 0.3 }],
        };
        [left(0.0), right(0.05), left(0.1), right(0.15)][..j].to_vec()
    }

    fn linear_waves(params: &MediumParams, j: usize) -> Vec<Wavefield> {
        sources(j)
            .iter()
            .map(|f| solve_linear(params, &grid(), f, None).unwrap())
            .collect()
    }

    fn opts() -> PicardOptions {
        PicardOptions {
            rtol: 0.0,
            ..Default::default()
        }
    }

    fn rel(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let d = a - b;
        (d.iter().map(|x| x * x).sum::<f64>() / b.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    /// Independent `Q(coeff · ∂_t² u)` with its own stencil loop.
    fn direct(params: &MediumParams, coeff: f64, u: &Array2<f64>) -> Array2<f64> {
        let g = grid();
        let mut f = g.zeros();
        for n in 1..g.nt {
            for i in 1..g.nx {
                f[(n, i)] = coeff * (u[(n + 1, i)] + u[(n - 1, i)] - 2.0 * u[(n, i)]) / (g.dt * g.dt);
            }
        }
        solve_linear(params, &g, BoundarySource::zero(), Some(&f)).unwrap().values
    }

    #[test]
    fn permutations_are_complete() {
        let p = permutations(4);
        assert_eq!(p.len(), 24);
        assert_eq!(p[0], vec![0, 1, 2, 3]);
        assert_eq!(p[23], vec![3, 2, 1, 0]);
    }

    #[test]
    fn multi_source_validation() {
        assert!(MultiSource::new(sources(1), 1e-3).is_err());
        assert!(MultiSource::new(sources(2), 0.0).is_err());
        assert!(MultiSource::with_epsilons(sources(2), vec![1e-3]).is_err());
        assert_eq!(MultiSource::new(sources(3), 1e-3).unwrap().corners().len(), 8);
    }

    #[test]
    fn linear_medium_has_no_interaction() {
        let ms = MultiSource::new(sources(2), 1e-3).unwrap();
        let d = fd_mixed_derivative(&medium(&[]), &grid(), &ms, Target::Field, opts()).unwrap();
        let sup = d.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup < 1e-8, "{sup:e}");
        let terms = cascade_terms(&medium(&[0.0, 0.0]), &linear_waves(&medium(&[]), 4)).unwrap();
        assert!(terms.u3().unwrap().iter().all(|v| *v == 0.0));
        assert!(terms.u4().unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn second_order_term_matches_direct_solve() {
        let params = medium(&[0.5]);
        let v = linear_waves(&params, 2);
        let terms = cascade_terms(&params, &v).unwrap();
        let want = direct(&params, 0.5, &(&v[0].values * &v[0].values));
        assert!(rel(terms.a2(0, 0), &want) < 1e-13);
        assert_eq!(terms.pair_asymmetry(), 0.0);
        assert!(terms.a4(0, 0, 0, 0).is_none());
    }

    #[test]
    fn quadratic_fd_matches_cascade_at_second_order() {
        let params = medium(&[0.5]);
        let terms = cascade_terms(&params, &linear_waves(&params, 2)).unwrap();
        let want = terms.a2(0, 1) * 2.0;
        let ms = MultiSource::new(sources(2), 1e-3).unwrap();
        let e1 = rel(fd_mixed_derivative(&params, &grid(), &ms, Target::Field, opts()).unwrap().values(), &want);
        let e2 = rel(
            fd_mixed_derivative(&params, &grid(), &ms.halved(), Target::Field, opts()).unwrap().values(),
            &want,
        );
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() <= 0.8, "ratio {ratio} ({e1:e}, {e2:e})");
    }

    #[test]
    fn cubic_fd_matches_pure_cubic_cascade() {
        let params = medium(&[0.0, 0.8]);
        let v = linear_waves(&params, 3);
        let mut want = grid().zeros();
        for p in permutations(3) {
            want += &direct(&params, 0.8, &(&(&v[p[0]].values * &v[p[1]].values) * &v[p[2]].values));
        }
        let terms = cascade_terms(&params, &v).unwrap();
        assert!(rel(&terms.u3().unwrap(), &want) < 1e-13);
        let ms = MultiSource::new(sources(3), 1e-3).unwrap();
        let e1 = rel(fd_mixed_derivative(&params, &grid(), &ms, Target::Field, opts()).unwrap().values(), &want);
        let e2 = rel(
            fd_mixed_derivative(&params, &grid(), &ms.halved(), Target::Field, opts()).unwrap().values(),
            &want,
        );
        assert!((3.0..=5.0).contains(&(e1 / e2)), "{e1:e} {e2:e}");
    }

    #[test]
    fn richardson_pass_improves_the_estimate() {
        let params = medium(&[0.5]);
        let terms = cascade_terms(&params, &linear_waves(&params, 2)).unwrap();
        let want = terms.a2(0, 1) * 2.0;
        let ms = MultiSource::new(sources(2), 2e-3).unwrap();
        let plain = rel(fd_mixed_derivative(&params, &grid(), &ms, Target::Field, opts()).unwrap().values(), &want);
        let rich = rel(fd_mixed_richardson(&params, &grid(), &ms, Target::Field, opts()).unwrap().values(), &want);
        assert!(rich < plain / 10.0, "{rich:e} vs {plain:e}");
    }

    #[test]
    fn failing_corner_is_named() {
        let params = medium(&[0.5]);
        let ms = MultiSource::new(sources(2), 3.0).unwrap();
        match fd_mixed_derivative(&params, &grid(), &ms, Target::Field, opts()) {
            Err(Error::CornerFailed { corner, .. }) => assert_eq!(corner.len(), 2),
            other => panic!("expected a corner failure, got {other:?}"),
        }
    }

    #[test]
    fn triple_trace_matches_fd_on_the_trace() {
        // long enough for the interaction to reach both ends
        let g = Grid1d::with_courant(60, 1.8, 0.5).unwrap();
        let params = medium(&[0.5, 0.3]).with_one_form(crate::field::OneForm::constant([0.2, 0.4, 0.0, 0.0]));
        let mw = assemble_multi_wave(&params, &g, &sources(3)).unwrap();
        let want = &mw.u3_trace.as_ref().unwrap().values;
        let ms = MultiSource::new(sources(3), 1e-3).unwrap();
        let e1 = rel(fd_mixed_derivative(&params, &g, &ms, Target::DnTrace, opts()).unwrap().values(), want);
        let e2 = rel(
            fd_mixed_derivative(&params, &g, &ms.halved(), Target::DnTrace, opts()).unwrap().values(),
            want,
        );
        assert!((3.0..=5.0).contains(&(e1 / e2)), "{e1:e} {e2:e}");
        assert!(mw.u4.is_none());
    }

    #[test]
    fn unit_gauge_leaves_the_cascade_unchanged() {
        let params = medium(&[0.5, 0.3]);
        let v = linear_waves(&params, 3);
        let plain = cascade_terms(&params, &v).unwrap();
        for gauge in [GaugeFunction::identity(1), GaugeFunction::sine_bump(0.2, 1).unwrap()] {
            let b = cascade_modified(&params, &gauge, &v).unwrap();
            assert_eq!(b.form, CascadeForm::Modified);
            assert_eq!(b.u3().unwrap(), plain.u3().unwrap());
            assert_eq!(b.a2(0, 1), plain.a2(0, 1));
        }
    }

    #[test]
    fn time_dependent_gauge_adds_the_c2_d2_solve() {
        let params = medium(&[0.5]);
        let t_end = grid().t_end();
        let rho = field::from_fn(move |p| 1.0 + 0.05 * p.t * (t_end - p.t) * (std::f64::consts::PI * p.x[0]).sin());
        let gauge = GaugeFunction::new(rho, 1).unwrap();
        let v = linear_waves(&params, 2);
        let plain = cascade_terms(&params, &v).unwrap();
        let b = cascade_modified(&params, &gauge, &v).unwrap();
        // c₂ = 4β₂ϱ_t, d₂ = 2β₂(ϱ_t² + ϱϱ_tt)/ϱ in closed form
        let g = grid();
        let vv = &v[0].values * &v[1].values;
        let mut f = g.zeros();
        for n in 1..g.nt {
            for i in 1..g.nx {
                let (t, s) = (g.t(n), (std::f64::consts::PI * g.x(i)).sin());
                let r = 1.0 + 0.05 * t * (t_end - t) * s;
                let rt = 0.05 * (t_end - 2.0 * t) * s;
                let rtt = -0.1 * s;
                let c2 = 4.0 * 0.5 * rt;
                let d2 = 2.0 * 0.5 * (rt * rt + r * rtt) / r;
                f[(n, i)] = c2 * (vv[(n + 1, i)] - vv[(n - 1, i)]) / (2.0 * g.dt) + d2 * vv[(n, i)];
            }
        }
        let want = solve_linear(&params, &g, BoundarySource::zero(), Some(&f)).unwrap().values;
        let got = b.a2(0, 1) - plain.a2(0, 1);
        assert!(rel(&got, &want) < 1e-6, "{}", rel(&got, &want));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let params = medium(&[0.5]);
        let mut v = linear_waves(&params, 2);
        let other = Grid1d::with_courant(40, 0.9, 0.5).unwrap();
        v[1] = solve_linear(&params, &other, sources(2)[1], None).unwrap();
        assert!(matches!(cascade_terms(&params, &v), Err(Error::GridMismatch(_))));
    }
}
