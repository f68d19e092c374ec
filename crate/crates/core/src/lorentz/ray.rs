use nalgebra::{SVector, Vector3, Vector4};

use super::{Domain, ProductMetric};
use crate::error::{Error, Result};
use crate::field::{Covector, SpacetimePoint, TangentVector};
use crate::tolerances;

type State = SVector<f64, 8>;

/// Step policy for the Hamiltonian ray integrator.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub step: f64,
    /// Hamiltonian value (relative to `|ζ|²`) above which a step is retried at half size.
    pub drift_tol: f64,
    pub reproject_every: usize,
    pub max_halvings: u32,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            step: 1e-2,
            drift_tol: 1e-11,
            reproject_every: tolerances::REPROJECT_EVERY,
            max_halvings: 12,
        }
    }
}

impl StepControl {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RaySample {
    pub s: f64,
    pub point: SpacetimePoint,
    pub covector: Covector,
    /// `ẋ = 2 g^{-1} ζ`
    pub velocity: TangentVector,
}

#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub s: f64,
    pub point: SpacetimePoint,
    /// Normal crossing speed exceeded the transversality tolerance.
    pub transversal: bool,
}

/// Entry and exit of a ray with respect to a domain.
#[derive(Debug, Clone, Copy, Default)]
pub struct Crossings {
    pub entry: Option<Crossing>,
    pub exit: Option<Crossing>,
    pub started_inside: bool,
}

impl Crossings {
    pub fn is_absent(&self) -> bool {
        self.entry.is_none()
    }
}

/// Sampled Hamiltonian flow `(x(s), ζ(s))` of `H = g^{ij}ζ_iζ_j`.
#[derive(Debug, Clone)]
pub struct Bicharacteristic {
    samples: Vec<RaySample>,
    /// Integration stopped because the ray left the padded domain.
    pub truncated: bool,
    /// Largest `|H|` seen at a sample.
    pub max_drift: f64,
    /// Largest half-step Richardson error estimate.
    pub max_step_error: f64,
    pub crossings: Option<Crossings>,
    pub conjugate: Option<f64>,
}

fn rhs(metric: &ProductMetric, y: &State) -> State {
    let x = Vector3::new(y[1], y[2], y[3]);
    let z = Vector3::new(y[5], y[6], y[7]);
    let c = metric.speed(&x);
    let g = metric.speed_gradient(&x);
    let zz = z.norm_squared();
    let xd = 2.0 * c * c * z;
    let zd = -2.0 * c * zz * g;
    State::from_column_slice(&[-2.0 * y[4], xd[0], xd[1], xd[2], 0.0, zd[0], zd[1], zd[2]])
}

fn rk4(metric: &ProductMetric, y: &State, h: f64) -> State {
    let k1 = rhs(metric, y);
    let k2 = rhs(metric, &(y + k1 * (h / 2.0)));
    let k3 = rhs(metric, &(y + k2 * (h / 2.0)));
    let k4 = rhs(metric, &(y + k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn hamiltonian(metric: &ProductMetric, y: &State) -> (f64, f64) {
    let x = Vector3::new(y[1], y[2], y[3]);
    let z = Covector(Vector4::new(y[4], y[5], y[6], y[7]));
    (metric.dual_norm_sq(&x, &z), z.0.norm_squared())
}

fn sample(metric: &ProductMetric, s: f64, y: &State) -> RaySample {
    let d = rhs(metric, y);
    RaySample {
        s,
        point: SpacetimePoint::new(y[0], [y[1], y[2], y[3]]),
        covector: Covector(Vector4::new(y[4], y[5], y[6], y[7])),
        velocity: TangentVector(Vector4::new(d[0], d[1], d[2], d[3])),
    }
}

/// Rescale `ζ'` so that the state lies on the null cone; `ζ₀` is conserved exactly.
fn reproject(metric: &ProductMetric, y: &mut State) {
    let x = Vector3::new(y[1], y[2], y[3]);
    let c = metric.speed(&x);
    let n = (y[5] * y[5] + y[6] * y[6] + y[7] * y[7]).sqrt();
    if n > 0.0 {
        let f = y[4].abs() / (c * n);
        for k in 5..8 {
            y[k] *= f;
        }
    }
}

/// Integrate Hamilton's equations from `(x0, ζ0)` over `s ∈ [0, s_max]`.
///
/// Each step is RK4 compared against two half steps; the extrapolated value is
/// kept and the step is halved while the Hamiltonian drift exceeds
/// `control.drift_tol`.
pub fn trace_bicharacteristic(
    metric: &ProductMetric,
    x0: &SpacetimePoint,
    zeta0: &Covector,
    s_max: f64,
    control: StepControl,
) -> Result<Bicharacteristic> {
    metric.check_point(x0)?;
    if !(s_max > 0.0 && s_max.is_finite()) || !(control.step > 0.0) {
        return Err(Error::InvalidInput("s_max and step must be positive".into()));
    }
    if !super::is_lightlike(metric, &x0.x, zeta0) {
        return Err(Error::InvalidInput(format!(
            "initial covector {:?} is not lightlike",
            zeta0.0.as_slice()
        )));
    }
    if metric.dim() == 1 && (zeta0.0[2] != 0.0 || zeta0.0[3] != 0.0) {
        return Err(Error::InvalidInput(
            "1-D metric needs a covector without transverse components".into(),
        ));
    }
    let mut y = State::from_column_slice(&[
        x0.t, x0.x[0], x0.x[1], x0.x[2], zeta0.0[0], zeta0.0[1], zeta0.0[2], zeta0.0[3],
    ]);
    let mut samples = vec![sample(metric, 0.0, &y)];
    let mut s = 0.0;
    let mut max_drift = hamiltonian(metric, &y).0.abs();
    let mut max_step_error: f64 = 0.0;
    let mut truncated = false;
    let mut steps = 0usize;
    while s < s_max * (1.0 - 1e-14) {
        let mut h = control.step.min(s_max - s);
        let mut halvings = 0;
        let (next, err) = loop {
            let full = rk4(metric, &y, h);
            let half = rk4(metric, &rk4(metric, &y, h / 2.0), h / 2.0);
            let next = half + (half - full) / 15.0;
            let err = (half - full).amax() / 15.0;
            let (hv, scale) = hamiltonian(metric, &next);
            if (hv / scale).abs() <= control.drift_tol || halvings >= control.max_halvings {
                if (hv / scale).abs() > tolerances::NULL_DRIFT {
                    return Err(Error::InvalidInput(format!(
                        "null drift {:.2e} at s = {s} cannot be controlled",
                        hv / scale
                    )));
                }
                break (next, err);
            }
            h /= 2.0;
            halvings += 1;
        };
        y = next;
        s += h;
        steps += 1;
        if steps.is_multiple_of(control.reproject_every) {
            reproject(metric, &mut y);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!("ray integration blew up at s = {s}")));
        }
        if let Some(dom) = metric.padded_domain() {
            if !dom.contains(&Vector3::new(y[1], y[2], y[3])) {
                truncated = true;
                break;
            }
        }
        max_step_error = max_step_error.max(err);
        max_drift = max_drift.max(hamiltonian(metric, &y).0.abs());
        samples.push(sample(metric, s, &y));
    }
    Ok(Bicharacteristic {
        samples,
        truncated,
        max_drift,
        max_step_error,
        crossings: None,
        conjugate: None,
    })
}

impl Bicharacteristic {
    pub fn samples(&self) -> &[RaySample] {
        &self.samples
    }

    pub fn s_range(&self) -> (f64, f64) {
        (self.samples[0].s, self.samples[self.samples.len() - 1].s)
    }

    pub fn first(&self) -> &RaySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &RaySample {
        &self.samples[self.samples.len() - 1]
    }

    /// Index `i` with `s_i ≤ s ≤ s_{i+1}`.
    fn locate(&self, s: f64) -> Result<usize> {
        let (lo, hi) = self.s_range();
        let slack = 1e-12 * (1.0 + hi.abs());
        if s < lo - slack || s > hi + slack || self.samples.len() < 2 {
            return Err(Error::CoverageGap { s0: s, s1: s, lo, hi });
        }
        let i = self.samples.partition_point(|p| p.s <= s);
        Ok(i.clamp(1, self.samples.len() - 1) - 1)
    }

    /// Position and velocity at `s` from cubic Hermite interpolation.
    pub fn state_at(&self, s: f64) -> Result<(Vector4<f64>, Vector4<f64>)> {
        let i = self.locate(s)?;
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let h = b.s - a.s;
        let u = (s - a.s) / h;
        let (pa, pb) = (a.point.to_vector(), b.point.to_vector());
        let (va, vb) = (a.velocity.0 * h, b.velocity.0 * h);
        let h00 = 2.0 * u.powi(3) - 3.0 * u * u + 1.0;
        let h10 = u.powi(3) - 2.0 * u * u + u;
        let h01 = -2.0 * u.powi(3) + 3.0 * u * u;
        let h11 = u.powi(3) - u * u;
        let pos = pa * h00 + va * h10 + pb * h01 + vb * h11;
        let d00 = 6.0 * u * u - 6.0 * u;
        let d10 = 3.0 * u * u - 4.0 * u + 1.0;
        let d01 = -6.0 * u * u + 6.0 * u;
        let d11 = 3.0 * u * u - 2.0 * u;
        let vel = (pa * d00 + va * d10 + pb * d01 + vb * d11) / h;
        Ok((pos, vel))
    }

    pub fn point_at(&self, s: f64) -> Result<SpacetimePoint> {
        Ok(SpacetimePoint::from_vector(&self.state_at(s)?.0))
    }

    /// Covector at `s`, linearly interpolated between samples.
    pub fn covector_at(&self, s: f64) -> Result<Covector> {
        let i = self.locate(s)?;
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let u = (s - a.s) / (b.s - a.s);
        Ok(Covector(a.covector.0 * (1.0 - u) + b.covector.0 * u))
    }

    /// Attach crossings with `domain` and the first conjugate parameter.
    pub fn annotate(mut self, domain: &dyn Domain, metric: &ProductMetric) -> Result<Self> {
        self.crossings = Some(boundary_crossings(&self, domain)?);
        self.conjugate = super::detect_conjugate_point(&self, metric)?;
        Ok(self)
    }
}

fn crossing_at(path: &Bicharacteristic, domain: &dyn Domain, s: f64) -> Result<Crossing> {
    let (pos, vel) = path.state_at(s)?;
    let point = SpacetimePoint::from_vector(&pos);
    let n = domain.outward_normal(&point.x);
    let v = Vector3::new(vel[1], vel[2], vel[3]);
    let speed = v.norm();
    let transversal = speed > 0.0 && (n.dot(&v) / speed).abs() > tolerances::TRANSVERSAL;
    Ok(Crossing {
        s,
        point,
        transversal,
    })
}

/// Bisect the sign change of the signed distance on `[a, b]`.
fn bisect(path: &Bicharacteristic, domain: &dyn Domain, mut a: f64, mut b: f64) -> Result<f64> {
    let sd = |s: f64| -> Result<f64> { Ok(domain.signed_distance(&path.point_at(s)?.x)) };
    let fa = sd(a)?;
    while b - a > tolerances::CROSSING_BISECTION * (1.0 + a.abs()) {
        let m = 0.5 * (a + b);
        if (sd(m)? <= 0.0) == (fa <= 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// First entry into the closed domain and the following exit.
///
/// Crossings are located on the samples and refined by bisection on the
/// Hermite interpolant. A path that never meets the domain gives an empty
/// result rather than an error.
pub fn boundary_crossings(path: &Bicharacteristic, domain: &dyn Domain) -> Result<Crossings> {
    let samples = path.samples();
    let inside: Vec<bool> = samples.iter().map(|p| domain.contains(&p.point.x)).collect();
    let mut out = Crossings::default();
    let entry_idx = match inside.iter().position(|&v| v) {
        None => return Ok(out),
        Some(i) => i,
    };
    if entry_idx == 0 {
        out.started_inside = true;
        out.entry = Some(crossing_at(path, domain, samples[0].s)?);
    } else {
        let s = bisect(path, domain, samples[entry_idx - 1].s, samples[entry_idx].s)?;
        out.entry = Some(crossing_at(path, domain, s)?);
    }
    if let Some(j) = inside[entry_idx..].iter().position(|&v| !v) {
        let j = entry_idx + j;
        let s = bisect(path, domain, samples[j - 1].s, samples[j].s)?;
        out.exit = Some(crossing_at(path, domain, s)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field;
    use crate::lorentz::{AxisBox, Interval};
    use std::sync::Arc;

    #[test]
    fn straight_null_ray_in_minkowski() {
        let m = ProductMetric::minkowski(3);
        let z = Covector::new([-0.5, 0.5, 0.0, 0.0]);
        let path =
            trace_bicharacteristic(&m, &SpacetimePoint::new(0.0, [0.0; 3]), &z, 10.0, StepControl::default())
                .unwrap();
        for p in path.samples() {
            assert!((p.point.t - p.s).abs() < 1e-12);
            assert!((p.point.x[0] - p.s).abs() < 1e-12);
            assert_eq!(p.point.x[1], 0.0);
        }
        assert!(path.max_drift <= 1e-10);
        assert!((path.last().s - 10.0).abs() < 1e-12);
    }

    #[test]
    fn constant_speed_ray_is_straight_at_speed_c() {
        let m = ProductMetric::constant(2.0, 3).unwrap();
        let dir = Vector3::new(1.0, 2.0, -0.5).normalize();
        let z = Covector::new([-1.0, dir[0] / 2.0, dir[1] / 2.0, dir[2] / 2.0]);
        let path =
            trace_bicharacteristic(&m, &SpacetimePoint::new(0.0, [0.0; 3]), &z, 3.0, StepControl::default())
                .unwrap();
        for p in path.samples() {
            let expect = dir * (2.0 * p.point.t);
            assert!((p.point.x - expect).amax() < 1e-12);
        }
    }

    #[test]
    fn gaussian_speed_ray_conserves_hamiltonian_and_self_converges() {
        let m = ProductMetric::new(
            field::from_fn(|p| 1.0 + 0.2 * (-p.x.norm_squared()).exp()),
            3,
        )
        .unwrap();
        let x0 = SpacetimePoint::new(0.0, [-3.0, 0.4, 0.1]);
        let c0 = m.speed(&x0.x);
        let z = Covector::new([-1.0, 1.0 / c0, 0.0, 0.0]);
        let coarse = trace_bicharacteristic(&m, &x0, &z, 6.0, StepControl::with_step(0.02)).unwrap();
        let fine = trace_bicharacteristic(&m, &x0, &z, 6.0, StepControl::with_step(0.01)).unwrap();
        assert!(coarse.max_drift <= 1e-8 && fine.max_drift <= 1e-8);
        let a = coarse.last().point.to_vector();
        let b = fine.last().point.to_vector();
        assert!((a - b).amax() < 1e-7, "{}", (a - b).amax());
        // the ray bends: transverse coordinate changed
        assert!((b[2] - 0.4).abs() > 1e-3);
    }

    #[test]
    fn rejects_non_null_start() {
        let m = ProductMetric::minkowski(3);
        let z = Covector::new([-2.0, 1.0, 0.0, 0.0]);
        assert!(trace_bicharacteristic(&m, &SpacetimePoint::new(0.0, [0.0; 3]), &z, 1.0, StepControl::default())
            .is_err());
    }

    #[test]
    fn truncates_at_padded_boundary() {
        let m = ProductMetric::minkowski(3).with_padded_domain(Arc::new(AxisBox::new([-1.0; 3], [1.0; 3])));
        let z = Covector::new([-0.5, 0.5, 0.0, 0.0]);
        let path =
            trace_bicharacteristic(&m, &SpacetimePoint::new(0.0, [0.0; 3]), &z, 5.0, StepControl::default())
                .unwrap();
        assert!(path.truncated);
        assert!(path.last().point.x[0] <= 1.0);
    }

    #[test]
    fn crossings_on_unit_interval() {
        let m = ProductMetric::minkowski(1);
        let z = Covector::new([-0.5, 0.5, 0.0, 0.0]);
        let path = trace_bicharacteristic(
            &m,
            &SpacetimePoint::new(0.0, [-0.5, 0.0, 0.0]),
            &z,
            3.0,
            StepControl::default(),
        )
        .unwrap();
        let c = boundary_crossings(&path, &Interval::unit()).unwrap();
        let (entry, exit) = (c.entry.unwrap(), c.exit.unwrap());
        assert!((entry.s - 0.5).abs() < 1e-12);
        assert!((exit.s - 1.5).abs() < 1e-12);
        assert!(entry.transversal && exit.transversal);
    }

    #[test]
    fn parallel_ray_never_crosses() {
        let m = ProductMetric::minkowski(3);
        let z = Covector::new([-0.5, 0.0, 0.5, 0.0]);
        let path = trace_bicharacteristic(
            &m,
            &SpacetimePoint::new(0.0, [-0.5, 0.0, 0.0]),
            &z,
            3.0,
            StepControl::default(),
        )
        .unwrap();
        assert!(boundary_crossings(&path, &Interval::unit()).unwrap().is_absent());
    }

    #[test]
    fn curved_crossing_matches_dense_scan() {
        let m = ProductMetric::new(
            field::from_fn(|p| 1.0 + 0.3 * (-(p.x - Vector3::new(0.5, 0.5, 0.5)).norm_squared()).exp()),
            3,
        )
        .unwrap();
        let x0 = SpacetimePoint::new(0.0, [-0.5, 0.2, 0.3]);
        let c0 = m.speed(&x0.x);
        let dir = Vector3::new(1.0, 0.35, 0.1).normalize();
        let z = Covector::new([-1.0, dir[0] / c0, dir[1] / c0, dir[2] / c0]);
        let path = trace_bicharacteristic(&m, &x0, &z, 2.0, StepControl::default()).unwrap();
        let cube = AxisBox::unit_cube();
        let c = boundary_crossings(&path, &cube).unwrap();
        // dense scan oracle
        let (lo, hi) = path.s_range();
        let n = 200_000;
        let mut first_in = None;
        let mut first_out = None;
        for k in 0..=n {
            let s = lo + (hi - lo) * k as f64 / n as f64;
            let inside = cube.contains(&path.point_at(s).unwrap().x);
            if inside && first_in.is_none() {
                first_in = Some(s);
            }
            if !inside && first_in.is_some() && first_out.is_none() {
                first_out = Some(s);
            }
        }
        let ds = (hi - lo) / n as f64;
        assert!((c.entry.unwrap().s - first_in.unwrap()).abs() <= ds);
        assert!((c.exit.unwrap().s - first_out.unwrap()).abs() <= ds);
    }
}
