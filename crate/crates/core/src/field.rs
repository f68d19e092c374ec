//! Spacetime points, covectors and the scalar/one-form fields that describe a medium.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector3, Vector4};

/// A point `(t, x)` of spacetime. One-dimensional problems use `x[0]` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: Vector3<f64>,
}

impl SpacetimePoint {
    pub fn new(t: f64, x: [f64; 3]) -> Self {
        Self {
            t,
            x: Vector3::from(x),
        }
    }

    /// Point on the `x[0]` axis, used by the 1+1 solver.
    pub fn on_line(t: f64, x: f64) -> Self {
        Self::new(t, [x, 0.0, 0.0])
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            t: v[0],
            x: Vector3::new(v[1], v[2], v[3]),
        }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.t, self.x[0], self.x[1], self.x[2])
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }
}

/// Cotangent vector with components `(ζ₀, ζ₁, ζ₂, ζ₃)`; index 0 is time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covector(pub Vector4<f64>);

/// Tangent vector with components `(v⁰, v¹, v², v³)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector(pub Vector4<f64>);

impl Covector {
    pub fn new(c: [f64; 4]) -> Self {
        Self(Vector4::from(c))
    }

    pub fn zero() -> Self {
        Self(Vector4::zeros())
    }

    /// Natural pairing `ζ(v)`.
    pub fn pair(&self, v: &TangentVector) -> f64 {
        self.0.dot(&v.0)
    }

    pub fn spatial(&self) -> Vector3<f64> {
        Vector3::new(self.0[1], self.0[2], self.0[3])
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0 * a)
    }
}

impl TangentVector {
    pub fn new(c: [f64; 4]) -> Self {
        Self(Vector4::from(c))
    }

    pub fn spatial(&self) -> Vector3<f64> {
        Vector3::new(self.0[1], self.0[2], self.0[3])
    }
}

impl std::ops::Add for Covector {
    type Output = Covector;
    fn add(self, o: Covector) -> Covector {
        Covector(self.0 + o.0)
    }
}

impl std::ops::Sub for Covector {
    type Output = Covector;
    fn sub(self, o: Covector) -> Covector {
        Covector(self.0 - o.0)
    }
}

const FD_STEP: f64 = 1e-3;

/// A smooth real function on spacetime.
///
/// The default derivatives are Richardson-extrapolated central differences;
/// implementors with closed forms should override them.
pub trait ScalarField: Send + Sync {
    fn value(&self, p: &SpacetimePoint) -> f64;

    /// `Some(c)` when the field is the constant `c`.
    fn constant_value(&self) -> Option<f64> {
        None
    }

    /// Differential `(∂_t f, ∂_1 f, ∂_2 f, ∂_3 f)`.
    fn differential(&self, p: &SpacetimePoint) -> Covector {
        if self.constant_value().is_some() {
            return Covector::zero();
        }
        let v = p.to_vector();
        let mut out = Vector4::zeros();
        for k in 0..4 {
            let d = |h: f64| {
                let mut a = v;
                let mut b = v;
                a[k] += h;
                b[k] -= h;
                (self.value(&SpacetimePoint::from_vector(&a))
                    - self.value(&SpacetimePoint::from_vector(&b)))
                    / (2.0 * h)
            };
            let (d1, d2) = (d(FD_STEP), d(FD_STEP / 2.0));
            out[k] = (4.0 * d2 - d1) / 3.0;
        }
        Covector(out)
    }

    /// Second derivatives in the coordinates `(t, x¹, x², x³)`.
    fn hessian(&self, p: &SpacetimePoint) -> Matrix4<f64> {
        if self.constant_value().is_some() {
            return Matrix4::zeros();
        }
        let v = p.to_vector();
        let f = |w: Vector4<f64>| self.value(&SpacetimePoint::from_vector(&w));
        let mut out = Matrix4::zeros();
        for i in 0..4 {
            for j in i..4 {
                let d = |h: f64| {
                    if i == j {
                        let mut a = v;
                        let mut b = v;
                        a[i] += h;
                        b[i] -= h;
                        (f(a) - 2.0 * f(v) + f(b)) / (h * h)
                    } else {
                        let mut pp = v;
                        let mut pm = v;
                        let mut mp = v;
                        let mut mm = v;
                        pp[i] += h;
                        pp[j] += h;
                        pm[i] += h;
                        pm[j] -= h;
                        mp[i] -= h;
                        mp[j] += h;
                        mm[i] -= h;
                        mm[j] -= h;
                        (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h)
                    }
                };
                let step = 4.0 * FD_STEP;
                let (d1, d2) = (d(step), d(step / 2.0));
                let val = (4.0 * d2 - d1) / 3.0;
                out[(i, j)] = val;
                out[(j, i)] = val;
            }
        }
        out
    }
}

/// Shared handle to a scalar field.
pub type Field = Arc<dyn ScalarField>;

impl fmt::Debug for dyn ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constant_value() {
            Some(c) => write!(f, "Constant({c})"),
            None => write!(f, "ScalarField"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn value(&self, _: &SpacetimePoint) -> f64 {
        self.0
    }
    fn constant_value(&self) -> Option<f64> {
        Some(self.0)
    }
}

/// Closure-backed field with finite-difference derivatives.
pub struct FnField<F>(pub F);

impl<F> ScalarField for FnField<F>
where
    F: Fn(&SpacetimePoint) -> f64 + Send + Sync,
{
    fn value(&self, p: &SpacetimePoint) -> f64 {
        (self.0)(p)
    }
}

type ValueFn = dyn Fn(&SpacetimePoint) -> f64 + Send + Sync;
type DiffFn = dyn Fn(&SpacetimePoint) -> Covector + Send + Sync;
type HessFn = dyn Fn(&SpacetimePoint) -> Matrix4<f64> + Send + Sync;

/// Field with closed-form first (and optionally second) derivatives.
pub struct SmoothField {
    value: Box<ValueFn>,
    differential: Box<DiffFn>,
    hessian: Option<Box<HessFn>>,
}

impl SmoothField {
    pub fn new(
        value: impl Fn(&SpacetimePoint) -> f64 + Send + Sync + 'static,
        differential: impl Fn(&SpacetimePoint) -> Covector + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Box::new(value),
            differential: Box::new(differential),
            hessian: None,
        }
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&SpacetimePoint) -> Matrix4<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Box::new(hessian));
        self
    }
}

impl ScalarField for SmoothField {
    fn value(&self, p: &SpacetimePoint) -> f64 {
        (self.value)(p)
    }

    fn differential(&self, p: &SpacetimePoint) -> Covector {
        (self.differential)(p)
    }

    fn hessian(&self, p: &SpacetimePoint) -> Matrix4<f64> {
        match &self.hessian {
            Some(h) => h(p),
            None => {
                // central differences of the exact differential
                let v = p.to_vector();
                let mut out = Matrix4::zeros();
                let h = FD_STEP;
                for j in 0..4 {
                    let mut a = v;
                    let mut b = v;
                    a[j] += h;
                    b[j] -= h;
                    let da = (self.differential)(&SpacetimePoint::from_vector(&a)).0;
                    let db = (self.differential)(&SpacetimePoint::from_vector(&b)).0;
                    let col = (da - db) / (2.0 * h);
                    out.set_column(j, &col);
                }
                (out + out.transpose()) * 0.5
            }
        }
    }
}

pub fn constant(c: f64) -> Field {
    Arc::new(Constant(c))
}

pub fn from_fn(f: impl Fn(&SpacetimePoint) -> f64 + Send + Sync + 'static) -> Field {
    Arc::new(FnField(f))
}

/// Smooth bump `1 + amplitude · Π_{k<dim} sin(π x_k)`, equal to 1 on the
/// boundary of the unit interval/square/cube.
pub fn sine_bump(amplitude: f64, dim: usize) -> Field {
    assert!((1..=3).contains(&dim), "dimension must be 1, 2 or 3");
    let pi = std::f64::consts::PI;
    let factors = move |p: &SpacetimePoint| -> ([f64; 3], [f64; 3]) {
        let mut s = [1.0; 3];
        let mut c = [0.0; 3];
        for k in 0..dim {
            s[k] = (pi * p.x[k]).sin();
            c[k] = pi * (pi * p.x[k]).cos();
        }
        (s, c)
    };
    let value = move |p: &SpacetimePoint| {
        let (s, _) = factors(p);
        1.0 + amplitude * s[0] * s[1] * s[2]
    };
    let differential = move |p: &SpacetimePoint| {
        let (s, c) = factors(p);
        let mut d = [0.0; 4];
        for k in 0..dim {
            let mut prod = amplitude * c[k];
            for (j, sj) in s.iter().enumerate() {
                if j != k {
                    prod *= sj;
                }
            }
            d[k + 1] = prod;
        }
        Covector::new(d)
    };
    let hessian = move |p: &SpacetimePoint| {
        let (s, c) = factors(p);
        let mut h = Matrix4::zeros();
        for i in 0..dim {
            for j in 0..dim {
                let mut prod = amplitude;
                for k in 0..3 {
                    prod *= if k == i && k == j {
                        -pi * pi * s[k]
                    } else if k == i || k == j {
                        c[k]
                    } else {
                        s[k]
                    };
                }
                h[(i + 1, j + 1)] = prod;
            }
        }
        h
    };
    Arc::new(SmoothField::new(value, differential).with_hessian(hessian))
}

/// One-form `b = b_t dt + b_1 dx¹ + b_2 dx² + b_3 dx³`.
#[derive(Clone)]
pub struct OneForm {
    pub components: [Field; 4],
}

impl fmt::Debug for OneForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OneForm")
            .field("components", &self.components)
            .finish()
    }
}

impl OneForm {
    pub fn zero() -> Self {
        Self::constant([0.0; 4])
    }

    pub fn constant(c: [f64; 4]) -> Self {
        Self {
            components: c.map(constant),
        }
    }

    pub fn new(components: [Field; 4]) -> Self {
        Self { components }
    }

    /// Pure damping `b₀ dt`.
    pub fn damping(b0: f64) -> Self {
        Self::constant([b0, 0.0, 0.0, 0.0])
    }

    pub fn at(&self, p: &SpacetimePoint) -> Covector {
        Covector(Vector4::from_fn(|k, _| self.components[k].value(p)))
    }

    pub fn is_zero(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.constant_value() == Some(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_derivatives_match_closed_form() {
        let f = from_fn(|p| (p.t * 0.7).sin() * (p.x[0] * 1.3).cos() + p.x[1] * p.x[2]);
        let p = SpacetimePoint::new(0.3, [0.4, -0.2, 0.9]);
        let d = f.differential(&p);
        let expect = [
            0.7 * (0.21f64).cos() * (0.52f64).cos(),
            -1.3 * (0.21f64).sin() * (0.52f64).sin(),
            0.9,
            -0.2,
        ];
        for (k, want) in expect.iter().enumerate() {
            assert!((d.0[k] - want).abs() < 1e-10, "{k}: {}", d.0[k]);
        }
        let h = f.hessian(&p);
        assert!((h[(2, 3)] - 1.0).abs() < 1e-8);
        let htt = -0.49 * (0.21f64).sin() * (0.52f64).cos();
        assert!((h[(0, 0)] - htt).abs() < 1e-8);
    }

    #[test]
    fn sine_bump_derivatives_agree_with_differences() {
        let g = sine_bump(0.1, 3);
        let fd = from_fn({
            let g = g.clone();
            move |p| g.value(p)
        });
        let p = SpacetimePoint::new(1.0, [0.3, 0.6, 0.45]);
        let (a, b) = (g.differential(&p), fd.differential(&p));
        assert!((a.0 - b.0).amax() < 1e-10);
        let (ha, hb) = (g.hessian(&p), fd.hessian(&p));
        assert!((ha - hb).amax() < 1e-7, "{ha} vs {hb}");
        let edge = SpacetimePoint::new(0.0, [1.0, 0.5, 0.5]);
        assert!((g.value(&edge) - 1.0).abs() < 1e-15);
    }
}
