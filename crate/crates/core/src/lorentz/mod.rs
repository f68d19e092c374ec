//! Geometry of product metrics `g = −dt² + c(x)⁻² |dx|²`.

mod domain;
mod jacobi;
mod ray;

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3, Vector4};

pub use domain::{AxisBox, Ball, Domain, Interval};
pub use jacobi::detect_conjugate_point;
pub use ray::{
    boundary_crossings, trace_bicharacteristic, Bicharacteristic, Crossing, Crossings,
    RaySample, StepControl,
};

use crate::error::{Error, Result};
use crate::field::{self, Covector, Field, SpacetimePoint, TangentVector};
use crate::tolerances;

/// Time-independent product metric with sound speed `c`.
#[derive(Clone)]
pub struct ProductMetric {
    speed: Field,
    dim: usize,
    padded: Option<Arc<dyn Domain>>,
}

impl fmt::Debug for ProductMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProductMetric")
            .field("speed", &self.speed)
            .field("dim", &self.dim)
            .field("padded", &self.padded.is_some())
            .finish()
    }
}

impl ProductMetric {
    /// `speed` is evaluated at `t = 0`; it must not depend on time.
    pub fn new(speed: Field, dim: usize) -> Result<Self> {
        if dim != 1 && dim != 3 {
            return Err(Error::InvalidInput(format!(
                "spatial dimension must be 1 or 3, got {dim}"
            )));
        }
        if let Some(c) = speed.constant_value() {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidInput(format!("sound speed must be positive, got {c}")));
            }
        }
        Ok(Self {
            speed,
            dim,
            padded: None,
        })
    }

    pub fn constant(c: f64, dim: usize) -> Result<Self> {
        Self::new(field::constant(c), dim)
    }

    pub fn minkowski(dim: usize) -> Self {
        Self::constant(1.0, dim).expect("unit speed is valid")
    }

    /// Restrict evaluation to a padded domain.
    pub fn with_padded_domain(mut self, domain: Arc<dyn Domain>) -> Self {
        self.padded = Some(domain);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn speed_field(&self) -> &Field {
        &self.speed
    }

    pub fn padded_domain(&self) -> Option<&Arc<dyn Domain>> {
        self.padded.as_ref()
    }

    pub fn constant_speed(&self) -> Option<f64> {
        self.speed.constant_value()
    }

    pub fn speed(&self, x: &Vector3<f64>) -> f64 {
        match self.speed.constant_value() {
            Some(c) => c,
            None => self.speed.value(&SpacetimePoint { t: 0.0, x: *x }),
        }
    }

    pub fn speed_gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        if self.speed.constant_value().is_some() {
            return Vector3::zeros();
        }
        let mut g = self.speed.differential(&SpacetimePoint { t: 0.0, x: *x }).spatial();
        self.mask(&mut g);
        g
    }

    pub fn speed_hessian(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        if self.speed.constant_value().is_some() {
            return Matrix3::zeros();
        }
        let h = self.speed.hessian(&SpacetimePoint { t: 0.0, x: *x });
        let mut out: Matrix3<f64> = h.fixed_view::<3, 3>(1, 1).into_owned();
        for i in self.dim..3 {
            out.row_mut(i).fill(0.0);
            out.column_mut(i).fill(0.0);
        }
        out
    }

    fn mask(&self, v: &mut Vector3<f64>) {
        for i in self.dim..3 {
            v[i] = 0.0;
        }
    }

    pub(crate) fn check_point(&self, p: &SpacetimePoint) -> Result<()> {
        if !p.is_finite() {
            return Err(Error::InvalidInput("non-finite spacetime point".into()));
        }
        if let Some(d) = &self.padded {
            if !d.contains(&p.x) {
                return Err(Error::OutsideDomain {
                    t: p.t,
                    x: [p.x[0], p.x[1], p.x[2]],
                });
            }
        }
        Ok(())
    }

    /// Dual quadratic form `g^{ij}ζ_iζ_j = −ζ₀² + c²|ζ'|²`.
    pub fn dual_norm_sq(&self, x: &Vector3<f64>, z: &Covector) -> f64 {
        let c = self.speed(x);
        -z.0[0] * z.0[0] + c * c * z.spatial().norm_squared()
    }

    /// `g(v, v) = −(v⁰)² + c⁻²|v'|²`.
    pub fn norm_sq(&self, x: &Vector3<f64>, v: &TangentVector) -> f64 {
        let c = self.speed(x);
        -v.0[0] * v.0[0] + v.spatial().norm_squared() / (c * c)
    }
}

/// `ζ ↦ ζ^♯`.
pub fn raise(metric: &ProductMetric, p: &SpacetimePoint, z: &Covector) -> Result<TangentVector> {
    metric.check_point(p)?;
    let c2 = metric.speed(&p.x).powi(2);
    Ok(TangentVector(Vector4::new(
        -z.0[0],
        c2 * z.0[1],
        c2 * z.0[2],
        c2 * z.0[3],
    )))
}

/// `v ↦ v^♭`.
pub fn lower(metric: &ProductMetric, p: &SpacetimePoint, v: &TangentVector) -> Result<Covector> {
    metric.check_point(p)?;
    let c2 = metric.speed(&p.x).powi(2);
    Ok(Covector(Vector4::new(
        -v.0[0],
        v.0[1] / c2,
        v.0[2] / c2,
        v.0[3] / c2,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalCharacter {
    Lightlike,
    Timelike,
    Spacelike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeOrientation {
    Future,
    Past,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub character: CausalCharacter,
    pub orientation: TimeOrientation,
}

/// Causal type of `ζ` using the relative threshold `tol` on `g^{ij}ζ_iζ_j / |ζ|²`.
///
/// Orientation refers to `ζ^♯`, whose time component is `−ζ₀`.
pub fn classify_covector(
    metric: &ProductMetric,
    p: &SpacetimePoint,
    z: &Covector,
    tol: f64,
) -> Result<Classification> {
    metric.check_point(p)?;
    let scale = z.0.norm_squared();
    if scale == 0.0 {
        return Err(Error::InvalidInput("zero covector has no causal type".into()));
    }
    let q = metric.dual_norm_sq(&p.x, z) / scale;
    let character = if q.abs() <= tol {
        CausalCharacter::Lightlike
    } else if q < 0.0 {
        CausalCharacter::Timelike
    } else {
        CausalCharacter::Spacelike
    };
    let orientation = match character {
        CausalCharacter::Spacelike => TimeOrientation::None,
        _ if z.0[0] < 0.0 => TimeOrientation::Future,
        _ => TimeOrientation::Past,
    };
    Ok(Classification {
        character,
        orientation,
    })
}

/// Lorentzian time separation; closed form, constant speed only.
pub fn time_separation(metric: &ProductMetric, x: &SpacetimePoint, y: &SpacetimePoint) -> Result<f64> {
    let c = metric.constant_speed().ok_or_else(|| {
        Error::Unsupported("time separation is implemented for constant sound speed only".into())
    })?;
    let dt = y.t - x.t;
    let dx2 = (y.x - x.x).norm_squared() / (c * c);
    if dt >= 0.0 && dt * dt >= dx2 {
        Ok((dt * dt - dx2).sqrt())
    } else {
        Ok(0.0)
    }
}

/// Null check used by ray and frame constructors.
pub(crate) fn is_lightlike(metric: &ProductMetric, x: &Vector3<f64>, z: &Covector) -> bool {
    let scale = z.0.norm_squared();
    scale > 0.0 && (metric.dual_norm_sq(x, z) / scale).abs() <= tolerances::LIGHTLIKE_REL
}

/// Covector components of a Minkowski-frame covector at `x`, using the
/// orthonormal coframe `(dt, dx/c)`.
pub fn from_orthonormal_frame(metric: &ProductMetric, x: &Vector3<f64>, z: &Covector) -> Covector {
    let c = metric.speed(x);
    Covector(Vector4::new(z.0[0], z.0[1] / c, z.0[2] / c, z.0[3] / c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn origin() -> SpacetimePoint {
        SpacetimePoint::new(0.0, [0.0; 3])
    }

    #[test]
    fn minkowski_raise_flips_time_slot() {
        let m = ProductMetric::minkowski(3);
        let v = raise(&m, &origin(), &Covector::new([-1.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(v, TangentVector::new([1.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn raise_uses_c_squared() {
        let m = ProductMetric::constant(2.0, 3).unwrap();
        let v = raise(&m, &origin(), &Covector::new([0.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(v, TangentVector::new([0.0, 4.0, 0.0, 0.0]));
    }

    #[test]
    fn outside_padded_domain_is_rejected() {
        let m = ProductMetric::minkowski(3).with_padded_domain(Arc::new(Ball::new([0.0; 3], 1.0)));
        let p = SpacetimePoint::new(0.0, [2.0, 0.0, 0.0]);
        assert!(matches!(
            raise(&m, &p, &Covector::new([1.0, 0.0, 0.0, 0.0])),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn classification_examples() {
        let m = ProductMetric::minkowski(3);
        let o = origin();
        let c = |z: [f64; 4]| classify_covector(&m, &o, &Covector::new(z), 1e-9).unwrap();
        assert_eq!(
            c([-1.0, 1.0, 0.0, 0.0]),
            Classification {
                character: CausalCharacter::Lightlike,
                orientation: TimeOrientation::Future
            }
        );
        assert_eq!(
            c([-2.0, 1.0, 0.0, 0.0]),
            Classification {
                character: CausalCharacter::Timelike,
                orientation: TimeOrientation::Future
            }
        );
        assert_eq!(
            c([0.0, 1.0, 0.0, 0.0]),
            Classification {
                character: CausalCharacter::Spacelike,
                orientation: TimeOrientation::None
            }
        );
        assert_eq!(c([1.0, 1.0, 0.0, 0.0]).orientation, TimeOrientation::Past);
        assert!(classify_covector(&m, &o, &Covector::zero(), 1e-9).is_err());
    }

    #[test]
    fn time_separation_examples() {
        let m = ProductMetric::minkowski(3);
        let x = origin();
        let y = SpacetimePoint::new(2.0, [1.0, 0.0, 0.0]);
        assert!((time_separation(&m, &x, &y).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(time_separation(&m, &y, &x).unwrap(), 0.0);
        let spacelike = SpacetimePoint::new(0.5, [1.0, 0.0, 0.0]);
        assert_eq!(time_separation(&m, &x, &spacelike).unwrap(), 0.0);
        let lens = ProductMetric::new(field::from_fn(|p| 1.0 + 0.1 * p.x[0].sin()), 3).unwrap();
        assert!(matches!(
            time_separation(&lens, &x, &y),
            Err(Error::Unsupported(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn raise_lower_round_trip(
            z in proptest::array::uniform4(-10.0f64..10.0),
            x in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            let m = ProductMetric::new(field::from_fn(|p| 1.0 + 0.3 * p.x[0].cos() * p.x[1].sin()), 3).unwrap();
            let p = SpacetimePoint::new(0.0, x);
            let z = Covector::new(z);
            let back = lower(&m, &p, &raise(&m, &p, &z).unwrap()).unwrap();
            prop_assert!((back.0 - z.0).amax() <= 1e-14 * z.0.amax().max(1.0));
            // <ζ, v> = g(ζ^♯, v)
            let v = TangentVector::new([0.3, -1.2, 0.5, 2.0]);
            let zs = raise(&m, &p, &z).unwrap();
            let c2 = m.speed(&p.x).powi(2);
            let g = -zs.0[0] * v.0[0] + zs.spatial().dot(&v.spatial()) / c2;
            prop_assert!((z.pair(&v) - g).abs() <= 1e-12 * (1.0 + z.0.amax()));
        }

        #[test]
        fn reverse_triangle_inequality(
            a in proptest::array::uniform3(-1.0f64..1.0),
            b in proptest::array::uniform3(-1.0f64..1.0),
            dt1 in 0.0f64..3.0,
            dt2 in 0.0f64..3.0,
        ) {
            let m = ProductMetric::minkowski(3);
            let x = origin();
            let y = SpacetimePoint::new(dt1 + a.iter().map(|v| v * v).sum::<f64>().sqrt(), a);
            let z = SpacetimePoint::new(
                y.t + dt2 + b.iter().map(|v| v * v).sum::<f64>().sqrt(),
                [a[0] + b[0], a[1] + b[1], a[2] + b[2]],
            );
            let lhs = time_separation(&m, &x, &y).unwrap() + time_separation(&m, &y, &z).unwrap();
            let rhs = time_separation(&m, &x, &z).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
