//! Lightlike covector frames and the interaction coefficients built from them.
//!
//! Frames live in the Minkowski tangent frame of their base point, with
//! signature `(−, +, +, +)`.

mod laurent;
mod sums;

use nalgebra::{Matrix4, Rotation3, Vector4};

pub use laurent::{fit_laurent, LaurentFit};
pub use sums::{i3_closed_form, interaction_sums, InteractionCoefficients};

use crate::error::{Error, Result};
use crate::field::{Covector, SpacetimePoint};
use crate::tolerances;

/// Minkowski dual norm `−ζ₀² + |ζ'|²`.
pub fn minkowski_norm_sq(z: &Vector4<f64>) -> f64 {
    -z[0] * z[0] + z[1] * z[1] + z[2] * z[2] + z[3] * z[3]
}

/// How a frame was parametrised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameKind {
    /// Past-pointing null vectors `ϑ_j` spanning the future null vector `w`.
    Three { r0: f64, s: f64 },
    /// Three null covectors with `λ ζ̂ = Σ α_j ζ̂ʲ`.
    I3 { phi: f64, theta: f64, lambda: f64 },
    /// Four null covectors collapsing onto `ζ̂¹` as `θ → 0`.
    Four { phi: f64, theta: f64 },
}

/// Whether member components are tangent vectors or covectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variance {
    Vector,
    Covector,
}

#[derive(Debug, Clone)]
pub struct CovectorFrame {
    pub base: SpacetimePoint,
    pub members: Vec<Vector4<f64>>,
    pub weights: Vec<f64>,
    pub target: Vector4<f64>,
    pub kind: FrameKind,
    pub variance: Variance,
}

fn minkowski_flat(v: &Vector4<f64>) -> Vector4<f64> {
    Vector4::new(-v[0], v[1], v[2], v[3])
}

impl CovectorFrame {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn at(mut self, base: SpacetimePoint) -> Self {
        self.base = base;
        self
    }

    /// The weighted covectors `ζʲ = α_j ζ̂ʲ` entering the interaction sums.
    /// Applies the spatial rotation `r` to every member and the target.
    pub fn rotated(mut self, r: &Rotation3<f64>) -> Self {
        let turn = |v: &Vector4<f64>| {
            let x = r * v.fixed_rows::<3>(1);
            Vector4::new(v[0], x[0], x[1], x[2])
        };
        self.members = self.members.iter().map(turn).collect();
        self.target = turn(&self.target);
        self
    }

    pub fn weighted_covectors(&self) -> Vec<Vector4<f64>> {
        self.members
            .iter()
            .zip(&self.weights)
            .map(|(m, a)| {
                let c = match self.variance {
                    Variance::Vector => minkowski_flat(m),
                    Variance::Covector => *m,
                };
                c * *a
            })
            .collect()
    }

    /// Target as a covector.
    pub fn target_covector(&self) -> Covector {
        Covector(match self.variance {
            Variance::Vector => minkowski_flat(&self.target),
            Variance::Covector => self.target,
        })
    }

    /// Member `j` as a covector (unweighted).
    pub fn member_covector(&self, j: usize) -> Covector {
        Covector(match self.variance {
            Variance::Vector => minkowski_flat(&self.members[j]),
            Variance::Covector => self.members[j],
        })
    }

    /// `|target − Σ α_j member_j|_∞`.
    pub fn decomposition_residual(&self) -> f64 {
        let sum = self
            .members
            .iter()
            .zip(&self.weights)
            .fold(Vector4::zeros(), |acc, (m, a)| acc + m * *a);
        (self.target - sum).amax()
    }

    /// Small parameter of the Laurent expansions: `sin(θ/2)` for four-frames.
    pub fn laurent_parameter(&self) -> Option<f64> {
        match self.kind {
            FrameKind::Four { theta, .. } => Some((theta / 2.0).sin()),
            _ => None,
        }
    }

    fn check(self) -> Result<Self> {
        for (j, m) in self.members.iter().enumerate() {
            let q = minkowski_norm_sq(m).abs() / m.norm_squared();
            if q > tolerances::FRAME {
                return Err(Error::DegenerateFrame(format!("member {} is not null ({q:e})", j + 1)));
            }
        }
        let res = self.decomposition_residual();
        let scale = self.weights.iter().fold(1.0f64, |a, w| a.max(w.abs()));
        if res > tolerances::FRAME * scale {
            return Err(Error::DegenerateFrame(format!("decomposition residual {res:e}")));
        }
        Ok(self)
    }
}

/// `ϑ₁ = (−1,1,0,0)`, `ϑ₂,₃ = (−1, √(1−s²), ±s, 0)` and `w = (1, √(1−r₀²), −r₀, 0)`.
pub fn build_three_frame(r0: f64, s: f64) -> Result<CovectorFrame> {
    if !(-1.0..=1.0).contains(&r0) {
        return Err(Error::InvalidInput(format!("r0 = {r0} outside [-1, 1]")));
    }
    if s == 0.0 || s.abs() >= 1.0 || !s.is_finite() {
        return Err(Error::DegenerateFrame(format!("s = {s}: members 2 and 3 coincide or are undefined")));
    }
    let c = (1.0 - s * s).sqrt();
    let members = vec![
        Vector4::new(-1.0, 1.0, 0.0, 0.0),
        Vector4::new(-1.0, c, s, 0.0),
        Vector4::new(-1.0, c, -s, 0.0),
    ];
    let target = Vector4::new(1.0, (1.0 - r0 * r0).sqrt(), -r0, 0.0);
    // closed-form solve; 1 − c is evaluated as s²/(1 + c) to avoid cancellation
    let q = target[1];
    let u = -(q + 1.0) * (1.0 + c) / (s * s);
    let v = -r0 / s;
    let weights = [-1.0 - u, (u + v) / 2.0, (u - v) / 2.0];
    CovectorFrame {
        base: SpacetimePoint::new(0.0, [0.0; 3]),
        members,
        weights: weights.to_vec(),
        target,
        kind: FrameKind::Three { r0, s },
        variance: Variance::Vector,
    }
    .check()
}

/// Frame with target `λ ζ̂`, `ζ̂ = (−1, −cos φ, sin φ, 0)`, and closed-form weights.
pub fn build_i3_frame(phi: f64, theta: f64) -> Result<CovectorFrame> {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let denom = cp + ct;
    if denom.abs() < 1e-12 {
        return Err(Error::SingularConstruction(format!(
            "cos φ + cos θ = {denom:e} vanishes"
        )));
    }
    let lambda = 2.0 * st * (1.0 - ct);
    let weights = vec![
        -2.0 * st * denom,
        (1.0 + cp) * st + (1.0 - ct) * sp,
        (1.0 + cp) * st - (1.0 - ct) * sp,
    ];
    if lambda.abs() < 1e-12 {
        return Err(Error::DegenerateFrame(format!("λ = {lambda:e} vanishes")));
    }
    if let Some(j) = weights.iter().position(|a| a.abs() < 1e-12) {
        return Err(Error::DegenerateFrame(format!("α_{} vanishes", j + 1)));
    }
    let target = Vector4::new(-1.0, -cp, sp, 0.0) * lambda;
    CovectorFrame {
        base: SpacetimePoint::new(0.0, [0.0; 3]),
        members: vec![
            Vector4::new(-1.0, 1.0, 0.0, 0.0),
            Vector4::new(-1.0, ct, st, 0.0),
            Vector4::new(-1.0, ct, -st, 0.0),
        ],
        weights,
        target,
        kind: FrameKind::I3 { phi, theta, lambda },
        variance: Variance::Covector,
    }
    .check()
}

/// Target `ζ = (−1, 0, cos φ, sin φ)` and four members around `ζ̂¹ = (−1,1,0,0)`;
/// weights from the 4×4 linear system.
pub fn build_four_frame(phi: f64, theta: f64) -> Result<CovectorFrame> {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let members = vec![
        Vector4::new(-1.0, 1.0, 0.0, 0.0),
        Vector4::new(-1.0, ct, st * sp, -st * cp),
        Vector4::new(-1.0, ct, -st * sp, st * cp),
        Vector4::new(-1.0, ct, st * cp, st * sp),
    ];
    let target = Vector4::new(-1.0, 0.0, cp, sp);
    let a = Matrix4::from_fn(|i, j| members[j][i]);
    let svd = a.svd(false, false);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > tolerances::RANK_REL * smax) {
        return Err(Error::RankDeficient(format!(
            "four-frame members at θ = {theta} have condition {:e}",
            smax / smin
        )));
    }
    let weights = a
        .lu()
        .solve(&target)
        .ok_or_else(|| Error::RankDeficient("four-frame system is singular".into()))?;
    CovectorFrame {
        base: SpacetimePoint::new(0.0, [0.0; 3]),
        members,
        weights: weights.iter().copied().collect(),
        target,
        kind: FrameKind::Four { phi, theta },
        variance: Variance::Covector,
    }
    .check()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use nalgebra::Matrix3;

    #[test]
    fn three_frame_members_are_null_and_independent() {
        let f = build_three_frame(0.0, 0.1).unwrap();
        for m in &f.members {
            assert!(minkowski_norm_sq(m).abs() <= 1e-15);
        }
        let a = Matrix3::from_fn(|i, j| f.members[j][i]);
        assert_eq!(a.rank(1e-10), 3);
        assert!(f.decomposition_residual() <= 1e-12);
        assert!(build_three_frame(0.3, 0.0).is_err());
    }

    #[test]
    fn i3_frame_reference_values() {
        let f = build_i3_frame(std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_2).unwrap();
        let FrameKind::I3 { lambda, .. } = f.kind else { panic!() };
        assert!((lambda - 2.0).abs() < 1e-15);
        let r3 = 3f64.sqrt() / 2.0;
        let expect = [-1.0, 1.5 + r3, 1.5 - r3];
        for (a, e) in f.weights.iter().zip(expect) {
            assert!((a - e).abs() < 1e-14, "{a} vs {e}");
        }
        assert!(f.decomposition_residual() <= 1e-12);
    }

    #[test]
    fn i3_frame_singular_when_cosines_cancel() {
        let theta = 1.1;
        assert!(matches!(
            build_i3_frame(std::f64::consts::PI - theta, theta),
            Err(Error::SingularConstruction(_))
        ));
    }

    #[test]
    fn four_frame_basic() {
        let f = build_four_frame(0.0, 0.2).unwrap();
        assert_eq!(f.len(), 4);
        let a = Matrix4::from_fn(|i, j| f.members[j][i]);
        assert_eq!(a.rank(1e-10), 4);
        assert!(f.decomposition_residual() <= 1e-12);
        assert!(matches!(build_four_frame(0.3, 0.0), Err(Error::RankDeficient(_))));
    }

    proptest! {
        #[test]
        fn three_frame_reproduces_target(r0 in -1.0f64..1.0, s in 0.01f64..0.5, sign in proptest::bool::ANY) {
            let s = if sign { s } else { -s };
            let f = build_three_frame(r0, s).unwrap();
            prop_assert!(f.decomposition_residual() <= 1e-12 * f.weights.iter().fold(1.0f64, |a, w| a.max(w.abs())));
        }

        #[test]
        fn i3_frame_direct_substitution(phi in 0.05f64..6.2, theta in 0.05f64..6.2) {
            prop_assume!(((phi.cos() + theta.cos()).abs()) > 1e-3);
            prop_assume!((theta - std::f64::consts::PI).abs() > 1e-3);
            if let Ok(f) = build_i3_frame(phi, theta) {
                prop_assert!(f.decomposition_residual() <= 1e-12);
            }
        }

        #[test]
        fn four_frame_residual(phi in 0.0f64..std::f64::consts::TAU, theta in 0.02f64..0.5) {
            let f = build_four_frame(phi, theta).unwrap();
            for m in &f.members {
                prop_assert!(minkowski_norm_sq(m).abs() <= 1e-12);
            }
            prop_assert!(f.decomposition_residual() <= 1e-12 * f.weights.iter().fold(1.0f64, |a, w| a.max(w.abs())));
        }
    }
}
