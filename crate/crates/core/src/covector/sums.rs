use nalgebra::Vector4;

use super::{minkowski_norm_sq, CovectorFrame, FrameKind};
use crate::error::{Error, Result};

/// Coefficients of the three- and four-wave interactions of one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InteractionCoefficients {
    pub c: Option<f64>,
    pub d: Option<f64>,
    pub curly_c: Option<f64>,
    pub i3: Option<f64>,
    pub i3_closed_form: Option<f64>,
    pub sum_identity: Option<f64>,
}

/// `(2cos θ + 1) / (2(cos φ + cos θ))`.
pub fn i3_closed_form(phi: f64, theta: f64) -> f64 {
    (2.0 * theta.cos() + 1.0) / (2.0 * (phi.cos() + theta.cos()))
}

/// `(Σ ζ₀)² / |Σ ζ|²` for the listed members.
fn ratio(z: &[Vector4<f64>], idx: &[usize]) -> Result<f64> {
    let s = idx.iter().fold(Vector4::zeros(), |acc, &i| acc + z[i]);
    let n = minkowski_norm_sq(&s);
    let scale = s.norm_squared().max(f64::MIN_POSITIVE);
    if n.abs() <= 1e-13 * scale {
        return Err(Error::NullDenominator {
            indices: idx.iter().map(|i| i + 1).collect(),
            value: n,
        });
    }
    Ok(s[0] * s[0] / n)
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    if i != j && i != k && i != l && j != k && j != l && k != l {
                        out.push([i, j, k, l]);
                    }
                }
            }
        }
    }
    out
}

/// Interaction sums of a frame.
///
/// Four-frames give `C`, `D` (ordered sums over all 24 permutations) and
/// `𝒞 = Cβ₂³ + Dβ₂β₃ + β₄`. Three-frames give the pair identity and `I₃`,
/// both summed over the three ways of singling out one member `i` against the
/// unordered pair `{j, k}` of the others.
pub fn interaction_sums(frame: &CovectorFrame, b2: f64, b3: f64, b4: f64) -> Result<InteractionCoefficients> {
    let z = frame.weighted_covectors();
    let mut out = InteractionCoefficients::default();
    match z.len() {
        4 => {
            let (mut c, mut d) = (0.0, 0.0);
            for [i, j, k, l] in permutations4() {
                let r_ijk = ratio(&z, &[i, j, k])?;
                let r_il = ratio(&z, &[i, l])?;
                let r_jk = ratio(&z, &[j, k])?;
                let r_kl = ratio(&z, &[k, l])?;
                c += (4.0 * r_ijk + r_il) * r_jk;
                d += 3.0 * r_kl + 2.0 * r_ijk;
            }
            out.c = Some(c);
            out.d = Some(d);
            out.curly_c = Some(c * b2.powi(3) + d * b2 * b3 + b4);
        }
        3 => {
            // Pair sums are formed as `w − ζ_i` with the target `w`; members
            // carry large cancelling weights near degenerate frames. With
            // `w` and `ζ_i` null, `|w − ζ_i|² = −2⟨w, ζ_i⟩`.
            let w = frame.target_covector().0;
            let (mut ident, mut i3) = (0.0, 0.0);
            for (i, (j, k)) in [(1, 2), (0, 2), (0, 1)].into_iter().enumerate() {
                let zi = z[i];
                let dot = -w[0] * zi[0] + w[1] * zi[1] + w[2] * zi[2] + w[3] * zi[3];
                let n = -2.0 * dot;
                let s0 = w[0] - zi[0];
                let scale = (w - zi).norm_squared();
                if n.abs() <= 1e-13 * scale {
                    return Err(Error::NullDenominator {
                        indices: vec![j + 1, k + 1],
                        value: n,
                    });
                }
                ident += s0 * s0 / n;
                i3 += w[0] * s0 / n;
            }
            out.sum_identity = Some(ident);
            out.i3 = Some(i3);
            if let FrameKind::I3 { phi, theta, .. } = frame.kind {
                out.i3_closed_form = Some(i3_closed_form(phi, theta));
            }
        }
        n => {
            return Err(Error::InvalidInput(format!("frames have 3 or 4 members, got {n}")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covector::{build_four_frame, build_i3_frame, build_three_frame, fit_laurent};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn pair_identity_on_three_frames() {
        for (r0, s) in [(0.0, 0.1), (0.5, -0.2), (-0.9, 0.05)] {
            let f = build_three_frame(r0, s).unwrap();
            let c = interaction_sums(&f, 0.0, 0.0, 0.0).unwrap();
            assert!((c.sum_identity.unwrap() + 1.0).abs() < 1e-12, "{r0} {s} {:e}", c.sum_identity.unwrap() + 1.0);
        }
    }

    #[test]
    fn i3_is_the_negated_closed_form() {
        // With the pair identity normalised to −1 the direct sum carries the
        // opposite sign of the closed form; |I₃| matches it exactly.
        let f = build_i3_frame(PI / 2.0, PI / 3.0).unwrap();
        let c = interaction_sums(&f, 0.0, 0.0, 0.0).unwrap();
        assert!((c.i3_closed_form.unwrap() - 2.0).abs() < 1e-12);
        assert!((c.i3.unwrap() + 2.0).abs() < 1e-12);
        assert!((c.sum_identity.unwrap() + 1.0).abs() < 1e-12);
        assert!((c.i3.unwrap() / c.sum_identity.unwrap() - c.i3_closed_form.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn four_frame_laurent_coefficients() {
        let s_values: Vec<f64> = (0..16).map(|k| 0.05 + 0.01 * k as f64).collect();
        let mut cs = vec![];
        let mut ds = vec![];
        for &s in &s_values {
            let theta = 2.0 * s.asin();
            let f = build_four_frame(0.4, theta).unwrap();
            let ic = interaction_sums(&f, 1.0, 1.0, 0.0).unwrap();
            cs.push((s, ic.c.unwrap()));
            ds.push((s, ic.d.unwrap()));
        }
        let orders = [-3, -2, -1, 0, 1, 2];
        let fc = fit_laurent(&cs, &orders).unwrap();
        let fd = fit_laurent(&ds, &orders).unwrap();
        assert!((fc.coefficient(-3).unwrap() + 2.0).abs() < 0.02 * 2.0);
        assert!((fc.coefficient(-2).unwrap() - 14.0).abs() < 0.05 * 14.0);
        assert!((fc.coefficient(-1).unwrap() - 10.0).abs() < 0.10 * 10.0);
        assert!((fd.coefficient(-3).unwrap() - 1.5).abs() < 0.02 * 1.5);
        assert!((fd.coefficient(-2).unwrap() + 10.5).abs() < 0.05 * 10.5);
        assert!((fd.coefficient(-1).unwrap() + 2.25).abs() < 0.10 * 2.25);
    }

    #[test]
    fn curly_c_remainder_stays_bounded() {
        let (b2, b3, b4) = (1.0, 2.0, 0.5);
        let lead = |s: f64| {
            let a = 4.0 * b2 * b2 * b2 - 3.0 * b2 * b3;
            -a / (2.0 * s.powi(3)) + 3.5 * a / (s * s) + (40.0 * b2.powi(3) - 9.0 * b2 * b3) / (4.0 * s)
        };
        // remainder after the three singular terms is O(1): bounded and flat as s → 0
        let mut worst: f64 = 0.0;
        let mut first = None;
        for k in 0..=18 {
            let s: f64 = 0.02 + 0.01 * k as f64;
            let f = build_four_frame(1.3, 2.0 * s.asin()).unwrap();
            let cc = interaction_sums(&f, b2, b3, b4).unwrap().curly_c.unwrap();
            let rem = cc - lead(s);
            first.get_or_insert(rem);
            worst = worst.max(rem.abs());
            assert!((rem - first.unwrap()).abs() < 40.0 * s, "remainder drifts at s = {s}");
        }
        assert!(worst < 150.0, "remainder {worst}");
    }

    #[test]
    fn null_pair_is_reported() {
        let mut f = build_three_frame(0.0, 0.1).unwrap();
        f.weights[0] = 0.0;
        let err = interaction_sums(&f, 1.0, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::NullDenominator { ref indices, .. } if indices == &vec![2, 3]));
    }

    proptest! {
        #[test]
        fn i3_ratio_matches_closed_form(phi in 0.05f64..6.2, theta in 0.05f64..6.2) {
            prop_assume!((phi.cos() + theta.cos()).abs() > 1e-2);
            prop_assume!((theta - PI).abs() > 1e-2);
            if let Ok(f) = build_i3_frame(phi, theta) {
                // a vanishing weight puts a pair sum on the null cone
                prop_assume!(f.weights.iter().all(|a| a.abs() >= 0.1 * f.target[0].abs()));
                if let Ok(c) = interaction_sums(&f, 0.0, 0.0, 0.0) {
                    let closed = c.i3_closed_form.unwrap();
                    prop_assert!((c.sum_identity.unwrap() + 1.0).abs() < 1e-10);
                    prop_assert!((c.i3.unwrap() + closed).abs() <= 1e-10 * closed.abs().max(1.0));
                }
            }
        }
    }
}
