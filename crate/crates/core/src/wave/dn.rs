use ndarray::Array2;

use super::{Grid1d, MediumParams, Wavefield};
use crate::error::Result;

/// Samples of `∂_ν p + ½⟨b, ν⟩ p` at the two boundary nodes, indexed `[n, side]`
/// with side 0 at `x = 0` (`ν = −∂_x`) and side 1 at `x = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DnTrace {
    pub grid: Grid1d,
    pub values: Array2<f64>,
}

impl DnTrace {
    pub fn times(&self) -> Vec<f64> {
        (0..=self.grid.nt).map(|n| self.grid.t(n)).collect()
    }

    /// Discrete `L²((0, T) × ∂Ω)` norm (counting measure on the boundary).
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.dt).sqrt()
    }

    pub fn l2_distance(&self, other: &DnTrace) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let d = &self.values - &other.values;
        Ok((d.iter().map(|v| v * v).sum::<f64>() * self.grid.dt).sqrt())
    }

    /// Rows `t, boundary_index, value`.
    pub fn rows(&self) -> impl Iterator<Item = (f64, usize, f64)> + '_ {
        self.values
            .indexed_iter()
            .map(move |((n, side), &v)| (self.grid.t(n), side, v))
    }
}

/// Fourth-order one-sided derivative at sample 0 of `u(k)`, spacing `h`.
fn one_sided(u: impl Fn(usize) -> f64, h: f64) -> f64 {
    (-25.0 * u(0) + 48.0 * u(1) - 36.0 * u(2) + 16.0 * u(3) - 3.0 * u(4)) / (12.0 * h)
}

/// DN trace with one-sided fourth-order normal derivatives, so the trace
/// inherits the accuracy of the field rather than of the stencil.
pub fn dn_trace(params: &MediumParams, field: &Wavefield) -> Result<DnTrace> {
    let g = field.grid;
    let sm = params.sample(&g)?;
    let p = &field.values;
    let nx = g.nx;
    let mut values = Array2::zeros((g.nt + 1, 2));
    for n in 0..=g.nt {
        let dx0 = one_sided(|k| p[(n, k)], g.dx);
        let dx1 = -one_sided(|k| p[(n, nx - k)], g.dx);
        values[(n, 0)] = -dx0 - 0.5 * sm.b_x[(n, 0)] * p[(n, 0)];
        values[(n, 1)] = dx1 + 0.5 * sm.b_x[(n, nx)] * p[(n, nx)];
    }
    Ok(DnTrace { grid: g, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::OneForm;
    use crate::lorentz::ProductMetric;
    use crate::wave::{solve_linear, BoundarySource, Profile};

    fn flat() -> MediumParams {
        MediumParams::new(ProductMetric::constant(1.0, 1).unwrap())
    }

    #[test]
    fn outgoing_pulse_trace_is_source_derivative() {
        let profile = Profile::Bump { start: 0.05, width: 0.3 };
        let err = |nx: usize| {
            let g = Grid1d::with_courant(nx, 0.6, 0.5).unwrap();
            let w = solve_linear(&flat(), &g, BoundarySource::left(1.0, profile), None).unwrap();
            let tr = dn_trace(&flat(), &w).unwrap();
            (0..=g.nt)
                .map(|n| (tr.values[(n, 0)] - profile.derivative(g.t(n))).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(400), err(800));
        assert!((e1 / e2).log2() > 1.8, "{e1:e} {e2:e}");
    }

    #[test]
    fn zero_field_zero_trace() {
        let g = Grid1d::with_courant(20, 0.5, 0.5).unwrap();
        let w = solve_linear(&flat(), &g, BoundarySource::zero(), None).unwrap();
        assert!(dn_trace(&flat(), &w).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spatial_one_form_adds_half_normal_component() {
        let g = Grid1d::with_courant(50, 0.5, 0.5).unwrap();
        let src = BoundarySource::bump(1.0, 0.05, 0.2);
        let w = solve_linear(&flat(), &g, src, None).unwrap();
        let plain = dn_trace(&flat(), &w).unwrap();
        let with_b = dn_trace(&flat().with_one_form(OneForm::constant([0.0, 0.3, 0.0, 0.0])), &w).unwrap();
        for n in 0..=g.nt {
            let p0 = w.values[(n, 0)];
            let p1 = w.values[(n, g.nx)];
            assert!((with_b.values[(n, 0)] - (plain.values[(n, 0)] - 0.15 * p0)).abs() < 1e-14);
            assert!((with_b.values[(n, 1)] - (plain.values[(n, 1)] + 0.15 * p1)).abs() < 1e-14);
        }
    }
}
