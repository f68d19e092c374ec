use nalgebra::{Matrix3, Matrix3x2, SMatrix, SVector, Vector3};

use super::{Bicharacteristic, ProductMetric};
use crate::error::Result;

type Base = SVector<f64, 6>;
type Jac = SMatrix<f64, 6, 2>;

fn base_rhs(metric: &ProductMetric, y: &Base) -> (Base, SMatrix<f64, 6, 6>) {
    let x = Vector3::new(y[0], y[1], y[2]);
    let z = Vector3::new(y[3], y[4], y[5]);
    let c = metric.speed(&x);
    let g = metric.speed_gradient(&x);
    let hc = metric.speed_hessian(&x);
    let zz = z.norm_squared();
    let xd = 2.0 * c * c * z;
    let zd = -2.0 * c * zz * g;
    let mut f = Base::zeros();
    f.fixed_rows_mut::<3>(0).copy_from(&xd);
    f.fixed_rows_mut::<3>(3).copy_from(&zd);
    let mut df = SMatrix::<f64, 6, 6>::zeros();
    df.fixed_view_mut::<3, 3>(0, 0).copy_from(&(4.0 * c * z * g.transpose()));
    df.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Matrix3::identity() * (2.0 * c * c)));
    df.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(-2.0 * zz * (g * g.transpose() + hc * c)));
    df.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-4.0 * c * g * z.transpose()));
    (f, df)
}

fn step(metric: &ProductMetric, y: &Base, j: &Jac, h: f64) -> (Base, Jac) {
    let eval = |y: &Base, j: &Jac| {
        let (f, df) = base_rhs(metric, y);
        (f, df * j)
    };
    let (k1, l1) = eval(y, j);
    let (k2, l2) = eval(&(y + k1 * (h / 2.0)), &(j + l1 * (h / 2.0)));
    let (k3, l3) = eval(&(y + k2 * (h / 2.0)), &(j + l2 * (h / 2.0)));
    let (k4, l4) = eval(&(y + k3 * h), &(j + l3 * h));
    (
        y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0),
        j + (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0),
    )
}

fn transverse(j: &Jac, v: &Vector3<f64>) -> Matrix3x2<f64> {
    let n = v.normalize();
    let p = Matrix3::identity() - n * n.transpose();
    p * j.fixed_view::<3, 2>(0, 0)
}

/// First parameter at which a transverse Jacobi field with `J(0) = 0` vanishes.
///
/// The two transverse fields start with `δx = 0` and `δζ ⊥ ζ(0)`. Across each
/// sample interval the transfer map `A(s_i)⁺ A(s_{i+1})` of their transverse
/// parts is formed; a non-positive eigenvalue marks a field passing through
/// zero, located by linear interpolation of that eigencomponent. This detects
/// simple and double (symmetric lens) conjugate points alike.
pub fn detect_conjugate_point(path: &Bicharacteristic, metric: &ProductMetric) -> Result<Option<f64>> {
    if metric.dim() == 1 || metric.constant_speed().is_some() {
        return Ok(None);
    }
    let samples = path.samples();
    if samples.len() < 3 {
        return Ok(None);
    }
    let z0 = samples[0].covector.spatial();
    let helper = if z0[0].abs() < 0.9 * z0.norm() {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = z0.cross(&helper).normalize();
    let e2 = z0.cross(&e1).normalize();
    let mut jac = Jac::zeros();
    jac.fixed_view_mut::<3, 1>(3, 0).copy_from(&e1);
    jac.fixed_view_mut::<3, 1>(3, 1).copy_from(&e2);

    let mut prev: Option<(f64, Matrix3x2<f64>)> = None;
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let y = Base::from_column_slice(&[
            a.point.x[0],
            a.point.x[1],
            a.point.x[2],
            a.covector.0[1],
            a.covector.0[2],
            a.covector.0[3],
        ]);
        let (_, jn) = step(metric, &y, &jac, b.s - a.s);
        jac = jn;
        let an = transverse(&jac, &b.velocity.spatial());
        if let Some((sp, ap)) = prev {
            let gram = ap.transpose() * ap;
            if let Some(inv) = gram.try_inverse() {
                let m = inv * ap.transpose() * an;
                let tr = m.trace();
                let det = m.determinant();
                let disc = tr * tr / 4.0 - det;
                let candidates: Vec<f64> = if disc >= 0.0 {
                    vec![tr / 2.0 - disc.sqrt(), tr / 2.0 + disc.sqrt()]
                } else {
                    vec![tr / 2.0]
                };
                let rho = candidates
                    .into_iter()
                    .filter(|&l| l <= 0.0)
                    .map(|l| (b.s - l * sp) / (1.0 - l))
                    .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))));
                if rho.is_some() {
                    return Ok(rho);
                }
            }
        }
        prev = Some((b.s, an));
    }
    Ok(None)
}
