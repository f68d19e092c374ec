use nalgebra::Vector3;

/// Spatial region described by a signed distance (negative inside).
pub trait Domain: Send + Sync {
    fn signed_distance(&self, x: &Vector3<f64>) -> f64;

    fn contains(&self, x: &Vector3<f64>) -> bool {
        self.signed_distance(x) <= 0.0
    }

    /// Outward unit normal near the boundary.
    fn outward_normal(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let h = 1e-6;
        let g = Vector3::from_fn(|k, _| {
            let mut a = *x;
            let mut b = *x;
            a[k] += h;
            b[k] -= h;
            (self.signed_distance(&a) - self.signed_distance(&b)) / (2.0 * h)
        });
        let n = g.norm();
        if n > 0.0 {
            g / n
        } else {
            g
        }
    }
}

/// `lo < x¹ < hi`; the other coordinates are unconstrained.
#[derive(Debug, Clone, Copy)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

impl Domain for Interval {
    fn signed_distance(&self, x: &Vector3<f64>) -> f64 {
        (self.lo - x[0]).max(x[0] - self.hi)
    }

    fn outward_normal(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let mid = 0.5 * (self.lo + self.hi);
        Vector3::new(if x[0] < mid { -1.0 } else { 1.0 }, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AxisBox {
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
}

impl AxisBox {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Self {
            lo: Vector3::from(lo),
            hi: Vector3::from(hi),
        }
    }

    pub fn unit_cube() -> Self {
        Self::new([0.0; 3], [1.0; 3])
    }
}

impl Domain for AxisBox {
    fn signed_distance(&self, x: &Vector3<f64>) -> f64 {
        let centre = (self.lo + self.hi) * 0.5;
        let half = (self.hi - self.lo) * 0.5;
        let q = (x - centre).abs() - half;
        let outside = q.map(|v| v.max(0.0)).norm();
        let inside = q.max().min(0.0);
        outside + inside
    }

    fn outward_normal(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let centre = (self.lo + self.hi) * 0.5;
        let half = (self.hi - self.lo) * 0.5;
        let q = (x - centre).abs() - half;
        let k = q.imax();
        let mut n = Vector3::zeros();
        n[k] = (x[k] - centre[k]).signum();
        n
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Ball {
    pub centre: Vector3<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(centre: [f64; 3], radius: f64) -> Self {
        Self {
            centre: Vector3::from(centre),
            radius,
        }
    }
}

impl Domain for Ball {
    fn signed_distance(&self, x: &Vector3<f64>) -> f64 {
        (x - self.centre).norm() - self.radius
    }

    fn outward_normal(&self, x: &Vector3<f64>) -> Vector3<f64> {
        (x - self.centre).normalize()
    }
}
