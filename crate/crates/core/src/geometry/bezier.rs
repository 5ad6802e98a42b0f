use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

const BINOMIAL3: [f64; 4] = [1.0, 3.0, 3.0, 1.0];

fn check_unit(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain(format!("curve parameter {t} outside [0, 1]")))
    }
}

/// Cubic Bernstein basis polynomial `C(3,j) t^j (1-t)^(3-j)`.
pub fn bernstein(j: usize, t: f64) -> Result<f64> {
    if j > 3 {
        return Err(Error::Domain(format!("basis index {j} outside 0..=3")));
    }
    check_unit(t)?;
    Ok(bernstein_unchecked(j, t))
}

#[inline]
pub(crate) fn bernstein_unchecked(j: usize, t: f64) -> f64 {
    let s = 1.0 - t;
    BINOMIAL3[j] * t.powi(j as i32) * s.powi(3 - j as i32)
}

#[inline]
pub(crate) fn bernstein_all(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * t * s * s, 3.0 * t * t * s, t * t * t]
}

/// A 3D cubic Bézier curve given by four ordered control points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicBezier3D {
    pub points: [Vector3<f64>; 4],
}

impl CubicBezier3D {
    pub fn new(p0: Vector3<f64>, p1: Vector3<f64>, p2: Vector3<f64>, p3: Vector3<f64>) -> Self {
        Self {
            points: [p0, p1, p2, p3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }

    pub fn eval(&self, t: f64) -> Result<Vector3<f64>> {
        check_unit(t)?;
        Ok(self.point_at(t))
    }

    #[inline]
    pub(crate) fn point_at(&self, t: f64) -> Vector3<f64> {
        let b = bernstein_all(t);
        self.points[0] * b[0] + self.points[1] * b[1] + self.points[2] * b[2] + self.points[3] * b[3]
    }

    /// Evenly spaced samples in parameter space, endpoints included.
    pub fn sample(&self, n: usize) -> Vec<Vector3<f64>> {
        let n = n.max(2);
        (0..n).map(|i| self.point_at(i as f64 / (n - 1) as f64)).collect()
    }
}

/// A 2D cubic Bézier curve in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CubicBezier2D {
    pub points: [Vector2<f64>; 4],
}

impl CubicBezier2D {
    pub fn new(q0: Vector2<f64>, q1: Vector2<f64>, q2: Vector2<f64>, q3: Vector2<f64>) -> Self {
        Self {
            points: [q0, q1, q2, q3],
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vector2<f64>> {
        check_unit(t)?;
        Ok(self.point_at(t))
    }

    #[inline]
    pub fn point_at(&self, t: f64) -> Vector2<f64> {
        let b = bernstein_all(t);
        self.points[0] * b[0] + self.points[1] * b[1] + self.points[2] * b[2] + self.points[3] * b[3]
    }

    #[inline]
    pub fn derivative_at(&self, t: f64) -> Vector2<f64> {
        let s = 1.0 - t;
        let [p0, p1, p2, p3] = self.points;
        (p1 - p0) * (3.0 * s * s) + (p2 - p1) * (6.0 * s * t) + (p3 - p2) * (3.0 * t * t)
    }

    #[inline]
    pub fn second_derivative_at(&self, t: f64) -> Vector2<f64> {
        let [p0, p1, p2, p3] = self.points;
        (p2 - p1 * 2.0 + p0) * (6.0 * (1.0 - t)) + (p3 - p2 * 2.0 + p1) * (6.0 * t)
    }

    /// de Casteljau split at `t`.
    pub fn split(&self, t: f64) -> (CubicBezier2D, CubicBezier2D) {
        let [p0, p1, p2, p3] = self.points;
        let p01 = p0.lerp(&p1, t);
        let p12 = p1.lerp(&p2, t);
        let p23 = p2.lerp(&p3, t);
        let p012 = p01.lerp(&p12, t);
        let p123 = p12.lerp(&p23, t);
        let mid = p012.lerp(&p123, t);
        (
            CubicBezier2D::new(p0, p01, p012, mid),
            CubicBezier2D::new(mid, p123, p23, p3),
        )
    }

    /// Axis-aligned bounds of the control polygon (contains the curve).
    pub fn control_bounds(&self) -> (Vector2<f64>, Vector2<f64>) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    pub fn translated(&self, by: Vector2<f64>) -> Self {
        Self {
            points: self.points.map(|p| p + by),
        }
    }
}

/// Cubic rational Bézier curve: the exact perspective image of a 3D cubic
/// whose weights are the control-point depths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RationalBezier2D {
    pub points: [Vector2<f64>; 4],
    pub weights: [f64; 4],
}

impl RationalBezier2D {
    pub fn new(points: [Vector2<f64>; 4], weights: [f64; 4]) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Domain(format!(
                "rational weights must be positive, got {weights:?}"
            )));
        }
        Ok(Self { points, weights })
    }

    pub fn eval(&self, t: f64) -> Result<Vector2<f64>> {
        check_unit(t)?;
        let b = bernstein_all(t);
        let mut num = Vector2::zeros();
        let mut den = 0.0;
        for j in 0..4 {
            let bw = b[j] * self.weights[j];
            num += self.points[j] * bw;
            den += bw;
        }
        if den == 0.0 {
            return Err(Error::Domain("rational Bézier denominator vanished".into()));
        }
        Ok(num / den)
    }
}
