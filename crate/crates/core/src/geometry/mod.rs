//! Differentiable geometry: Bézier curves, cameras and superquadrics.

mod bezier;
mod camera;
pub mod dual;
mod superquadric;

pub(crate) use bezier::bernstein_all;
pub use bezier::{bernstein, CubicBezier2D, CubicBezier3D, RationalBezier2D};
pub use camera::{Camera, Projection, NEAR_DEPTH};
pub(crate) use superquadric::{normalize3, Dual12, DualQuadric, PreparedQuadric};
pub use superquadric::{sq_implicit, sq_normal, sq_union, ShapeBounds, Superquadric, SQ_PARAMS};

/// Projects a curve's control points (see [`Camera::project_curve`]).
pub fn project_curve(cam: &Camera, curve: &CubicBezier3D) -> crate::Result<CubicBezier2D> {
    cam.project_curve(curve)
}

use nalgebra::Vector3;

/// Axis-aligned scene bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    /// Bounds with positive extent along every axis.
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> crate::Result<Self> {
        if (0..3).all(|k| max[k] > min[k]) && min.iter().chain(max.iter()).all(|v| v.is_finite()) {
            Ok(Self { min, max })
        } else {
            Err(crate::Error::Domain(format!(
                "degenerate bounding box {min:?} .. {max:?}"
            )))
        }
    }

    /// The cube `[-1, 1]^3`.
    pub fn unit() -> Self {
        Self {
            min: Vector3::repeat(-1.0),
            max: Vector3::repeat(1.0),
        }
    }

    /// Tight bounds of a point set; `None` when empty or flat.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Self::new(lo, hi).ok()
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}
