use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};

use super::bezier::{CubicBezier2D, CubicBezier3D, RationalBezier2D};
use crate::error::{Error, Result};

/// Points closer than this to the camera plane are rejected.
pub const NEAR_DEPTH: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// Pinhole; `focal` is in pixels.
    Perspective,
    /// Parallel projection; `focal` is pixels per world unit.
    Orthographic,
}

/// World-to-camera pose plus intrinsics.
///
/// Camera frame: +x right, +y down, +z forward. Pixel `(i, j)` covers
/// `[i, i+1) x [j, j+1)`, so its center sits at `(i + 0.5, j + 0.5)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub focal: f64,
    pub principal_point: Vector2<f64>,
    pub width: usize,
    pub height: usize,
    pub projection: Projection,
}

impl Camera {
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        focal: f64,
        principal_point: Vector2<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self {
            rotation,
            translation,
            focal,
            principal_point,
            width,
            height,
            projection: Projection::Perspective,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = projection;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let rtr = self.rotation.transpose() * self.rotation;
        if (rtr - Matrix3::identity()).abs().max() > 1e-6 || (self.rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::Domain("camera rotation is not a proper rotation".into()));
        }
        if !(self.focal > 0.0) {
            return Err(Error::Domain(format!("focal must be positive, got {}", self.focal)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Domain("image dimensions must be at least 1".into()));
        }
        Ok(())
    }

    /// Camera looking from `eye` at `target`; `up` is the approximate world up.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Domain("look_at eye and target coincide".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Domain("look_at up is parallel to the view direction".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(
            rotation,
            translation,
            focal,
            Vector2::new(width as f64 / 2.0, height as f64 / 2.0),
            width,
            height,
        )
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Unit viewing axis in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    #[inline]
    pub fn to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    /// Projects a world point to continuous pixel coordinates and camera depth.
    pub fn project_point(&self, x: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
        let c = self.to_camera(x);
        match self.projection {
            Projection::Perspective => {
                if !(c.z > NEAR_DEPTH) {
                    return Err(Error::BehindCamera { depth: c.z });
                }
                let px = Vector2::new(
                    self.focal * c.x / c.z + self.principal_point.x,
                    self.focal * c.y / c.z + self.principal_point.y,
                );
                Ok((px, c.z))
            }
            Projection::Orthographic => Ok((
                Vector2::new(
                    self.focal * c.x + self.principal_point.x,
                    self.focal * c.y + self.principal_point.y,
                ),
                c.z,
            )),
        }
    }

    /// Jacobian of the pixel position with respect to the world point.
    pub fn projection_jacobian(&self, x: &Vector3<f64>) -> Result<Matrix2x3<f64>> {
        let c = self.to_camera(x);
        let local = match self.projection {
            Projection::Perspective => {
                if !(c.z > NEAR_DEPTH) {
                    return Err(Error::BehindCamera { depth: c.z });
                }
                let iz = 1.0 / c.z;
                let f = self.focal;
                Matrix2x3::new(f * iz, 0.0, -f * c.x * iz * iz, 0.0, f * iz, -f * c.y * iz * iz)
            }
            Projection::Orthographic => Matrix2x3::new(self.focal, 0.0, 0.0, 0.0, self.focal, 0.0),
        };
        Ok(local * self.rotation)
    }

    /// Ray through continuous pixel position `(u, v)`: origin and unit direction.
    pub fn ray(&self, u: f64, v: f64) -> (Vector3<f64>, Vector3<f64>) {
        let rt = self.rotation.transpose();
        let x = (u - self.principal_point.x) / self.focal;
        let y = (v - self.principal_point.y) / self.focal;
        match self.projection {
            Projection::Perspective => {
                let d = rt * Vector3::new(x, y, 1.0);
                (self.center(), d.normalize())
            }
            Projection::Orthographic => {
                let origin = rt * (Vector3::new(x, y, 0.0) - self.translation);
                (origin, self.forward())
            }
        }
    }

    /// Projects the four control points; the resulting 2D cubic is exact
    /// under orthographic projection and a far-camera approximation under
    /// perspective.
    pub fn project_curve(&self, curve: &CubicBezier3D) -> Result<CubicBezier2D> {
        let mut q = [Vector2::zeros(); 4];
        for (qj, p) in q.iter_mut().zip(&curve.points) {
            *qj = self.project_point(p)?.0;
        }
        Ok(CubicBezier2D { points: q })
    }

    /// Exact perspective image of the curve as a rational cubic.
    pub fn project_curve_rational(&self, curve: &CubicBezier3D) -> Result<RationalBezier2D> {
        let mut q = [Vector2::zeros(); 4];
        let mut w = [0.0; 4];
        for j in 0..4 {
            let (px, depth) = self.project_point(&curve.points[j])?;
            q[j] = px;
            w[j] = depth;
        }
        RationalBezier2D::new(q, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cam() -> Camera {
        Camera::new(
            Matrix3::identity(),
            Vector3::zeros(),
            100.0,
            Vector2::new(50.0, 50.0),
            100,
            100,
        )
        .unwrap()
    }

    #[test]
    fn projects_on_axis_and_offset() {
        let cam = identity_cam();
        let (p, d) = cam.project_point(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(p, Vector2::new(50.0, 50.0));
        assert_eq!(d, 1.0);
        let (p, _) = cam.project_point(&Vector3::new(0.5, 0.0, 1.0)).unwrap();
        assert_eq!(p, Vector2::new(100.0, 50.0));
    }

    #[test]
    fn behind_camera_reports_depth() {
        let cam = identity_cam();
        match cam.project_point(&Vector3::new(0.0, 0.0, -1.0)) {
            Err(Error::BehindCamera { depth }) => assert_eq!(depth, -1.0),
            other => panic!("expected behind-camera error, got {other:?}"),
        }
        assert!(cam.project_point(&Vector3::new(0.0, 0.0, 5e-5)).is_err());
    }

    #[test]
    fn degenerate_curve_projects_to_a_point() {
        let cam = identity_cam();
        let p = Vector3::new(0.1, -0.2, 2.0);
        let c = CubicBezier3D::new(p, p, p, p);
        let q = cam.project_curve(&c).unwrap();
        let (pp, _) = cam.project_point(&p).unwrap();
        assert!(q.points.iter().all(|qi| *qi == pp));
    }

    #[test]
    fn look_at_centers_target() {
        let cam = Camera::look_at(
            Vector3::new(3.0, 1.0, -2.0),
            Vector3::new(0.1, 0.2, 0.3),
            Vector3::new(0.0, 0.0, 1.0),
            200.0,
            64,
            48,
        )
        .unwrap();
        let (p, d) = cam.project_point(&Vector3::new(0.1, 0.2, 0.3)).unwrap();
        assert!((p - Vector2::new(32.0, 24.0)).norm() < 1e-9);
        assert!(d > 0.0);
        assert!((cam.center() - Vector3::new(3.0, 1.0, -2.0)).norm() < 1e-12);
    }

    #[test]
    fn rays_hit_their_pixels() {
        let cam = Camera::look_at(
            Vector3::new(0.0, -4.0, 1.0),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 1.0),
            80.0,
            40,
            30,
        )
        .unwrap();
        for proj in [Projection::Perspective, Projection::Orthographic] {
            let cam = cam.clone().with_projection(proj);
            let (o, d) = cam.ray(12.5, 7.5);
            assert!((d.norm() - 1.0).abs() < 1e-12);
            let (p, _) = cam.project_point(&(o + d * 3.7)).unwrap();
            assert!((p - Vector2::new(12.5, 7.5)).norm() < 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let cam = Camera::look_at(
            Vector3::new(2.0, -3.0, 1.5),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 1.0),
            150.0,
            64,
            64,
        )
        .unwrap();
        let x = Vector3::new(0.3, -0.2, 0.4);
        let j = cam.projection_jacobian(&x).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (cam.project_point(&xp).unwrap().0 - cam.project_point(&xm).unwrap().0) / (2.0 * h);
            assert!((fd - j.column(k)).norm() < 1e-6 * fd.norm().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_rotation() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0;
        assert!(Camera::new(r, Vector3::zeros(), 1.0, Vector2::zeros(), 1, 1).is_err());
    }
}
