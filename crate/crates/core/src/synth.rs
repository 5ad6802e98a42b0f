//! Synthetic scenes and turntable camera rigs, used for fixtures and
//! recovery experiments.

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Camera, CubicBezier3D, ShapeBounds, Superquadric};
use crate::io::save_png;
use crate::optimize::StrokeSet;
use crate::pipeline::{render_sketch, RenderSettings};

/// Turntable ring around the z axis looking at `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct Turntable {
    pub target: Vector3<f64>,
    pub radius: f64,
    pub elevation_deg: f64,
    /// Full horizontal field of view in radians.
    pub fov_x: f64,
    pub resolution: usize,
}

impl Turntable {
    /// Ring at twice the bbox diagonal and 30° elevation, framed so the
    /// bbox's circumscribed sphere fills 80% of the image width.
    pub fn around(bbox: &Aabb, resolution: usize) -> Self {
        let radius = 2.0 * bbox.diagonal();
        let half = (0.5 * bbox.diagonal() / radius / 0.8).atan();
        Self {
            target: bbox.center(),
            radius,
            elevation_deg: 30.0,
            fov_x: 2.0 * half,
            resolution,
        }
    }

    pub fn focal(&self) -> f64 {
        0.5 * self.resolution as f64 / (0.5 * self.fov_x).tan()
    }

    /// Camera at azimuth `k·360/n` degrees.
    pub fn camera(&self, k: usize, n: usize) -> Result<Camera> {
        let az = (k as f64 * 360.0 / n as f64).to_radians();
        let el = self.elevation_deg.to_radians();
        let eye = self.target + self.radius * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
        Camera::look_at(
            eye,
            self.target,
            Vector3::new(0.0, 0.0, 1.0),
            self.focal(),
            self.resolution,
            self.resolution,
        )
    }

    pub fn cameras(&self, n: usize) -> Result<Vec<Camera>> {
        (0..n).map(|k| self.camera(k, n)).collect()
    }
}

/// A smooth random curve inside `[-extent, extent]^3`.
fn random_curve(rng: &mut ChaCha8Rng, extent: f64) -> CubicBezier3D {
    let mut p = |_: usize| Vector3::from_fn(|_, _| rng.random_range(-extent..=extent));
    let a = p(0);
    let d = p(3);
    let b = a + (d - a) / 3.0 + p(1) * 0.3;
    let c = a + (d - a) * (2.0 / 3.0) + p(2) * 0.3;
    CubicBezier3D::new(a, b, c, d)
}

/// Ground-truth scene in `[-1, 1]^3`: `n_curves` random curves and one
/// rotated superquadric.
pub fn ground_truth(n_curves: usize, seed: u64) -> StrokeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let curves = (0..n_curves).map(|_| random_curve(&mut rng, 0.8)).collect();
    let axis = Vector3::new(0.3, -0.5, 0.8).normalize();
    let half = 0.35f64;
    let q = [
        half.cos(),
        axis.x * half.sin(),
        axis.y * half.sin(),
        axis.z * half.sin(),
    ];
    let sq = Superquadric::new(
        Vector3::new(0.55, 0.45, 0.35),
        Vector2::new(0.8, 1.2),
        q,
        Vector3::new(0.1, -0.05, 0.0),
    );
    StrokeSet {
        curves,
        quadrics: vec![sq],
    }
}

/// Gaussian perturbation: positions by `pos_sigma` (world units), scale and
/// shape by `rel_sigma` relative, rotation by a random axis-angle with
/// `rel_sigma` radians standard deviation. The result is projected back
/// into bounds.
pub fn perturb(strokes: &StrokeSet, pos_sigma: f64, rel_sigma: f64, seed: u64) -> StrokeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = Normal::new(0.0, pos_sigma).expect("sigma >= 0");
    let rel = Normal::new(0.0, rel_sigma).expect("sigma >= 0");
    let mut out = strokes.clone();
    for c in &mut out.curves {
        for p in &mut c.points {
            *p += Vector3::from_fn(|_, _| pos.sample(&mut rng));
        }
    }
    for q in &mut out.quadrics {
        q.translation += Vector3::from_fn(|_, _| pos.sample(&mut rng));
        for a in q.alpha.iter_mut() {
            *a *= 1.0 + rel.sample(&mut rng);
        }
        for e in q.epsilon.iter_mut() {
            *e *= 1.0 + rel.sample(&mut rng);
        }
        let aa = Vector3::from_fn(|_, _| rel.sample(&mut rng));
        let angle = aa.norm();
        if angle > 0.0 {
            let axis = aa / angle;
            let (s, c) = (0.5 * angle).sin_cos();
            let d = [c, axis.x * s, axis.y * s, axis.z * s];
            let r = q.rotation;
            // d * r (Hamilton product)
            q.rotation = [
                d[0] * r[0] - d[1] * r[1] - d[2] * r[2] - d[3] * r[3],
                d[0] * r[1] + d[1] * r[0] + d[2] * r[3] - d[3] * r[2],
                d[0] * r[2] - d[1] * r[3] + d[2] * r[0] + d[3] * r[1],
                d[0] * r[3] + d[1] * r[2] - d[2] * r[1] + d[3] * r[0],
            ];
        }
    }
    out.project(&ShapeBounds::default());
    out
}

/// Points sampled on every curve and on the superquadric surfaces, for a
/// stand-in SfM cloud.
pub fn sample_scene_points(strokes: &StrokeSet, per_primitive: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    for c in &strokes.curves {
        pts.extend(c.sample(per_primitive));
    }
    for q in &strokes.quadrics {
        let rot = q.rotation_matrix();
        for _ in 0..per_primitive {
            // superellipsoid parametrization (η latitude, ω longitude)
            let eta: f64 = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
            let omega: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let f = |w: f64, e: f64| w.signum() * w.abs().powf(e);
            let (e1, e2) = (q.epsilon.x, q.epsilon.y);
            let local = Vector3::new(
                q.alpha.x * f(eta.cos(), e1) * f(omega.cos(), e2),
                q.alpha.y * f(eta.cos(), e1) * f(omega.sin(), e2),
                q.alpha.z * f(eta.sin(), e1),
            );
            pts.push(rot * local + q.translation);
        }
    }
    pts
}

/// Writes a NeRF-style dataset of the sketch seen by `rig` from `n_views`
/// turntable positions, with a point cloud and the bbox.
pub fn write_dataset(
    dir: &Path,
    strokes: &StrokeSet,
    rig: &Turntable,
    n_views: usize,
    settings: &RenderSettings,
    bbox: &Aabb,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cams = rig.cameras(n_views)?;
    let mut frames = Vec::with_capacity(n_views);
    for (k, cam) in cams.iter().enumerate() {
        let img = render_sketch(cam, strokes, settings)?;
        let name = format!("r_{k:03}.png");
        save_png(&img, &dir.join(&name))?;
        // camera-to-world with +y up, camera looking down -z
        let r = cam.rotation.transpose();
        let c = cam.center();
        let col = |j: usize, s: f64| [r[(0, j)] * s, r[(1, j)] * s, r[(2, j)] * s];
        let (x, y, z) = (col(0, 1.0), col(1, -1.0), col(2, -1.0));
        let m = [
            [x[0], y[0], z[0], c.x],
            [x[1], y[1], z[1], c.y],
            [x[2], y[2], z[2], c.z],
            [0.0, 0.0, 0.0, 1.0],
        ];
        frames.push(json!({ "file_path": name, "transform_matrix": m }));
    }
    let doc = json!({
        "camera_angle_x": rig.fov_x,
        "frames": frames,
        "bbox": [[bbox.min.x, bbox.min.y, bbox.min.z], [bbox.max.x, bbox.max.y, bbox.max.z]],
    });
    let path = dir.join("transforms.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc).expect("json")).map_err(|e| Error::io(&path, e))?;

    let pts = sample_scene_points(strokes, 64, 11);
    let mut ply = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        pts.len()
    );
    for p in &pts {
        ply.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    let path = dir.join("points3d.ply");
    std::fs::write(&path, ply).map_err(|e| Error::io(&path, e))
}
