//! Shared fixtures and finite-difference helpers for integration tests.
#![allow(dead_code)]

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketch3d_core::{Camera, CubicBezier2D, CubicBezier3D, Superquadric};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `‖a - b‖ / max(‖b‖, floor)`.
pub fn rel_err(analytic: &[f64], reference: &[f64], floor: f64) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = reference.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

/// Central differences of `f` at `x` along every coordinate.
pub fn central_fd(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn random_unit_quaternion(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

/// A superquadric away from the kinks of the adaptive width rules:
/// distinct scale components, shape exponents off 1.0 and off 0.3.
pub fn random_quadric(rng: &mut ChaCha8Rng, center_spread: f64) -> Superquadric {
    let mut alpha = [0.0; 3];
    loop {
        for a in &mut alpha {
            *a = rng.random_range(0.4..0.9);
        }
        let mut s = alpha;
        s.sort_by(f64::total_cmp);
        if s[1] - s[0] > 0.05 && s[2] - s[1] > 0.05 {
            break;
        }
    }
    let mut eps = [0.0f64; 2];
    loop {
        for e in &mut eps {
            *e = if rng.random_bool(0.5) {
                rng.random_range(0.45..0.9)
            } else {
                rng.random_range(1.1..1.6)
            };
        }
        if (eps[0] - eps[1]).abs() > 0.05 {
            break;
        }
    }
    Superquadric::new(
        Vector3::from(alpha),
        Vector2::from(eps),
        random_unit_quaternion(rng),
        Vector3::from_fn(|_, _| rng.random_range(-center_spread..center_spread)),
    )
}

pub fn random_curve2(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> CubicBezier2D {
    let mut p = || Vector2::new(rng.random_range(lo..hi), rng.random_range(lo..hi));
    CubicBezier2D::new(p(), p(), p(), p())
}

pub fn random_curve3(rng: &mut ChaCha8Rng, extent: f64) -> CubicBezier3D {
    let mut p = || Vector3::from_fn(|_, _| rng.random_range(-extent..extent));
    CubicBezier3D::new(p(), p(), p(), p())
}

/// Camera on a sphere of radius `dist` around the origin.
pub fn random_camera(rng: &mut ChaCha8Rng, dist: f64, focal: f64, res: usize) -> Camera {
    loop {
        let dir = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if dir.norm() < 0.2 || dir.norm() > 1.0 {
            continue;
        }
        let eye = dir.normalize() * dist;
        if let Ok(c) = Camera::look_at(eye, Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0), focal, res, res) {
            return c;
        }
    }
}

/// Camera on the +z axis looking at the origin.
pub fn axis_camera(dist: f64, focal: f64, res: usize) -> Camera {
    Camera::look_at(
        Vector3::new(0.0, 0.0, dist),
        Vector3::zeros(),
        Vector3::new(0.0, 1.0, 0.0),
        focal,
        res,
        res,
    )
    .unwrap()
}

/// Like [`random_quadric`] with both shape exponents below 1, where the
/// surface is twice differentiable off the canonical origin. Exponents above
/// 1 put a curvature singularity on the canonical planes.
pub fn random_smooth_quadric(rng: &mut ChaCha8Rng, center_spread: f64) -> Superquadric {
    let mut sq = random_quadric(rng, center_spread);
    loop {
        sq.epsilon = Vector2::new(rng.random_range(0.45..0.95), rng.random_range(0.45..0.95));
        if (sq.epsilon.x - sq.epsilon.y).abs() > 0.05 {
            return sq;
        }
    }
}
