use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::StrokeSet;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, CubicBezier3D, ShapeBounds, Superquadric};

/// Greedy farthest-point order under an arbitrary distance, starting from
/// `start`. Ties go to the lowest index.
fn fps_by(n: usize, k: usize, start: usize, dist: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(k);
    if k == 0 {
        return chosen;
    }
    let mut nearest = vec![f64::INFINITY; n];
    let mut cur = start;
    loop {
        chosen.push(cur);
        if chosen.len() == k {
            return chosen;
        }
        nearest[cur] = f64::NEG_INFINITY;
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..n {
            if nearest[i] == f64::NEG_INFINITY {
                continue;
            }
            nearest[i] = nearest[i].min(dist(cur, i));
            if nearest[i] > best.0 {
                best = (nearest[i], i);
            }
        }
        cur = best.1;
    }
}

fn check_count(k: usize, n: usize) -> Result<()> {
    if k > n {
        return Err(Error::Domain(format!("cannot pick {k} of {n} points")));
    }
    Ok(())
}

/// Farthest-point sampling indices from a given first index.
pub fn fps_indices(points: &[Vector3<f64>], k: usize, start: usize) -> Result<Vec<usize>> {
    check_count(k, points.len())?;
    if k > 0 && start >= points.len() {
        return Err(Error::Domain(format!("start index {start} out of range")));
    }
    Ok(fps_by(points.len(), k, start, |a, b| (points[a] - points[b]).norm()))
}

/// Farthest-point sampling with a seeded uniform first pick.
pub fn fps_sample(points: &[Vector3<f64>], k: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    check_count(k, points.len())?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..points.len());
    Ok(fps_indices(points, k, start)?.into_iter().map(|i| points[i]).collect())
}

/// Shortest distance between segments `[p0, p1]` and `[q0, q1]`.
pub fn segment_distance(a: &(Vector3<f64>, Vector3<f64>), b: &(Vector3<f64>, Vector3<f64>)) -> f64 {
    let d1 = a.1 - a.0;
    let d2 = b.1 - b.0;
    let r = a.0 - b.0;
    let aa = d1.dot(&d1);
    let ee = d2.dot(&d2);
    let f = d2.dot(&r);
    const TINY: f64 = 1e-18;
    let (s, t) = if aa <= TINY && ee <= TINY {
        (0.0, 0.0)
    } else if aa <= TINY {
        (0.0, (f / ee).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if ee <= TINY {
            ((-c / aa).clamp(0.0, 1.0), 0.0)
        } else {
            let bb = d1.dot(&d2);
            let denom = aa * ee - bb * bb;
            let mut s = if denom > TINY {
                ((bb * f - c * ee) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t = (bb * s + f) / ee;
            if t < 0.0 {
                t = 0.0;
                s = (-c / aa).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((bb - c) / aa).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    ((a.0 + d1 * s) - (b.0 + d2 * t)).norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMethod {
    /// Control points and centers uniform in the bounding box.
    Random,
    /// Farthest-point samples of a point cloud.
    Fps,
    /// Line segments: quadrics at midpoints, curves along segments.
    Lines,
}

/// Scene data available to initialization.
#[derive(Clone, Copy, Debug)]
pub struct InitData<'a> {
    pub bbox: Aabb,
    pub points: Option<&'a [Vector3<f64>]>,
    pub segments: Option<&'a [(Vector3<f64>, Vector3<f64>)]>,
}

/// Fraction of the bbox diagonal used for the initial superquadric scale.
const QUADRIC_SCALE: f64 = 0.15;
/// Fraction of the bbox diagonal used to jitter curve seeds.
const SEED_JITTER: f64 = 0.02;

fn initial_quadric(center: Vector3<f64>, bbox: &Aabb) -> Superquadric {
    let b = ShapeBounds::default();
    let a = (QUADRIC_SCALE * bbox.diagonal()).clamp(b.alpha_min, b.alpha_max);
    Superquadric::new(Vector3::repeat(a), Vector2::new(1.0, 1.0), [1.0, 0.0, 0.0, 0.0], center)
}

fn uniform_in(bbox: &Aabb, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|k, _| rng.random_range(bbox.min[k]..=bbox.max[k]))
}

/// Initial stroke set for `n_ind` curves and `n_dep` superquadrics.
pub fn init_strokes(data: &InitData, n_ind: usize, n_dep: usize, method: InitMethod, seed: u64) -> Result<StrokeSet> {
    if n_ind + n_dep == 0 {
        return Err(Error::Domain("n_ind + n_dep must be at least 1".into()));
    }
    let bbox = data.bbox;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (curves, quadrics) = match method {
        InitMethod::Random => {
            let curves = (0..n_ind)
                .map(|_| {
                    let p: [Vector3<f64>; 4] = std::array::from_fn(|_| uniform_in(&bbox, &mut rng));
                    CubicBezier3D { points: p }
                })
                .collect();
            let quadrics = (0..n_dep)
                .map(|_| initial_quadric(uniform_in(&bbox, &mut rng), &bbox))
                .collect();
            (curves, quadrics)
        }
        InitMethod::Fps => {
            let points = data
                .points
                .filter(|p| !p.is_empty())
                .ok_or_else(|| Error::Config("fps initialization needs a point cloud".into()))?;
            let jitter = Normal::new(0.0, SEED_JITTER * bbox.diagonal()).expect("positive sigma");
            let seeds = fps_sample(points, n_ind, rng.random())?;
            let curves = seeds
                .iter()
                .map(|s| {
                    let mut p = [*s; 4];
                    for q in &mut p[1..] {
                        *q += Vector3::from_fn(|_, _| jitter.sample(&mut rng));
                    }
                    CubicBezier3D { points: p }
                })
                .collect();
            let centers = fps_sample(points, n_dep, rng.random())?;
            let quadrics = centers.into_iter().map(|c| initial_quadric(c, &bbox)).collect();
            (curves, quadrics)
        }
        InitMethod::Lines => {
            let segs = data
                .segments
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Config("line initialization needs line segments".into()))?;
            let pick = |k: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
                // Cycle through the farthest-point order when more
                // primitives than segments are requested.
                let order = fps_by(segs.len(), segs.len(), rng.random_range(0..segs.len()), |a, b| {
                    segment_distance(&segs[a], &segs[b])
                });
                (0..k).map(|i| order[i % order.len()]).collect()
            };
            let curve_segs = pick(n_ind, &mut rng);
            let curves = curve_segs
                .into_iter()
                .map(|i| {
                    let (a, b) = segs[i];
                    let mut ts: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
                    ts.sort_by(f64::total_cmp);
                    CubicBezier3D {
                        points: ts.map(|t| a + (b - a) * t),
                    }
                })
                .collect();
            let quad_segs = pick(n_dep, &mut rng);
            let quadrics = quad_segs
                .into_iter()
                .map(|i| initial_quadric((segs[i].0 + segs[i].1) * 0.5, &bbox))
                .collect();
            (curves, quadrics)
        }
    };
    StrokeSet::new(curves, quadrics)
}
