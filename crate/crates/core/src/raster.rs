//! Soft rasterization of fixed-width cubic strokes on a white canvas.
//!
//! Each stroke covers a pixel by `c = 1 - smoothstep((d - w/2) / softness)`
//! where `d` is the distance from the pixel center to the curve. Strokes
//! composite by multiplying transparencies, so the result does not depend on
//! stroke order. The backward pass is exact for this forward model: the
//! distance is differentiated at the closest parameter (envelope theorem).

use nalgebra::Vector2;

use crate::canvas::ImageBuffer;
use crate::error::Result;
use crate::geometry::{bernstein_all, CubicBezier2D};
use crate::par;

/// Polyline tolerance used when flattening curves, in pixels.
pub const FLATTEN_TOLERANCE: f64 = 0.05;
/// Newton iterations when refining the closest point.
pub const REFINE_ITERATIONS: usize = 64;
const MAX_SUBDIVISION_DEPTH: u32 = 16;

/// A projected stroke; width is global and lives in [`RasterConfig`].
pub type Stroke2D = CubicBezier2D;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterConfig {
    /// Stroke width in pixels, shared by all strokes.
    pub width: f64,
    /// Width of the coverage falloff band in pixels.
    pub softness: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            width: 3.0,
            softness: 1.0,
        }
    }
}

impl RasterConfig {
    /// Default 3 px at 400 px resolution, scaled with the image size.
    pub fn for_resolution(res: usize) -> Self {
        Self {
            width: 3.0 * res as f64 / 400.0,
            ..Self::default()
        }
    }

    fn reach(&self) -> f64 {
        self.width / 2.0 + self.softness
    }

    /// Coverage and its derivative with respect to distance.
    #[inline]
    pub fn coverage(&self, d: f64) -> (f64, f64) {
        let e = d - self.width / 2.0;
        if e <= 0.0 {
            (1.0, 0.0)
        } else if e >= self.softness {
            (0.0, 0.0)
        } else {
            let u = e / self.softness;
            (1.0 - u * u * (3.0 - 2.0 * u), -6.0 * u * (1.0 - u) / self.softness)
        }
    }
}

/// Curve flattened to a polyline with the parameter of every vertex.
#[derive(Clone, Debug)]
pub(crate) struct Flattened {
    pub curve: CubicBezier2D,
    pts: Vec<Vector2<f64>>,
    ts: Vec<f64>,
    pub lo: Vector2<f64>,
    pub hi: Vector2<f64>,
}

fn is_flat(c: &CubicBezier2D, tol: f64) -> bool {
    let [p0, p1, p2, p3] = c.points;
    let chord = p3 - p0;
    let len = chord.norm();
    let dev = |p: Vector2<f64>| {
        if len < 1e-12 {
            (p - p0).norm()
        } else {
            (chord.x * (p.y - p0.y) - chord.y * (p.x - p0.x)).abs() / len
        }
    };
    dev(p1).max(dev(p2)) <= tol
}

impl Flattened {
    pub fn new(curve: &CubicBezier2D, tol: f64) -> Self {
        let mut pts = vec![curve.points[0]];
        let mut ts = vec![0.0];
        Self::subdivide(curve, 0.0, 1.0, tol, 0, &mut pts, &mut ts);
        let (lo, hi) = curve.control_bounds();
        Self {
            curve: *curve,
            pts,
            ts,
            lo,
            hi,
        }
    }

    fn subdivide(
        c: &CubicBezier2D,
        t0: f64,
        t1: f64,
        tol: f64,
        depth: u32,
        pts: &mut Vec<Vector2<f64>>,
        ts: &mut Vec<f64>,
    ) {
        if depth >= MAX_SUBDIVISION_DEPTH || is_flat(c, tol) {
            pts.push(c.points[3]);
            ts.push(t1);
            return;
        }
        let (l, r) = c.split(0.5);
        let tm = 0.5 * (t0 + t1);
        Self::subdivide(&l, t0, tm, tol, depth + 1, pts, ts);
        Self::subdivide(&r, tm, t1, tol, depth + 1, pts, ts);
    }

    /// Closest point on the polyline: squared distance, curve parameter and
    /// segment index.
    fn polyline_closest(&self, p: &Vector2<f64>) -> (f64, f64, usize) {
        let mut best = ((self.pts[0] - p).norm_squared(), 0.0, 0);
        for i in 0..self.pts.len() - 1 {
            let a = self.pts[i];
            let ab = self.pts[i + 1] - a;
            let l2 = ab.norm_squared();
            let s = if l2 > 0.0 {
                ((p - a).dot(&ab) / l2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d2 = (a + ab * s - p).norm_squared();
            if d2 < best.0 {
                best = (d2, self.ts[i] + s * (self.ts[i + 1] - self.ts[i]), i);
            }
        }
        best
    }

    /// Distance and closest parameter, or `None` when the polyline is already
    /// farther than `cutoff`.
    pub fn closest(&self, p: &Vector2<f64>, cutoff: f64) -> Option<(f64, f64)> {
        let (d2, t_est, seg) = self.polyline_closest(p);
        if d2.sqrt() > cutoff + FLATTEN_TOLERANCE {
            return None;
        }
        Some(self.refine(p, t_est, seg))
    }

    /// Local minimizer of `|B(t) - p|` near the polyline estimate. The result
    /// is either an interior stationary point or an endpoint.
    fn refine(&self, p: &Vector2<f64>, t_est: f64, seg: usize) -> (f64, f64) {
        let c = &self.curve;
        let slope = |t: f64| (c.point_at(t) - p).dot(&c.derivative_at(t));
        // widen the bracket until slope(lo) <= 0 <= slope(hi) or an end is hit
        let last = self.ts.len() - 1;
        let (mut i, mut j) = (seg, seg + 1);
        let mut g_lo = slope(self.ts[i]);
        while g_lo > 0.0 && i > 0 {
            i -= 1;
            g_lo = slope(self.ts[i]);
        }
        let mut g_hi = slope(self.ts[j]);
        while g_hi < 0.0 && j < last {
            j += 1;
            g_hi = slope(self.ts[j]);
        }
        let dist = |t: f64| ((c.point_at(t) - p).norm(), t);
        let closer = |a: (f64, f64), b: (f64, f64)| if b.0 < a.0 { b } else { a };
        let (mut lo, mut hi) = (self.ts[i], self.ts[j]);
        if g_lo > 0.0 || g_hi < 0.0 {
            // no interior sign change: the minimum sits on a curve end
            let mut best = (f64::INFINITY, 0.0);
            if g_lo >= 0.0 {
                best = closer(best, dist(lo));
            }
            if g_hi <= 0.0 {
                best = closer(best, dist(hi));
            }
            return best;
        }
        let mut t = t_est.clamp(lo, hi);
        for _ in 0..REFINE_ITERATIONS {
            let b = c.point_at(t) - p;
            let d1 = c.derivative_at(t);
            let g = b.dot(&d1);
            if g == 0.0 {
                break;
            }
            if g < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let den = d1.dot(&d1) + b.dot(&c.second_derivative_at(t));
            let newton = t - g / den;
            let nt = if den > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (nt - t).abs() < 1e-15 || hi - lo < 1e-15 {
                t = nt;
                break;
            }
            t = nt;
        }
        dist(t)
    }
}

/// Minimum distance from `pixel` to the curve and the minimizing parameter.
pub fn distance_to_cubic(curve: &CubicBezier2D, pixel: &Vector2<f64>) -> (f64, f64) {
    let flat = Flattened::new(curve, FLATTEN_TOLERANCE);
    let (_, t_est, seg) = flat.polyline_closest(pixel);
    flat.refine(pixel, t_est, seg)
}

#[derive(Clone, Copy, Debug)]
struct Hit {
    x: usize,
    stroke: usize,
    transparency: f64,
    dc_dd: f64,
    t: f64,
    /// `B(t) - pixel`
    offset: Vector2<f64>,
    dist: f64,
}

fn row_hits(flats: &[Flattened], width: usize, y: usize, cfg: &RasterConfig) -> Vec<Hit> {
    let reach = cfg.reach();
    let yc = y as f64 + 0.5;
    let mut hits = Vec::new();
    for (k, f) in flats.iter().enumerate() {
        if yc < f.lo.y - reach || yc > f.hi.y + reach {
            continue;
        }
        // pixel centers x + 0.5 inside [lo - reach, hi + reach]
        let x0 = (f.lo.x - reach - 0.5).ceil().max(0.0);
        let x1 = (f.hi.x + reach - 0.5).floor().min(width as f64 - 1.0);
        if x1 < x0 {
            continue;
        }
        for x in x0 as usize..=x1 as usize {
            let p = Vector2::new(x as f64 + 0.5, yc);
            let Some((dist, t)) = f.closest(&p, reach) else {
                continue;
            };
            let (c, dc_dd) = cfg.coverage(dist);
            if c <= 0.0 {
                continue;
            }
            hits.push(Hit {
                x,
                stroke: k,
                transparency: 1.0 - c,
                dc_dd,
                t,
                offset: f.curve.point_at(t) - p,
                dist,
            });
        }
    }
    // Sorting by (pixel, factor) makes the product independent of stroke order.
    hits.sort_by(|a, b| a.x.cmp(&b.x).then(a.transparency.total_cmp(&b.transparency)));
    hits
}

fn flatten_all(strokes: &[Stroke2D]) -> Vec<Flattened> {
    strokes.iter().map(|s| Flattened::new(s, FLATTEN_TOLERANCE)).collect()
}

/// Renders strokes as black ink on white.
pub fn rasterize_strokes(strokes: &[Stroke2D], width: usize, height: usize, cfg: &RasterConfig) -> ImageBuffer {
    let flats = flatten_all(strokes);
    let mut img = ImageBuffer::white(width, height);
    if flats.is_empty() || width == 0 {
        return img;
    }
    par::for_each_chunk(&mut img.data, width, |y, row| {
        for h in row_hits(&flats, width, y, cfg) {
            row[h.x] *= h.transparency;
        }
    });
    img
}

/// Gradient of `Σ grad_out · image` with respect to each stroke's control
/// points.
pub fn rasterize_strokes_backward(
    strokes: &[Stroke2D],
    cfg: &RasterConfig,
    grad_out: &ImageBuffer,
) -> Vec<[Vector2<f64>; 4]> {
    let flats = flatten_all(strokes);
    let n = strokes.len();
    let width = grad_out.width;
    if n == 0 || width == 0 {
        return vec![[Vector2::zeros(); 4]; n];
    }
    let rows = par::map_indexed(grad_out.height, |y| {
        let mut acc = vec![0.0; 8 * n];
        let hits = row_hits(&flats, width, y, cfg);
        let mut start = 0;
        while start < hits.len() {
            let x = hits[start].x;
            let mut end = start;
            while end < hits.len() && hits[end].x == x {
                end += 1;
            }
            let g = grad_out.data[y * width + x];
            if g != 0.0 {
                let group = &hits[start..end];
                for (i, h) in group.iter().enumerate() {
                    if h.dc_dd == 0.0 || h.dist <= 0.0 {
                        continue;
                    }
                    let others: f64 = group
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, o)| o.transparency)
                        .product();
                    // pixel = Π (1 - c), so dpixel/dc_i = -Π_{j≠i}(1 - c_j)
                    let dl_dd = -g * others * h.dc_dd;
                    let dir = h.offset / h.dist;
                    let b = bernstein_all(h.t);
                    let base = 8 * h.stroke;
                    for j in 0..4 {
                        acc[base + 2 * j] += dl_dd * b[j] * dir.x;
                        acc[base + 2 * j + 1] += dl_dd * b[j] * dir.y;
                    }
                }
            }
            start = end;
        }
        acc
    });
    let total = par::sum_in_order(rows, 8 * n);
    (0..n)
        .map(|k| std::array::from_fn(|j| Vector2::new(total[8 * k + 2 * j], total[8 * k + 2 * j + 1])))
        .collect()
}

/// Convenience wrapper that checks the gradient image dimensions.
pub fn rasterize_strokes_backward_checked(
    strokes: &[Stroke2D],
    width: usize,
    height: usize,
    cfg: &RasterConfig,
    grad_out: &ImageBuffer,
) -> Result<Vec<[Vector2<f64>; 4]>> {
    grad_out.check_dims(&ImageBuffer::zeros(width, height))?;
    Ok(rasterize_strokes_backward(strokes, cfg, grad_out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: (f64, f64), b: (f64, f64)) -> CubicBezier2D {
        let a = Vector2::new(a.0, a.1);
        let b = Vector2::new(b.0, b.1);
        CubicBezier2D::new(a, a.lerp(&b, 1.0 / 3.0), a.lerp(&b, 2.0 / 3.0), b)
    }

    #[test]
    fn distance_on_straight_segment() {
        let c = line((0.0, 0.0), (3.0, 0.0));
        let (d, t) = distance_to_cubic(&c, &Vector2::new(1.5, 2.0));
        assert!((d - 2.0).abs() < 1e-12);
        assert!((t - 0.5).abs() < 1e-12);
        let (d, t) = distance_to_cubic(&c, &Vector2::new(0.0, 0.0));
        assert_eq!((d, t), (0.0, 0.0));
    }

    #[test]
    fn empty_list_is_white() {
        let img = rasterize_strokes(&[], 8, 5, &RasterConfig::default());
        assert!(img.data.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn full_coverage_on_the_line() {
        let c = line((0.0, 10.5), (20.0, 10.5));
        let cfg = RasterConfig {
            width: 4.0,
            softness: 1.0,
        };
        let img = rasterize_strokes(&[c], 20, 20, &cfg);
        assert!(img.get(10, 10) <= 0.05);
        // distance >= w/2 + softness gives exactly white
        assert_eq!(img.get(10, 13), 1.0);
        assert_eq!(img.get(10, 7), 1.0);
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let c = line((2.0, 3.0), (15.0, 12.0));
        let g = rasterize_strokes_backward(&[c], &RasterConfig::default(), &ImageBuffer::zeros(20, 20));
        assert!(g[0].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn coverage_profile_is_continuous() {
        let cfg = RasterConfig::default();
        let w2 = cfg.width / 2.0;
        assert_eq!(cfg.coverage(w2).0, 1.0);
        assert!((cfg.coverage(w2 + 1e-9).0 - 1.0).abs() < 1e-8);
        assert!(cfg.coverage(w2 + cfg.softness - 1e-9).0 < 1e-8);
        assert_eq!(cfg.coverage(w2 + cfg.softness).0, 0.0);
    }
}
