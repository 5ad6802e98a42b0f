//! Sketch losses: a robust-wrapped structural term plus a semantic cosine
//! term per view, evaluated through a pluggable [`PerceptualBackend`].

use std::sync::OnceLock;

use crate::canvas::ImageBuffer;
use crate::error::{Error, Result};
use crate::par;

/// General robust loss `ρ(x, α, c)`.
pub fn robust_loss(x: f64, alpha: f64, c: f64) -> f64 {
    let z = (x / c) * (x / c);
    if alpha == 2.0 {
        0.5 * z
    } else if alpha == 0.0 {
        (0.5 * z).ln_1p()
    } else {
        let k = (alpha - 2.0).abs();
        k / alpha * ((z / k + 1.0).powf(alpha / 2.0) - 1.0)
    }
}

/// `dρ/dx`.
pub fn robust_loss_derivative(x: f64, alpha: f64, c: f64) -> f64 {
    let z = (x / c) * (x / c);
    let dz = 2.0 * x / (c * c);
    if alpha == 2.0 {
        0.5 * dz
    } else if alpha == 0.0 {
        0.5 * dz / (0.5 * z + 1.0)
    } else {
        let k = (alpha - 2.0).abs();
        0.5 * dz * (z / k + 1.0).powf(alpha / 2.0 - 1.0)
    }
}

/// `a·b`, `|a|²`, `|b|²`.
fn dot_norms(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::Domain("cosine distance of a zero vector".into()));
    }
    Ok((ab, aa, bb))
}

/// `sqrt(aa·bb)` is exact for `a = b`, so identical inputs give exactly 0.
fn cosine(ab: f64, aa: f64, bb: f64) -> f64 {
    ab / (aa * bb).sqrt()
}

/// `1 - a·b / (|a| |b|)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ab, aa, bb) = dot_norms(a, b)?;
    Ok((1.0 - cosine(ab, aa, bb)).clamp(0.0, 2.0))
}

/// Cosine distance and its gradient with respect to `b`. The gradient is
/// `-(a |b|² - (a·b) b) / (|a| |b|³)`, which vanishes exactly when `a = b`.
pub fn cosine_distance_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (ab, aa, bb) = dot_norms(a, b)?;
    let scale = 1.0 / ((aa * bb).sqrt() * bb);
    let grad = a.iter().zip(b).map(|(x, y)| -(x * bb - ab * y) * scale).collect();
    Ok((1.0 - cosine(ab, aa, bb), grad))
}

/// Mean squared difference and its gradient with respect to `render`.
pub fn pixel_l2(target: &ImageBuffer, render: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    target.check_dims(render)?;
    let n = target.len() as f64;
    let mut loss = 0.0;
    let grad = target
        .data
        .iter()
        .zip(&render.data)
        .map(|(t, r)| {
            let d = r - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((
        loss / n,
        ImageBuffer {
            width: target.width,
            height: target.height,
            data: grad,
        },
    ))
}

/// Pixels darker than this count as edges of a target edge map.
pub const EDGE_THRESHOLD: f64 = 0.5;

const FAR: f64 = 1e20;

/// Squared 1D distance transform of a sampled function (lower envelope of
/// parabolas).
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let sect = |f: &[f64], q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = sect(f, q, v[k]);
        // z[0] is -inf, so this stops at k = 0
        while s <= z[k] {
            k -= 1;
            s = sect(f, q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance (in pixels) from every pixel to the nearest
/// `true` entry of `mask`. Pixels are `FAR`-distant when the mask is empty.
pub fn euclidean_distance_transform(mask: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { FAR }).collect();
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        dt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        dt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    grid.iter_mut().for_each(|d| *d = d.sqrt());
    grid
}

/// Distance transform of the edge set `{pixel < EDGE_THRESHOLD}`.
pub fn edge_distance_transform(edges: &ImageBuffer) -> Result<Vec<f64>> {
    let mask: Vec<bool> = edges.data.iter().map(|&v| v < EDGE_THRESHOLD).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::Domain("target edge map has no edge pixels".into()));
    }
    Ok(euclidean_distance_transform(&mask, edges.width, edges.height))
}

fn dt_loss_with(dt: &[f64], render: &ImageBuffer) -> (f64, ImageBuffer) {
    let mass: f64 = render.data.iter().map(|r| 1.0 - r).sum();
    let mut grad = ImageBuffer::zeros(render.width, render.height);
    if mass <= 0.0 {
        return (0.0, grad);
    }
    let weighted: f64 = render.data.iter().zip(dt).map(|(r, d)| (1.0 - r) * d).sum();
    let loss = weighted / mass;
    for (g, d) in grad.data.iter_mut().zip(dt) {
        *g = -(d - loss) / mass;
    }
    (loss, grad)
}

/// Ink-weighted mean distance from rendered ink to the target edges.
pub fn distance_transform_loss(target_edges: &ImageBuffer, render: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    target_edges.check_dims(render)?;
    let dt = edge_distance_transform(target_edges)?;
    Ok(dt_loss_with(&dt, render))
}

/// A target view for the loss: grayscale sketch or photo, optional RGB
/// planes for perceptual backends, and a lazily computed edge distance
/// transform.
#[derive(Clone, Debug)]
pub struct LossTarget {
    pub gray: ImageBuffer,
    /// Interleaved RGB in `[0, 1]`, `3·w·h` values.
    pub rgb: Option<Vec<f32>>,
    dt: OnceLock<std::result::Result<Vec<f64>, String>>,
}

impl LossTarget {
    pub fn new(gray: ImageBuffer) -> Self {
        Self {
            gray,
            rgb: None,
            dt: OnceLock::new(),
        }
    }

    pub fn with_rgb(gray: ImageBuffer, rgb: Vec<f32>) -> Result<Self> {
        if rgb.len() != 3 * gray.len() {
            return Err(Error::Domain(format!(
                "rgb buffer has {} values, expected {}",
                rgb.len(),
                3 * gray.len()
            )));
        }
        Ok(Self {
            rgb: Some(rgb),
            ..Self::new(gray)
        })
    }

    pub fn edge_distance(&self) -> Result<&[f64]> {
        self.dt
            .get_or_init(|| edge_distance_transform(&self.gray).map_err(|e| e.to_string()))
            .as_deref()
            .map_err(|e| Error::Domain(e.clone()))
    }

    /// RGB planes, replicating gray when no color is stored.
    pub fn rgb_or_gray(&self) -> Vec<f32> {
        match &self.rgb {
            Some(rgb) => rgb.clone(),
            None => gray_to_rgb(&self.gray),
        }
    }
}

pub fn gray_to_rgb(img: &ImageBuffer) -> Vec<f32> {
    img.data.iter().flat_map(|&v| [v as f32; 3]).collect()
}

/// Perceptual loss provider. Gradients are with respect to the render.
pub trait PerceptualBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Number of requests the backend can serve concurrently.
    fn max_concurrency(&self) -> usize {
        usize::MAX
    }

    fn structural(&self, target: &LossTarget, render: &ImageBuffer) -> Result<(f64, ImageBuffer)>;

    fn semantic(&self, target: &LossTarget, render: &ImageBuffer) -> Result<(f64, ImageBuffer)>;
}

/// Structural term of the built-in backend.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Structural {
    PixelL2,
    DistanceTransform,
    /// `pixel_l2 + dt_weight · distance_transform_loss`.
    Combined {
        dt_weight: f64,
    },
}

/// In-process backend: geometric structural loss and cosine distance
/// between flattened images as the semantic term.
#[derive(Clone, Debug)]
pub struct GeometricBackend {
    pub structural: Structural,
    /// Scale of the semantic term; 0 disables it.
    pub semantic_weight: f64,
}

impl GeometricBackend {
    pub fn new(structural: Structural) -> Self {
        Self {
            structural,
            semantic_weight: 1.0,
        }
    }
}

impl PerceptualBackend for GeometricBackend {
    fn name(&self) -> &str {
        match self.structural {
            Structural::PixelL2 => "pixel-l2",
            Structural::DistanceTransform => "distance-transform",
            Structural::Combined { .. } => "pixel-l2+distance-transform",
        }
    }

    fn structural(&self, target: &LossTarget, render: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
        target.gray.check_dims(render)?;
        match self.structural {
            Structural::PixelL2 => pixel_l2(&target.gray, render),
            Structural::DistanceTransform => Ok(dt_loss_with(target.edge_distance()?, render)),
            Structural::Combined { dt_weight } => {
                let (l2, mut g) = pixel_l2(&target.gray, render)?;
                let (dt, gd) = dt_loss_with(target.edge_distance()?, render);
                for (a, b) in g.data.iter_mut().zip(&gd.data) {
                    *a += dt_weight * b;
                }
                Ok((l2 + dt_weight * dt, g))
            }
        }
    }

    fn semantic(&self, target: &LossTarget, render: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
        target.gray.check_dims(render)?;
        if self.semantic_weight == 0.0 {
            return Ok((0.0, ImageBuffer::zeros(render.width, render.height)));
        }
        let (d, g) = cosine_distance_grad(&target.gray.data, &render.data)?;
        let w = self.semantic_weight;
        Ok((
            w * d,
            ImageBuffer {
                width: render.width,
                height: render.height,
                data: g.into_iter().map(|v| w * v).collect(),
            },
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight on the structural term.
    pub lambda: f64,
    pub robust_alpha: f64,
    pub robust_c: f64,
    pub apply_robust: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            robust_alpha: 1.0,
            robust_c: 0.1,
            apply_robust: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.robust_c > 0.0) {
            return Err(Error::Config(format!("robust c must be > 0, got {}", self.robust_c)));
        }
        if !self.robust_alpha.is_finite() {
            return Err(Error::Config("robust alpha must be finite".into()));
        }
        Ok(())
    }
}

fn view_loss(
    target: &LossTarget,
    render: &ImageBuffer,
    cfg: &LossConfig,
    backend: &dyn PerceptualBackend,
) -> Result<(f64, ImageBuffer)> {
    let (s, mut gs) = backend.structural(target, render)?;
    let (m, gm) = backend.semantic(target, render)?;
    for g in [&gs, &gm] {
        if !g.same_dims(render) {
            return Err(Error::Domain(format!(
                "backend {} returned a {}x{} gradient for a {}x{} render",
                backend.name(),
                g.width,
                g.height,
                render.width,
                render.height
            )));
        }
    }
    let (value, scale) = if cfg.apply_robust {
        (
            cfg.lambda * robust_loss(s, cfg.robust_alpha, cfg.robust_c),
            cfg.lambda * robust_loss_derivative(s, cfg.robust_alpha, cfg.robust_c),
        )
    } else {
        (cfg.lambda * s, cfg.lambda)
    };
    for (a, b) in gs.data.iter_mut().zip(&gm.data) {
        *a = scale * *a + b;
    }
    Ok((value + m, gs))
}

/// Summed loss over a batch of `(target, render)` views and the gradient
/// image of each view.
pub fn total_loss(
    views: &[(&LossTarget, &ImageBuffer)],
    cfg: &LossConfig,
    backend: &dyn PerceptualBackend,
) -> Result<(f64, Vec<ImageBuffer>)> {
    cfg.validate()?;
    let eval = |i: usize| {
        let (t, r) = views[i];
        view_loss(t, r, cfg, backend).map_err(|e| Error::Backend {
            view: i,
            msg: e.to_string(),
        })
    };
    let results: Vec<Result<(f64, ImageBuffer)>> = if backend.max_concurrency() <= 1 {
        (0..views.len()).map(eval).collect()
    } else {
        par::map_indexed(views.len(), eval)
    };
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(views.len());
    for r in results {
        let (l, g) = r?;
        total += l;
        grads.push(g);
    }
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robust_closed_forms() {
        assert_eq!(robust_loss(0.0, 1.0, 0.1), 0.0);
        assert!((robust_loss(0.1, 1.0, 0.1) - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!((robust_loss(0.3, 2.0, 0.1) - 4.5).abs() < 1e-12);
        assert!((robust_loss(0.3, 0.0, 0.1) - 5.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn robust_derivative_matches_fd() {
        for alpha in [-2.0, 0.0, 0.5, 1.0, 2.0, 3.0] {
            for x in [0.01, 0.1, 0.7, 3.0] {
                let h = 1e-6;
                let fd = (robust_loss(x + h, alpha, 0.1) - robust_loss(x - h, alpha, 0.1)) / (2.0 * h);
                let an = robust_loss_derivative(x, alpha, 0.1);
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{alpha} {x}");
            }
        }
    }

    #[test]
    fn cosine_examples() {
        assert!(cosine_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap().abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 1.0], &[-2.0, -2.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn l2_white_vs_black() {
        let (l, _) = pixel_l2(&ImageBuffer::white(3, 2), &ImageBuffer::zeros(3, 2)).unwrap();
        assert_eq!(l, 1.0);
    }

    #[test]
    fn edt_brute_force() {
        let (w, h) = (13, 9);
        let mask: Vec<bool> = (0..w * h).map(|i| i % 17 == 3 || i == 50).collect();
        let dt = euclidean_distance_transform(&mask, w, h);
        for y in 0..h {
            for x in 0..w {
                let mut best = f64::INFINITY;
                for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
                    let (ex, ey) = ((i % w) as f64, (i / w) as f64);
                    best = best.min(((x as f64 - ex).powi(2) + (y as f64 - ey).powi(2)).sqrt());
                }
                assert!((dt[y * w + x] - best).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dt_single_pixel() {
        let mut edges = ImageBuffer::white(20, 20);
        edges.set(3, 3, 0.0);
        let mut render = ImageBuffer::white(20, 20);
        render.set(3, 8, 0.0);
        let (l, _) = distance_transform_loss(&edges, &render).unwrap();
        assert!((l - 5.0).abs() < 1e-12);
        assert!(distance_transform_loss(&ImageBuffer::white(20, 20), &render).is_err());
    }
}
