//! View-dependent strokes: occluding contours of a superquadric union,
//! rendered by ray marching a density concentrated on the surface and
//! attenuated where the normal faces the viewer.
//!
//! Per ray, stratified sample midpoints `t_k` in `[t_near, t_far]` give the
//! optical depth `τ = Σ σ_contour(x_k, d) δ`, and the pixel is the
//! transmittance `exp(-τ)` (ink on white). Since the pixel value is the
//! transmittance itself, `dP/dσ_k = -δ P`, which keeps the backward pass a
//! single sum over the samples that carried density.

use nalgebra::Vector3;

use crate::canvas::ImageBuffer;
use crate::error::{Error, Result};
use crate::geometry::dual::Real;
use crate::geometry::{
    normalize3, sq_union, Camera, Dual12, DualQuadric, PreparedQuadric, Projection, Superquadric, SQ_PARAMS,
};
use crate::par;

/// Samples with optical depth `σ δ` below this are ignored.
const SKIP_MIN_DEPTH: f64 = 1e-16;
/// Samples with optical depth below this are left out of the backward pass.
const RECORD_MIN_DEPTH: f64 = 1e-10;
/// `γ u² ≥ CUT_EXPONENT` puts `σ_surf` below `a e^-29`; such samples are skipped.
const CUT_EXPONENT: f64 = 29.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ContourConfig {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    /// Stabilizer in the surface density denominator.
    pub eps_stab: f64,
    /// Even attenuation exponent.
    pub beta: u32,
    pub n_samples: usize,
    pub t_near: f64,
    pub t_far: f64,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            gamma_min: 20.0,
            gamma_max: 120.0,
            a_min: 4.0,
            a_max: 16.0,
            b_min: 2.0,
            b_max: 6.0,
            eps_stab: 0.01,
            beta: 2,
            n_samples: 192,
            t_near: 1.0,
            t_far: 7.0,
        }
    }
}

impl ContourConfig {
    pub fn validate(&self) -> Result<()> {
        let pair = |name: &str, lo: f64, hi: f64| {
            if lo > 0.0 && lo <= hi {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} bounds must satisfy 0 < min <= max, got [{lo}, {hi}]"
                )))
            }
        };
        pair("gamma", self.gamma_min, self.gamma_max)?;
        pair("a", self.a_min, self.a_max)?;
        pair("b", self.b_min, self.b_max)?;
        if !(self.eps_stab > 0.0) {
            return Err(Error::Config("eps_stab must be positive".into()));
        }
        if self.beta < 2 || !self.beta.is_multiple_of(2) {
            return Err(Error::Config(format!("beta must be even and >= 2, got {}", self.beta)));
        }
        if self.n_samples < 16 {
            return Err(Error::Config(format!(
                "n_samples must be >= 16, got {}",
                self.n_samples
            )));
        }
        if !(self.t_near < self.t_far) {
            return Err(Error::Config("t_near must be below t_far".into()));
        }
        Ok(())
    }

    /// March bounds covering a scene sphere as seen from `cam`.
    pub fn with_scene_bounds(&self, cam: &Camera, center: &Vector3<f64>, radius: f64) -> Self {
        let depth = match cam.projection {
            Projection::Perspective => (cam.center() - center).norm(),
            Projection::Orthographic => cam.to_camera(center).z,
        };
        Self {
            t_near: (depth - radius).max(1e-3),
            t_far: (depth + radius).max(2e-3),
            ..self.clone()
        }
    }

    pub fn step(&self) -> f64 {
        (self.t_far - self.t_near) / self.n_samples as f64
    }
}

/// Solid-volume density `sigmoid(γ (1 - S))`.
pub fn sigma_vol(s: f64, gamma: f64) -> f64 {
    (gamma * (1.0 - s)).sigmoid()
}

/// Surface density `a · sigmoid(1 / (γ u² + ε) - γ u² - b)` with `u = 1 - S`.
pub fn sigma_surf(s: f64, gamma: f64, a: f64, b: f64, eps_stab: f64) -> f64 {
    sigma_surf_generic(s, gamma, a, b, eps_stab)
}

fn sigma_surf_generic<R: Real>(s: R, gamma: R, a: R, b: R, eps_stab: f64) -> R {
    let u = R::cst(1.0) - s;
    let gu2 = gamma * u * u;
    a * (R::cst(1.0) / (gu2 + R::cst(eps_stab)) - gu2 - b).sigmoid()
}

/// Width-related hyperparameters adapted to a primitive's scale and shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveParams {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
}

/// Adaptive `(γ, a, b)`; vector scale and shape are reduced by their minimum
/// component.
pub fn adaptive_params(sq: &Superquadric, cfg: &ContourConfig) -> AdaptiveParams {
    let (gamma, a, b) = adaptive_generic([sq.alpha.x, sq.alpha.y, sq.alpha.z], [sq.epsilon.x, sq.epsilon.y], cfg);
    AdaptiveParams { gamma, a, b }
}

fn min_component<R: Real, const N: usize>(v: [R; N]) -> R {
    v.into_iter().reduce(|acc, x| acc.min_of(x)).expect("non-empty")
}

/// Linear ramp from `lo` at 0.1 to `hi` at 1.0.
fn ramp_up<R: Real>(lo: f64, hi: f64, x: R) -> R {
    R::cst(lo) + (x - R::cst(0.1)).scale((hi - lo) / 0.9)
}

/// Linear ramp from `hi` at 0.1 down to `lo` at 0.3.
fn ramp_down<R: Real>(lo: f64, hi: f64, x: R) -> R {
    R::cst(hi) - (x - R::cst(0.1)).scale((hi - lo) / 0.2)
}

pub(crate) fn adaptive_generic<R: Real>(alpha: [R; 3], eps: [R; 2], cfg: &ContourConfig) -> (R, R, R) {
    let al = min_component(alpha);
    let ep = min_component(eps);

    let (gamma, b) = if ep.re() <= 1.0 {
        (
            ramp_up(cfg.gamma_min, cfg.gamma_max, al).min_of(ramp_up(cfg.gamma_min, cfg.gamma_max, ep)),
            ramp_up(cfg.b_min, cfg.b_max, al).min_of(ramp_up(cfg.b_min, cfg.b_max, ep)),
        )
    } else {
        (
            ramp_up(cfg.gamma_min, cfg.gamma_max, al).min_of(R::cst(cfg.gamma_max)),
            ramp_up(cfg.b_min, cfg.b_max, al).min_of(R::cst(cfg.b_max)),
        )
    };

    let a_min = R::cst(cfg.a_min);
    let a = match (al.re() > 0.3, ep.re() > 0.3) {
        (true, true) => ramp_down(cfg.a_min, cfg.a_max, al).max_of(ramp_down(cfg.a_min, cfg.a_max, ep)),
        (true, false) => ramp_down(cfg.a_min, cfg.a_max, al).max_of(a_min),
        (false, true) => ramp_down(cfg.a_min, cfg.a_max, ep).max_of(a_min),
        (false, false) => a_min,
    };
    // The ramp leaves [a_min, a_max] outside 0.1..=0.3; keep the intensity in range.
    let a = a.max_of(a_min).min_of(R::cst(cfg.a_max));
    (gamma, a, b)
}

/// Contour density at `x` for view direction `d` (unit).
pub fn sigma_contour(x: &Vector3<f64>, d: &Vector3<f64>, sqs: &[Superquadric], cfg: &ContourConfig) -> f64 {
    let Ok((s, i)) = sq_union(sqs, x) else {
        return 0.0;
    };
    let p = adaptive_params(&sqs[i], cfg);
    let g = sqs[i].gradient(x);
    let m = g.norm();
    if !(m > 1e-12) {
        log::debug!("degenerate normal at {x:?}; contour density set to 0");
        return 0.0;
    }
    let nd = g.dot(d) / m;
    (1.0 - nd.powi(cfg.beta as i32)) * sigma_surf(s, p.gamma, p.a, p.b, cfg.eps_stab)
}

struct RayQuadric {
    prep: PreparedQuadric,
    params: AdaptiveParams,
    level_box: Vector3<f64>,
    /// Samples with `S` outside `[lo, hi]` carry negligible density.
    lo: f64,
    hi: f64,
}

fn prepare_all(sqs: &[Superquadric], cfg: &ContourConfig) -> Vec<RayQuadric> {
    let mut quads: Vec<RayQuadric> = sqs
        .iter()
        .map(|sq| {
            let prep = sq.prepare();
            let params = adaptive_params(sq, cfg);
            let u = (CUT_EXPONENT / params.gamma.max(1e-6)).sqrt();
            RayQuadric {
                level_box: Vector3::zeros(),
                prep,
                params,
                lo: 1.0 - u,
                hi: 1.0 + u,
            }
        })
        .collect();
    // Boxes share the widest cut: a primitive whose box a sample misses
    // then has S above every primitive's cut, so it can only win where the
    // density is negligible anyway.
    let widest = quads.iter().map(|q| q.hi).fold(1.0, f64::max);
    for q in &mut quads {
        q.level_box = q.prep.level_box(widest);
    }
    quads
}

/// Ray parameter interval inside an axis-aligned box centered at the origin.
fn slab(o: &Vector3<f64>, d: &Vector3<f64>, half: &Vector3<f64>) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..3 {
        if d[k].abs() < 1e-300 {
            if o[k].abs() > half[k] {
                return None;
            }
        } else {
            let inv = 1.0 / d[k];
            let a = (-half[k] - o[k]) * inv;
            let b = (half[k] - o[k]) * inv;
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

#[derive(Clone, Copy, Debug)]
struct ActiveSample {
    k: u32,
    quad: u32,
}

/// March one ray. Returns the optical depth; samples carrying density are
/// pushed to `active` when given.
fn march(
    o: &Vector3<f64>,
    d: &Vector3<f64>,
    quads: &[RayQuadric],
    cfg: &ContourConfig,
    mut active: Option<&mut Vec<ActiveSample>>,
) -> f64 {
    let n = cfg.n_samples;
    let dt = cfg.step();

    // Per-primitive canonical ray and sample index range.
    let mut ranges: Vec<(usize, usize, Vector3<f64>, Vector3<f64>)> = Vec::with_capacity(quads.len());
    let mut kmin = usize::MAX;
    let mut kmax = 0usize;
    for q in quads {
        let oc = q.prep.to_canonical(o);
        let dc = q.prep.rot.tr_mul(d);
        let Some((t0, t1)) = slab(&oc, &dc, &q.level_box) else {
            ranges.push((1, 0, oc, dc));
            continue;
        };
        let t0 = t0.max(cfg.t_near);
        let t1 = t1.min(cfg.t_far);
        let k0 = ((t0 - cfg.t_near) / dt - 0.5).ceil().max(0.0);
        let k1 = ((t1 - cfg.t_near) / dt - 0.5).floor().min(n as f64 - 1.0);
        if !(k0 <= k1) {
            ranges.push((1, 0, oc, dc));
            continue;
        }
        let (k0, k1) = (k0 as usize, k1 as usize);
        kmin = kmin.min(k0);
        kmax = kmax.max(k1);
        ranges.push((k0, k1, oc, dc));
    }
    if kmin > kmax {
        return 0.0;
    }

    let mut tau = 0.0;
    for k in kmin..=kmax {
        let t = cfg.t_near + (k as f64 + 0.5) * dt;
        let mut best = (f64::INFINITY, usize::MAX, Vector3::zeros());
        for (i, (k0, k1, oc, dc)) in ranges.iter().enumerate() {
            if k < *k0 || k > *k1 {
                continue;
            }
            let c = oc + dc * t;
            let s = quads[i].prep.canonical_value(&c);
            if s < best.0 {
                best = (s, i, c);
            }
        }
        let (s, i, c) = best;
        if i == usize::MAX {
            continue;
        }
        let q = &quads[i];
        if !(s <= q.hi && s >= q.lo) {
            continue;
        }
        let surf = sigma_surf(s, q.params.gamma, q.params.a, q.params.b, cfg.eps_stab);
        if surf * dt < SKIP_MIN_DEPTH {
            continue;
        }
        let gc = q.prep.canonical_grad(&c);
        let m = gc.norm();
        if !(m > 1e-12) {
            continue;
        }
        // n·d is rotation invariant, so evaluate it in the canonical frame.
        let nd = gc.dot(&ranges[i].3) / m;
        let sigma = (1.0 - nd.powi(cfg.beta as i32)) * surf;
        tau += sigma * dt;
        if let Some(a) = active.as_deref_mut() {
            if sigma * dt > RECORD_MIN_DEPTH {
                a.push(ActiveSample {
                    k: k as u32,
                    quad: i as u32,
                });
            }
        }
    }
    tau
}

/// Renders the contour sketch of a superquadric union.
pub fn render_contour(cam: &Camera, sqs: &[Superquadric], cfg: &ContourConfig) -> ImageBuffer {
    let mut img = ImageBuffer::white(cam.width, cam.height);
    if sqs.is_empty() {
        return img;
    }
    let quads = prepare_all(sqs, cfg);
    let w = cam.width;
    par::for_each_chunk(&mut img.data, w, |y, row| {
        for (x, px) in row.iter_mut().enumerate() {
            let (o, d) = cam.ray(x as f64 + 0.5, y as f64 + 0.5);
            *px = (-march(&o, &d, &quads, cfg, None)).exp();
        }
    });
    img
}

/// Forward render plus the per-pixel samples needed by the backward pass.
pub struct ContourTape {
    rows: Vec<RowTape>,
}

struct RowTape {
    /// `(x, start, end)` into `samples`.
    pixels: Vec<(u32, u32, u32)>,
    samples: Vec<ActiveSample>,
    values: Vec<f64>,
}

pub fn render_contour_taped(cam: &Camera, sqs: &[Superquadric], cfg: &ContourConfig) -> (ImageBuffer, ContourTape) {
    let quads = prepare_all(sqs, cfg);
    let w = cam.width;
    let rows = par::map_indexed(cam.height, |y| {
        let mut tape = RowTape {
            pixels: Vec::new(),
            samples: Vec::new(),
            values: vec![1.0; w],
        };
        if quads.is_empty() {
            return tape;
        }
        for x in 0..w {
            let (o, d) = cam.ray(x as f64 + 0.5, y as f64 + 0.5);
            let start = tape.samples.len();
            let tau = march(&o, &d, &quads, cfg, Some(&mut tape.samples));
            tape.values[x] = (-tau).exp();
            if tape.samples.len() > start {
                tape.pixels.push((x as u32, start as u32, tape.samples.len() as u32));
            }
        }
        tape
    });
    let mut img = ImageBuffer::white(w, cam.height);
    for (y, r) in rows.iter().enumerate() {
        img.data[y * w..(y + 1) * w].copy_from_slice(&r.values);
    }
    (img, ContourTape { rows })
}

/// Per-primitive dual state reused by every sample of the backward pass.
struct DualContour {
    quad: DualQuadric,
    gamma: Dual12,
    a: Dual12,
    b: Dual12,
}

impl DualContour {
    fn new(sq: &Superquadric, cfg: &ContourConfig) -> Self {
        let quad = DualQuadric::new(sq);
        let p = &quad.params;
        let (gamma, a, b) = adaptive_generic([p[0], p[1], p[2]], [p[3], p[4]], cfg);
        Self { quad, gamma, a, b }
    }

    /// Contour density at `x` along `d`, carrying parameter derivatives.
    fn sigma(&self, x: &Vector3<f64>, d: &Vector3<f64>, cfg: &ContourConfig) -> Option<Dual12> {
        let (s, g) = self.quad.value_grad(x);
        let n = normalize3(g).ok()?;
        let nd = n[0].scale(d.x) + n[1].scale(d.y) + n[2].scale(d.z);
        let att = Dual12::cst(1.0) - nd.powi(cfg.beta as i32);
        Some(att * sigma_surf_generic(s, self.gamma, self.a, self.b, cfg.eps_stab))
    }
}

/// Parameter gradients from a taped forward pass.
pub fn contour_backward_from_tape(
    cam: &Camera,
    sqs: &[Superquadric],
    cfg: &ContourConfig,
    tape: &ContourTape,
    grad_out: &ImageBuffer,
) -> Vec<[f64; SQ_PARAMS]> {
    let n = sqs.len();
    let w = cam.width;
    let dt = cfg.step();
    let duals: Vec<DualContour> = sqs.iter().map(|sq| DualContour::new(sq, cfg)).collect();
    let parts = par::map_indexed(tape.rows.len(), |y| {
        let mut acc = vec![0.0; SQ_PARAMS * n];
        let row = &tape.rows[y];
        for &(x, start, end) in &row.pixels {
            let g = grad_out.data[y * w + x as usize];
            if g == 0.0 {
                continue;
            }
            let coeff = -g * row.values[x as usize] * dt;
            let (o, d) = cam.ray(x as f64 + 0.5, y as f64 + 0.5);
            for s in &row.samples[start as usize..end as usize] {
                let t = cfg.t_near + (s.k as f64 + 0.5) * dt;
                let xw = o + d * t;
                let qi = s.quad as usize;
                if let Some(sig) = duals[qi].sigma(&xw, &d, cfg) {
                    let base = SQ_PARAMS * qi;
                    for (a, e) in acc[base..base + SQ_PARAMS].iter_mut().zip(sig.eps) {
                        *a += coeff * e;
                    }
                }
            }
        }
        acc
    });
    let total = par::sum_in_order(parts, SQ_PARAMS * n);
    (0..n)
        .map(|i| std::array::from_fn(|j| total[SQ_PARAMS * i + j]))
        .collect()
}

/// Gradient of `Σ grad_out · render_contour(...)` with respect to every
/// primitive's 12 parameters.
pub fn render_contour_backward(
    cam: &Camera,
    sqs: &[Superquadric],
    cfg: &ContourConfig,
    grad_out: &ImageBuffer,
) -> Result<Vec<[f64; SQ_PARAMS]>> {
    grad_out.check_dims(&ImageBuffer::zeros(cam.width, cam.height))?;
    let (_, tape) = render_contour_taped(cam, sqs, cfg);
    Ok(contour_backward_from_tape(cam, sqs, cfg, &tape, grad_out))
}
