//! Full sketch rendering for one camera and the chain rule back to the 3D
//! stroke parameters.

use nalgebra::Vector3;

use crate::canvas::ImageBuffer;
use crate::compose::{composite, composite_backward};
use crate::contour::{contour_backward_from_tape, render_contour, render_contour_taped, ContourConfig, ContourTape};
use crate::error::Result;
use crate::geometry::{Aabb, Camera, CubicBezier2D, CubicBezier3D, Superquadric, SQ_PARAMS};
use crate::optimize::{ParamGradient, StrokeSet, CURVE_PARAMS};
use crate::raster::{rasterize_strokes, rasterize_strokes_backward, RasterConfig};

/// Everything needed to turn a stroke set into an image.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderSettings {
    pub raster: RasterConfig,
    pub contour: ContourConfig,
    /// Sphere enclosing the scene; sets the ray-march bounds per camera.
    pub scene_center: Vector3<f64>,
    pub scene_radius: f64,
}

impl RenderSettings {
    /// Settings for a scene box at resolution `res`; the march bounds cover
    /// the box's circumscribed sphere plus a 10% margin.
    pub fn for_scene(bbox: &Aabb, res: usize) -> Self {
        Self {
            raster: RasterConfig::for_resolution(res),
            contour: ContourConfig::default(),
            scene_center: bbox.center(),
            scene_radius: 0.55 * bbox.diagonal(),
        }
    }

    pub fn contour_for(&self, cam: &Camera) -> ContourConfig {
        self.contour
            .with_scene_bounds(cam, &self.scene_center, self.scene_radius)
    }
}

/// Projects curves to pixel space. Curves with a control point behind the
/// camera are dropped; their indices are returned as the second element.
pub fn project_curves(cam: &Camera, curves: &[CubicBezier3D]) -> (Vec<(usize, CubicBezier2D)>, Vec<usize>) {
    let mut visible = Vec::with_capacity(curves.len());
    let mut hidden = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        match cam.project_curve(c) {
            Ok(p) => visible.push((i, p)),
            Err(_) => hidden.push(i),
        }
    }
    (visible, hidden)
}

/// View-independent branch.
pub fn render_curves(cam: &Camera, curves: &[CubicBezier3D], raster: &RasterConfig) -> ImageBuffer {
    let (visible, hidden) = project_curves(cam, curves);
    if !hidden.is_empty() {
        log::debug!("{} curve(s) behind the camera were skipped", hidden.len());
    }
    let strokes: Vec<CubicBezier2D> = visible.into_iter().map(|(_, c)| c).collect();
    rasterize_strokes(&strokes, cam.width, cam.height, raster)
}

/// View-dependent branch.
pub fn render_quadrics(cam: &Camera, quadrics: &[Superquadric], settings: &RenderSettings) -> ImageBuffer {
    if quadrics.is_empty() {
        return ImageBuffer::white(cam.width, cam.height);
    }
    render_contour(cam, quadrics, &settings.contour_for(cam))
}

pub fn render_sketch(cam: &Camera, strokes: &StrokeSet, settings: &RenderSettings) -> Result<ImageBuffer> {
    let ind = render_curves(cam, &strokes.curves, &settings.raster);
    let dep = render_quadrics(cam, &strokes.quadrics, settings);
    composite(&ind, &dep)
}

/// Gradient with respect to the 3D control points of
/// `Σ grad · render_curves(...)`.
pub fn curves_backward(
    cam: &Camera,
    curves: &[CubicBezier3D],
    raster: &RasterConfig,
    grad: &ImageBuffer,
) -> Result<Vec<[f64; CURVE_PARAMS]>> {
    let (visible, _) = project_curves(cam, curves);
    let strokes: Vec<CubicBezier2D> = visible.iter().map(|(_, c)| *c).collect();
    let g2 = rasterize_strokes_backward(&strokes, raster, grad);
    let mut out = vec![[0.0; CURVE_PARAMS]; curves.len()];
    for ((i, _), g) in visible.iter().zip(&g2) {
        for j in 0..4 {
            let jac = cam.projection_jacobian(&curves[*i].points[j])?;
            let g3 = jac.transpose() * g[j];
            out[*i][3 * j..3 * j + 3].copy_from_slice(g3.as_slice());
        }
    }
    Ok(out)
}

/// Taped render of the view-dependent branch for a later backward pass.
pub struct QuadricRender {
    pub image: ImageBuffer,
    tape: Option<(ContourTape, ContourConfig)>,
}

pub fn render_quadrics_taped(cam: &Camera, quadrics: &[Superquadric], settings: &RenderSettings) -> QuadricRender {
    if quadrics.is_empty() {
        return QuadricRender {
            image: ImageBuffer::white(cam.width, cam.height),
            tape: None,
        };
    }
    let cfg = settings.contour_for(cam);
    let (image, tape) = render_contour_taped(cam, quadrics, &cfg);
    QuadricRender {
        image,
        tape: Some((tape, cfg)),
    }
}

pub fn quadrics_backward(
    cam: &Camera,
    quadrics: &[Superquadric],
    render: &QuadricRender,
    grad: &ImageBuffer,
) -> Result<Vec<[f64; SQ_PARAMS]>> {
    grad.check_dims(&render.image)?;
    Ok(match &render.tape {
        Some((tape, cfg)) => contour_backward_from_tape(cam, quadrics, cfg, tape, grad),
        None => vec![[0.0; SQ_PARAMS]; quadrics.len()],
    })
}

/// Gradient of `Σ grad · render_sketch(...)` with respect to every stroke
/// parameter.
pub fn sketch_backward(
    cam: &Camera,
    strokes: &StrokeSet,
    settings: &RenderSettings,
    grad: &ImageBuffer,
) -> Result<ParamGradient> {
    let ind = render_curves(cam, &strokes.curves, &settings.raster);
    let dep = render_quadrics_taped(cam, &strokes.quadrics, settings);
    let (g_ind, g_dep) = composite_backward(&ind, &dep.image, grad)?;
    Ok(ParamGradient {
        curves: curves_backward(cam, &strokes.curves, &settings.raster, &g_ind)?,
        quadrics: quadrics_backward(cam, &strokes.quadrics, &dep, &g_dep)?,
    })
}
