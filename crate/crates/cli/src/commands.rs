//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use sketch3d_core::io::{export_svg, load_dataset, load_strokes, save_png, save_strokes, Dataset, Precision};
use sketch3d_core::loss::{
    distance_transform_loss, pixel_l2, GeometricBackend, LossConfig, PerceptualBackend, Structural,
};
use sketch3d_core::optimize::{init_strokes, optimize, AdamConfig, OptimizeConfig, Schedule, StrokeSet};
use sketch3d_core::pipeline::{render_sketch, RenderSettings};
use sketch3d_core::sidecar::{SidecarBackend, DEFAULT_ADDR};
use sketch3d_core::synth::{ground_truth, write_dataset, Turntable};
use sketch3d_core::{Aabb, Camera, Error, Result};

use crate::args::{InitArg, LossArg, Tuning, ViewSpec};

const DEFAULT_N_IND: usize = 32;
const DEFAULT_N_DEP: usize = 4;
/// Image width for renders that have no dataset to match.
const DEFAULT_RES: usize = 512;

fn load_at_res(dir: &Path, res: Option<usize>) -> Result<Dataset> {
    let ds = load_dataset(dir)?;
    match res {
        Some(w) => ds.resized(w),
        None => Ok(ds),
    }
}

/// Saves at half precision, or at single precision when a value does not
/// fit in half.
fn save(strokes: &StrokeSet, path: &Path) -> Result<()> {
    match save_strokes(strokes, path, Precision::Half) {
        Err(Error::Domain(msg)) => {
            log::warn!("{msg}; writing {} at single precision", path.display());
            save_strokes(strokes, path, Precision::Single)
        }
        other => other,
    }
}

fn render_settings(bbox: &Aabb, res: usize, t: &Tuning) -> Result<RenderSettings> {
    let mut s = RenderSettings::for_scene(bbox, res);
    if let Some(b) = t.beta {
        s.contour.beta = b;
    }
    if let Some(n) = t.n_samples {
        s.contour.n_samples = n;
    }
    if let Some(w) = t.width_px {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Config(format!("stroke width must be positive, got {w}")));
        }
        s.raster.width = w;
    }
    s.contour.validate()?;
    Ok(s)
}

/// Box around all control points and superquadric extents.
fn strokes_bbox(s: &StrokeSet) -> Result<Aabb> {
    let mut pts: Vec<Vector3<f64>> = s.curves.iter().flat_map(|c| c.points).collect();
    for q in &s.quadrics {
        let r = q.alpha.max();
        pts.push(q.translation + Vector3::repeat(r));
        pts.push(q.translation - Vector3::repeat(r));
    }
    Aabb::from_points(&pts).ok_or_else(|| Error::Domain("stroke set has no extent".into()))
}

pub fn init(data: &Path, out: &Path, t: &Tuning) -> Result<()> {
    let ds = load_dataset(data)?;
    let method = t.init.unwrap_or(InitArg::Fps);
    let strokes = init_strokes(
        &ds.init_data(),
        t.n_ind.unwrap_or(DEFAULT_N_IND),
        t.n_dep.unwrap_or(DEFAULT_N_DEP),
        method.into(),
        t.seed.unwrap_or(0),
    )?;
    save(&strokes, out)?;
    log::info!(
        "wrote {} curves and {} superquadrics to {}",
        strokes.curves.len(),
        strokes.quadrics.len(),
        out.display()
    );
    Ok(())
}

fn checkpoint_path(out: &Path, step: usize) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "strokes".into());
    out.with_file_name(format!("{stem}.step{step:06}.3ddl"))
}

pub fn optimize_cmd(data: &Path, init_file: &Path, out: &Path, log_path: Option<&Path>, t: &Tuning) -> Result<()> {
    let ds = load_at_res(data, t.res)?;
    let start = load_strokes(init_file)?;
    let views = ds.targets()?;
    let cfg = OptimizeConfig {
        schedule: Schedule {
            steps: t.steps.unwrap_or(2000),
            stage_split: t.stage_split.unwrap_or(0.4),
            batch_size: t.batch_size.unwrap_or(4),
            seed: t.seed.unwrap_or(0),
            checkpoint_every: t.checkpoint_every.unwrap_or(0),
        },
        loss: LossConfig {
            lambda: t.lambda.unwrap_or(1.0),
            apply_robust: !t.no_robust.unwrap_or(false),
            ..LossConfig::default()
        },
        robust_auto_off: true,
        render: render_settings(&ds.bbox, ds.resolution().0, t)?,
        adam: AdamConfig {
            lr: t.lr.unwrap_or(AdamConfig::default().lr),
            ..AdamConfig::default()
        },
        bounds: Default::default(),
    };
    let backend: Box<dyn PerceptualBackend> = match t.loss.unwrap_or(LossArg::L2) {
        LossArg::L2 => Box::new(GeometricBackend::new(Structural::PixelL2)),
        LossArg::Dt => Box::new(GeometricBackend::new(Structural::DistanceTransform)),
        LossArg::Sidecar => Box::new(SidecarBackend::connect(
            t.sidecar_addr.as_deref().unwrap_or(DEFAULT_ADDR),
        )?),
    };
    log::info!("optimizing {} views with the {} backend", views.len(), backend.name());

    let mut sink = |step: usize, s: &StrokeSet| save(s, &checkpoint_path(out, step));
    let result = optimize(&views, start, &cfg, backend.as_ref(), &mut sink)?;
    save(&result.strokes, out)?;

    let mut csv = String::from("step,stage,loss\n");
    for r in &result.history {
        let _ = writeln!(csv, "{},{},{}", r.step, r.stage.name(), r.loss);
    }
    let log_path = log_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("csv"));
    std::fs::write(&log_path, csv).map_err(|e| Error::io(&log_path, e))?;
    if let Some(last) = result.history.last() {
        log::info!("final loss {:.6} after {} steps", last.loss, result.history.len());
    }
    Ok(())
}

/// Resolves a single camera and the scene box from a view spec.
fn single_camera(view: &ViewSpec, strokes: &StrokeSet, t: &Tuning) -> Result<(Camera, Aabb)> {
    let ds = view.data.as_deref().map(|d| load_at_res(d, t.res)).transpose()?;
    let bbox = match &ds {
        Some(ds) => ds.bbox,
        None => strokes_bbox(strokes)?,
    };
    if let (Some(eye), Some(target)) = (view.eye, view.look_at) {
        let res = t.res.or(ds.as_ref().map(|d| d.resolution().0)).unwrap_or(DEFAULT_RES);
        if !(view.fov_deg > 0.0 && view.fov_deg < 180.0) {
            return Err(Error::Config(format!(
                "field of view must lie in (0, 180), got {}",
                view.fov_deg
            )));
        }
        let focal = 0.5 * res as f64 / (0.5 * view.fov_deg.to_radians()).tan();
        let cam = Camera::look_at(eye, target, view.up, focal, res, res)?;
        return Ok((cam, bbox));
    }
    let Some(ds) = ds else {
        return Err(Error::Config(
            "choose a camera with --data [--frame K] or --eye/--look-at".into(),
        ));
    };
    let k = view.frame.unwrap_or(0);
    let v = ds
        .views
        .get(k)
        .ok_or_else(|| Error::Config(format!("frame {k} out of range; dataset has {} views", ds.views.len())))?;
    Ok((v.camera.clone(), bbox))
}

pub fn render(strokes_path: &Path, out: &Path, view: &ViewSpec, turntable: Option<usize>, t: &Tuning) -> Result<()> {
    let strokes = load_strokes(strokes_path)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (cams, bbox, prefix) = match turntable {
        Some(0) => return Err(Error::Config("--turntable needs at least one view".into())),
        Some(n) => {
            let bbox = match &view.data {
                Some(d) => load_dataset(d)?.bbox,
                None => strokes_bbox(&strokes)?,
            };
            let rig = Turntable::around(&bbox, t.res.unwrap_or(DEFAULT_RES));
            (rig.cameras(n)?, bbox, "turntable")
        }
        None => {
            let (cam, bbox) = single_camera(view, &strokes, t)?;
            (vec![cam], bbox, "view")
        }
    };
    for (k, cam) in cams.iter().enumerate() {
        let settings = render_settings(&bbox, cam.width, t)?;
        let img = render_sketch(cam, &strokes, &settings)?;
        save_png(&img, &out.join(format!("{prefix}_{k:03}.png")))?;
    }
    log::info!("wrote {} image(s) to {}", cams.len(), out.display());
    Ok(())
}

pub fn export(strokes_path: &Path, out: &Path, view: &ViewSpec, t: &Tuning) -> Result<()> {
    let strokes = load_strokes(strokes_path)?;
    let (cam, bbox) = single_camera(view, &strokes, t)?;
    let settings = render_settings(&bbox, cam.width, t)?;
    let width = settings.raster.width;
    let report = export_svg(&strokes, &cam, &settings, out, width)?;
    if !report.skipped_curves.is_empty() {
        log::warn!(
            "{} curve(s) behind the camera were not exported",
            report.skipped_curves.len()
        );
    }
    log::info!(
        "wrote {} paths and {} polylines to {}",
        report.paths,
        report.polylines,
        out.display()
    );
    Ok(())
}

pub fn eval(strokes_path: &Path, data: &Path, t: &Tuning) -> Result<String> {
    let strokes = load_strokes(strokes_path)?;
    let ds = load_at_res(data, t.res)?;
    let settings = render_settings(&ds.bbox, ds.resolution().0, t)?;
    let mut out = String::from("view,pixel_l2,distance_transform\n");
    let (mut sum_l2, mut sum_dt) = (0.0, 0.0);
    for (k, v) in ds.views.iter().enumerate() {
        let img = render_sketch(&v.camera, &strokes, &settings)?;
        let (l2, _) = pixel_l2(&v.gray, &img)?;
        let (dt, _) = distance_transform_loss(&v.gray, &img)?;
        sum_l2 += l2;
        sum_dt += dt;
        let _ = writeln!(out, "{k},{l2},{dt}");
    }
    let n = ds.views.len() as f64;
    let _ = writeln!(out, "mean,{},{}", sum_l2 / n, sum_dt / n);
    Ok(out)
}

pub fn synth(out: &Path, views: usize, t: &Tuning) -> Result<()> {
    if views == 0 {
        return Err(Error::Config("--views must be positive".into()));
    }
    let bbox = Aabb::unit();
    let res = t.res.unwrap_or(256);
    let truth = ground_truth(t.n_ind.unwrap_or(8), t.seed.unwrap_or(0));
    let rig = Turntable::around(&bbox, res);
    write_dataset(out, &truth, &rig, views, &render_settings(&bbox, res, t)?, &bbox)?;
    save_strokes(&truth, &out.join("truth.3ddl"), Precision::Single)?;
    log::info!("wrote {views} views of a synthetic scene to {}", out.display());
    Ok(())
}
