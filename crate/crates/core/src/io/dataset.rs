use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};
use serde::Deserialize;

use super::{load_points, load_segments};
use crate::canvas::ImageBuffer;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Camera};
use crate::loss::LossTarget;
use crate::optimize::{InitData, View};

/// File names picked up next to `transforms.json`.
const POINTS_FILE: &str = "points3d.ply";
const SEGMENTS_FILE: &str = "lines.txt";

#[derive(Deserialize)]
struct Transforms {
    camera_angle_x: f64,
    frames: Vec<Frame>,
    /// Optional `[[xmin, ymin, zmin], [xmax, ymax, zmax]]`.
    #[serde(default)]
    bbox: Option<[[f64; 3]; 2]>,
}

#[derive(Deserialize)]
struct Frame {
    file_path: String,
    transform_matrix: [[f64; 4]; 4],
}

#[derive(Clone, Debug)]
pub struct DatasetView {
    pub camera: Camera,
    /// Luminance, used for diagnostics and the geometric losses.
    pub gray: ImageBuffer,
    /// Interleaved RGB, alpha composited over white.
    pub rgb: Vec<f32>,
    pub path: PathBuf,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub views: Vec<DatasetView>,
    pub points: Option<Vec<Vector3<f64>>>,
    pub segments: Option<Vec<(Vector3<f64>, Vector3<f64>)>>,
    pub bbox: Aabb,
}

impl Dataset {
    pub fn init_data(&self) -> InitData<'_> {
        InitData {
            bbox: self.bbox,
            points: self.points.as_deref(),
            segments: self.segments.as_deref(),
        }
    }

    /// Views as optimization targets.
    pub fn targets(&self) -> Result<Vec<View>> {
        self.views
            .iter()
            .map(|v| {
                Ok(View {
                    camera: v.camera.clone(),
                    target: LossTarget::with_rgb(v.gray.clone(), v.rgb.clone())?,
                })
            })
            .collect()
    }

    pub fn resolution(&self) -> (usize, usize) {
        let v = &self.views[0];
        (v.camera.width, v.camera.height)
    }

    /// Copy with every view resampled to `width` pixels across, keeping the
    /// aspect ratio. Intrinsics scale with the image.
    pub fn resized(&self, width: usize) -> Result<Dataset> {
        let (w0, h0) = self.resolution();
        if width == 0 {
            return Err(Error::Config("resolution must be positive".into()));
        }
        if width == w0 {
            return Ok(self.clone());
        }
        let scale = width as f64 / w0 as f64;
        let height = ((h0 as f64 * scale).round() as usize).max(1);
        let views = self
            .views
            .iter()
            .map(|v| {
                let src = image::Rgb32FImage::from_raw(w0 as u32, h0 as u32, v.rgb.clone())
                    .ok_or_else(|| Error::format(&v.path, "rgb buffer does not match the image size"))?;
                let rgb =
                    image::imageops::resize(&src, width as u32, height as u32, image::imageops::FilterType::Triangle)
                        .into_raw();
                let gray = ImageBuffer::from_vec(width, height, rgb.chunks_exact(3).map(luminance).collect())?;
                let c = &v.camera;
                let camera = Camera::new(
                    c.rotation,
                    c.translation,
                    c.focal * scale,
                    Vector2::new(width as f64 / 2.0, height as f64 / 2.0),
                    width,
                    height,
                )?
                .with_projection(c.projection);
                Ok(DatasetView {
                    camera,
                    gray,
                    rgb,
                    path: v.path.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            views,
            points: self.points.clone(),
            segments: self.segments.clone(),
            bbox: self.bbox,
        })
    }
}

fn luminance(c: &[f32]) -> f64 {
    0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64
}

/// Decodes an image file to luminance and RGB planes over white.
pub(crate) fn decode_image(path: &Path) -> Result<(ImageBuffer, Vec<f32>)> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    let rgba = img.to_rgba32f();
    let (w, h) = rgba.dimensions();
    let mut rgb = Vec::with_capacity(3 * (w * h) as usize);
    let mut gray = Vec::with_capacity((w * h) as usize);
    for p in rgba.pixels() {
        let a = p[3];
        let c: [f32; 3] = std::array::from_fn(|k| a * p[k] + (1.0 - a));
        rgb.extend_from_slice(&c);
        gray.push(luminance(&c));
    }
    Ok((ImageBuffer::from_vec(w as usize, h as usize, gray)?, rgb))
}

/// Focal length in pixels from the horizontal field of view.
pub fn focal_from_fov(width: usize, camera_angle_x: f64) -> f64 {
    0.5 * width as f64 / (0.5 * camera_angle_x).tan()
}

/// World-to-camera pose from a camera-to-world matrix whose camera looks
/// down its -z axis with +y up. The result uses +y down, +z forward.
pub fn pose_from_c2w(m: &[[f64; 4]; 4]) -> Option<(Matrix3<f64>, Vector3<f64>)> {
    let c2w = Matrix4::from_fn(|i, j| m[i][j]);
    if c2w.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let r_gl = c2w.fixed_view::<3, 3>(0, 0).into_owned();
    let center = c2w.fixed_view::<3, 1>(0, 3).into_owned();
    let rtr = r_gl.transpose() * r_gl;
    if (rtr - Matrix3::identity()).abs().max() > 1e-4 || (r_gl.determinant() - 1.0).abs() > 1e-4 {
        return None;
    }
    let flip = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
    // Re-orthonormalize to absorb rounding in stored matrices.
    let r_c2w = nalgebra::Rotation3::from_matrix(&(r_gl * flip)).into_inner();
    let r = r_c2w.transpose();
    Some((r, -(r * center)))
}

/// Loads a NeRF-style `transforms.json` dataset rooted at `root`.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let json_path = root.join("transforms.json");
    let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let tf: Transforms = serde_json::from_str(&text).map_err(|e| Error::format(&json_path, e.to_string()))?;
    if tf.frames.is_empty() {
        return Err(Error::format(&json_path, "no frames"));
    }
    if !(tf.camera_angle_x > 0.0 && tf.camera_angle_x < std::f64::consts::PI) {
        return Err(Error::format(&json_path, "camera_angle_x must lie in (0, pi)"));
    }

    let mut views = Vec::with_capacity(tf.frames.len());
    let mut size: Option<(usize, usize)> = None;
    for (i, f) in tf.frames.iter().enumerate() {
        let path = resolve_image(root, &f.file_path);
        let (gray, rgb) = decode_image(&path)?;
        let dims = (gray.width, gray.height);
        if let Some(s) = size {
            if s != dims {
                return Err(Error::format(
                    &path,
                    format!("resolution {}x{} differs from {}x{}", dims.0, dims.1, s.0, s.1),
                ));
            }
        }
        size = Some(dims);
        let (rotation, translation) = pose_from_c2w(&f.transform_matrix)
            .ok_or_else(|| Error::format(&json_path, format!("frame {i}: transform_matrix is not a rigid pose")))?;
        let camera = Camera::new(
            rotation,
            translation,
            focal_from_fov(dims.0, tf.camera_angle_x),
            Vector2::new(dims.0 as f64 / 2.0, dims.1 as f64 / 2.0),
            dims.0,
            dims.1,
        )?;
        views.push(DatasetView {
            camera,
            gray,
            rgb,
            path,
        });
    }

    let points_path = root.join(POINTS_FILE);
    let points = if points_path.exists() {
        Some(load_points(&points_path)?)
    } else {
        None
    };
    let seg_path = root.join(SEGMENTS_FILE);
    let segments = if seg_path.exists() {
        Some(load_segments(&seg_path)?)
    } else {
        None
    };

    let bbox = if let Some([lo, hi]) = tf.bbox {
        Aabb::new(Vector3::from(lo), Vector3::from(hi)).map_err(|e| Error::format(&json_path, e.to_string()))?
    } else if let Some(b) = points.as_ref().and_then(Aabb::from_points) {
        b
    } else if let Some(b) = segments
        .as_ref()
        .and_then(|s| Aabb::from_points(s.iter().flat_map(|(a, b)| [a, b])))
    {
        b
    } else {
        log::warn!("no bbox, points or segments in {}; using [-1, 1]^3", root.display());
        Aabb::unit()
    };

    Ok(Dataset {
        views,
        points,
        segments,
        bbox,
    })
}

/// `file_path` entries often omit the extension.
fn resolve_image(root: &Path, file_path: &str) -> PathBuf {
    let p = root.join(file_path);
    if p.extension().is_none() && !p.exists() {
        p.with_extension("png")
    } else {
        p
    }
}
