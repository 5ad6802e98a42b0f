//! Datasets, point clouds, stroke files and image/vector export.

mod dataset;
mod lines;
mod ply;
mod strokefile;
mod svg;

pub use dataset::{focal_from_fov, load_dataset, pose_from_c2w, Dataset, DatasetView};
pub use lines::{load_segments, parse_segments};
pub use ply::{load_points, parse_ply};
pub use strokefile::{
    decode_strokes, encode_strokes, load_strokes, save_strokes, Precision, STROKE_HEADER_LEN, STROKE_MAGIC,
    STROKE_VERSION,
};
pub use svg::{export_svg, svg_document, trace_ridges, SvgReport};

use std::path::Path;

use crate::canvas::ImageBuffer;
use crate::error::{Error, Result};

/// Writes a grayscale PNG (values clamped to `[0, 1]`).
pub fn save_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    img.to_gray8()
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format(path, other.to_string()),
        })
}

/// Reads a PNG as luminance in `[0, 1]`, compositing alpha over white.
pub fn load_png_gray(path: &Path) -> Result<ImageBuffer> {
    let (gray, _) = dataset::decode_image(path)?;
    Ok(gray)
}
