//! Differentiable 3D sketch optimization.
//!
//! A sketch is a set of 3D cubic Bézier curves (view-independent strokes) and
//! superquadrics whose occluding contours are volume-rendered into
//! view-dependent strokes. Both branches are differentiable end to end, so the
//! whole set can be fitted to posed multi-view images with Adam.
//!
//! Module map:
//!
//! * [`geometry`]: Bézier curves, cameras, superquadric implicit surfaces.
//! * [`raster`]: soft rasterization of 2D cubic strokes and its adjoint.
//! * [`contour`]: contour density fields and ray-marched rendering.
//! * [`compose`]: union of the two branches into one sketch image.
//! * [`loss`]: robust structural + semantic loss with pluggable backends.
//! * [`optimize`]: parameter packing, initialization, Adam, the two-stage loop.
//! * [`io`]: datasets, point clouds, stroke files, SVG and PNG export.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod canvas;
pub mod compose;
pub mod contour;
pub mod error;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod optimize;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod sidecar;
pub mod synth;

pub use canvas::ImageBuffer;
pub use error::{Error, Result};
pub use geometry::{Aabb, Camera, CubicBezier2D, CubicBezier3D, Projection, Superquadric};
pub use optimize::{ParamGradient, StrokeSet};
