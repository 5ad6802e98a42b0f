//! Stroke sets, parameter packing, initialization, Adam and the two-stage
//! optimization loop.

mod adam;
mod init;
mod run;

pub use adam::{adam_step, AdamConfig, OptState};
pub use init::{fps_indices, fps_sample, init_strokes, segment_distance, InitData, InitMethod};
pub use run::{optimize, CheckpointSink, LossRecord, OptimizeConfig, OptimizeOutput, Schedule, Stage, View};

use std::ops::Range;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{CubicBezier3D, ShapeBounds, Superquadric, SQ_PARAMS};

/// Numbers per curve (four 3D control points).
pub const CURVE_PARAMS: usize = 12;

/// A 3D sketch: view-independent curves and view-dependent superquadrics.
#[derive(Clone, Debug, PartialEq)]
pub struct StrokeSet {
    pub curves: Vec<CubicBezier3D>,
    pub quadrics: Vec<Superquadric>,
}

impl StrokeSet {
    pub fn new(curves: Vec<CubicBezier3D>, quadrics: Vec<Superquadric>) -> Result<Self> {
        let s = Self { curves, quadrics };
        s.validate()?;
        Ok(s)
    }

    /// Checks counts, finiteness, shape bounds and quaternion norms.
    pub fn validate(&self) -> Result<()> {
        if self.curves.is_empty() && self.quadrics.is_empty() {
            return Err(Error::Domain(
                "stroke set needs at least one curve or superquadric".into(),
            ));
        }
        if self.curves.len() > u16::MAX as usize || self.quadrics.len() > u16::MAX as usize {
            return Err(Error::Domain("too many primitives".into()));
        }
        if let Some(i) = self.curves.iter().position(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("curve {i} has non-finite control points")));
        }
        let bounds = ShapeBounds::default();
        for (i, q) in self.quadrics.iter().enumerate() {
            if !q.is_finite() {
                return Err(Error::Domain(format!("superquadric {i} has non-finite parameters")));
            }
            if !bounds.contains(q) {
                return Err(Error::Domain(format!("superquadric {i} scale or shape out of bounds")));
            }
            if !(q.quaternion_norm() > 1e-12) {
                return Err(Error::Domain(format!("superquadric {i} has a zero quaternion")));
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        CURVE_PARAMS * self.curves.len() + SQ_PARAMS * self.quadrics.len()
    }

    pub fn curve_range(&self) -> Range<usize> {
        0..CURVE_PARAMS * self.curves.len()
    }

    pub fn quadric_range(&self) -> Range<usize> {
        CURVE_PARAMS * self.curves.len()..self.n_params()
    }

    /// Curves first (control points in order, xyz each), then superquadrics.
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for c in &self.curves {
            for p in &c.points {
                out.extend_from_slice(p.as_slice());
            }
        }
        for q in &self.quadrics {
            out.extend_from_slice(&q.to_params());
        }
        out
    }

    /// Inverse of [`StrokeSet::to_params`] with the same primitive counts.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Domain(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let (cp, qp) = params.split_at(CURVE_PARAMS * self.curves.len());
        for (c, chunk) in self.curves.iter_mut().zip(cp.chunks_exact(CURVE_PARAMS)) {
            for (j, p) in c.points.iter_mut().enumerate() {
                *p = Vector3::new(chunk[3 * j], chunk[3 * j + 1], chunk[3 * j + 2]);
            }
        }
        for (q, chunk) in self.quadrics.iter_mut().zip(qp.chunks_exact(SQ_PARAMS)) {
            *q = Superquadric::from_params(chunk);
        }
        Ok(())
    }

    /// Clamps superquadric scale/shape and renormalizes quaternions.
    pub fn project(&mut self, bounds: &ShapeBounds) {
        for q in &mut self.quadrics {
            q.project(bounds);
        }
    }
}

/// Gradient of a scalar with respect to every stroke parameter, in
/// [`StrokeSet::to_params`] layout per primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient {
    pub curves: Vec<[f64; CURVE_PARAMS]>,
    pub quadrics: Vec<[f64; SQ_PARAMS]>,
}

impl ParamGradient {
    pub fn zeros(n_curves: usize, n_quadrics: usize) -> Self {
        Self {
            curves: vec![[0.0; CURVE_PARAMS]; n_curves],
            quadrics: vec![[0.0; SQ_PARAMS]; n_quadrics],
        }
    }

    pub fn for_strokes(s: &StrokeSet) -> Self {
        Self::zeros(s.curves.len(), s.quadrics.len())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.curves
            .iter()
            .flatten()
            .chain(self.quadrics.iter().flatten())
            .copied()
            .collect()
    }

    pub fn add_assign(&mut self, other: &ParamGradient) {
        for (a, b) in self.curves.iter_mut().zip(&other.curves) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.quadrics.iter_mut().zip(&other.quadrics) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.curves
            .iter()
            .flatten()
            .chain(self.quadrics.iter().flatten())
            .all(|v| v.is_finite())
    }
}
