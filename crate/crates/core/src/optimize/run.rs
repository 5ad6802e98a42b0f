use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, OptState};
use super::{ParamGradient, StrokeSet};
use crate::canvas::ImageBuffer;
use crate::compose::{composite, composite_backward};
use crate::error::{Error, Result};
use crate::geometry::{Camera, ShapeBounds};
use crate::loss::{total_loss, LossConfig, LossTarget, PerceptualBackend};
use crate::pipeline::{
    curves_backward, quadrics_backward, render_curves, render_quadrics, render_quadrics_taped, RenderSettings,
};

/// A posed target image.
#[derive(Clone, Debug)]
pub struct View {
    pub camera: Camera,
    pub target: LossTarget,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Only superquadric parameters move.
    Quadrics,
    /// Only curve parameters move.
    Curves,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Quadrics => "quadrics",
            Stage::Curves => "curves",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub steps: usize,
    /// Fraction of the steps spent on superquadrics before the curves.
    pub stage_split: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            steps: 2000,
            stage_split: 0.4,
            batch_size: 4,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl Schedule {
    /// Step counts of the quadric and curve stages. A stage with no
    /// primitives gets no steps.
    pub fn stage_steps(&self, n_ind: usize, n_dep: usize) -> (usize, usize) {
        match (n_ind > 0, n_dep > 0) {
            (true, true) => {
                let s1 = (self.steps as f64 * self.stage_split).round() as usize;
                let s1 = s1.min(self.steps);
                (s1, self.steps - s1)
            }
            (true, false) => (0, self.steps),
            _ => (self.steps, 0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeConfig {
    pub schedule: Schedule,
    pub loss: LossConfig,
    /// Turn the robust wrapper off when the set has no superquadrics.
    pub robust_auto_off: bool,
    pub render: RenderSettings,
    pub adam: AdamConfig,
    pub bounds: ShapeBounds,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub stage: Stage,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizeOutput {
    pub strokes: StrokeSet,
    pub history: Vec<LossRecord>,
}

/// Receives periodic checkpoints during [`optimize`].
pub trait CheckpointSink {
    fn checkpoint(&mut self, step: usize, strokes: &StrokeSet) -> Result<()>;
}

impl CheckpointSink for () {
    fn checkpoint(&mut self, _: usize, _: &StrokeSet) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(usize, &StrokeSet) -> Result<()>> CheckpointSink for F {
    fn checkpoint(&mut self, step: usize, strokes: &StrokeSet) -> Result<()> {
        self(step, strokes)
    }
}

/// Epoch-shuffled view batches without replacement inside an epoch.
struct Batcher {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl Batcher {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size.min(self.order.len()) {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            let v = self.order[self.pos];
            self.pos += 1;
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }
}

/// Fits `strokes` to `views`: superquadrics first, then curves.
pub fn optimize(
    views: &[View],
    strokes: StrokeSet,
    cfg: &OptimizeConfig,
    backend: &dyn PerceptualBackend,
    sink: &mut dyn CheckpointSink,
) -> Result<OptimizeOutput> {
    if views.is_empty() {
        return Err(Error::Config("optimization needs at least one view".into()));
    }
    strokes.validate()?;
    cfg.loss.validate()?;
    cfg.adam.validate()?;
    cfg.render.contour.validate()?;
    if cfg.schedule.batch_size == 0 || !(0.0..=1.0).contains(&cfg.schedule.stage_split) {
        return Err(Error::Config(
            "batch size must be positive and stage split in [0, 1]".into(),
        ));
    }
    for (i, v) in views.iter().enumerate() {
        if v.target.gray.width != v.camera.width || v.target.gray.height != v.camera.height {
            return Err(Error::Config(format!("view {i}: image and camera sizes differ")));
        }
    }

    let mut loss_cfg = cfg.loss.clone();
    if cfg.robust_auto_off && strokes.quadrics.is_empty() && loss_cfg.apply_robust {
        log::info!("no superquadrics: robust loss disabled");
        loss_cfg.apply_robust = false;
    }

    let (s1, s2) = cfg.schedule.stage_steps(strokes.curves.len(), strokes.quadrics.len());
    let mut strokes = strokes;
    let mut state = OptState::new(strokes.to_params());
    let mut batcher = Batcher::new(views.len(), cfg.schedule.seed);
    let mut history = Vec::with_capacity(s1 + s2);
    let mut step = 0usize;

    for (stage, n_steps) in [(Stage::Quadrics, s1), (Stage::Curves, s2)] {
        if n_steps == 0 {
            continue;
        }
        state.reset_moments();
        let active = match stage {
            Stage::Quadrics => strokes.quadric_range(),
            Stage::Curves => strokes.curve_range(),
        };
        // The frozen branch renders once per view per stage.
        let mut fixed: Vec<Option<ImageBuffer>> = vec![None; views.len()];

        for _ in 0..n_steps {
            let batch = batcher.next_batch(cfg.schedule.batch_size);
            let (loss, grad) = step_gradient(views, &batch, &strokes, stage, &mut fixed, &loss_cfg, cfg, backend)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Numerical {
                    step,
                    detail: format!("loss {loss} (views {batch:?})"),
                });
            }
            history.push(LossRecord { step, stage, loss });
            adam_step(&mut state, &grad.flatten(), &cfg.adam, active.clone(), step)?;
            strokes.set_params(&state.params)?;
            if stage == Stage::Quadrics {
                strokes.project(&cfg.bounds);
                let p = strokes.to_params();
                state.params[active.clone()].copy_from_slice(&p[active.clone()]);
            }
            // an update that leaves the valid parameter space is a divergence
            strokes.validate().map_err(|e| Error::Numerical {
                step,
                detail: format!("update produced invalid parameters: {e}"),
            })?;
            step += 1;
            let every = cfg.schedule.checkpoint_every;
            if every > 0 && step.is_multiple_of(every) {
                sink.checkpoint(step, &strokes)?;
            }
        }
    }
    Ok(OptimizeOutput { strokes, history })
}

#[allow(clippy::too_many_arguments)]
fn step_gradient(
    views: &[View],
    batch: &[usize],
    strokes: &StrokeSet,
    stage: Stage,
    fixed: &mut [Option<ImageBuffer>],
    loss_cfg: &LossConfig,
    cfg: &OptimizeConfig,
    backend: &dyn PerceptualBackend,
) -> Result<(f64, ParamGradient)> {
    let settings = &cfg.render;
    let mut sketches = Vec::with_capacity(batch.len());
    let mut actives = Vec::with_capacity(batch.len());
    for &vi in batch {
        let cam = &views[vi].camera;
        let frozen = fixed[vi].get_or_insert_with(|| match stage {
            Stage::Quadrics => render_curves(cam, &strokes.curves, &settings.raster),
            Stage::Curves => render_quadrics(cam, &strokes.quadrics, settings),
        });
        match stage {
            Stage::Quadrics => {
                let dep = render_quadrics_taped(cam, &strokes.quadrics, settings);
                sketches.push(composite(frozen, &dep.image)?);
                actives.push(Active::Quadrics(dep));
            }
            Stage::Curves => {
                let ind = render_curves(cam, &strokes.curves, &settings.raster);
                sketches.push(composite(&ind, frozen)?);
                actives.push(Active::Curves(ind));
            }
        }
    }
    let pairs: Vec<(&LossTarget, &ImageBuffer)> = batch
        .iter()
        .zip(&sketches)
        .map(|(&vi, s)| (&views[vi].target, s))
        .collect();
    let (loss, grads) = total_loss(&pairs, loss_cfg, backend).map_err(|e| match e {
        Error::Backend { view, msg } => Error::Backend { view: batch[view], msg },
        other => other,
    })?;

    let mut total = ParamGradient::for_strokes(strokes);
    for ((&vi, active), g) in batch.iter().zip(&actives).zip(&grads) {
        let cam = &views[vi].camera;
        let frozen = fixed[vi].as_ref().expect("rendered above");
        match active {
            Active::Quadrics(dep) => {
                let (_, g_dep) = composite_backward(frozen, &dep.image, g)?;
                let gq = quadrics_backward(cam, &strokes.quadrics, dep, &g_dep)?;
                for (a, b) in total.quadrics.iter_mut().zip(&gq) {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                }
            }
            Active::Curves(ind) => {
                let (g_ind, _) = composite_backward(ind, frozen, g)?;
                let gc = curves_backward(cam, &strokes.curves, &settings.raster, &g_ind)?;
                for (a, b) in total.curves.iter_mut().zip(&gc) {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    Ok((loss, total))
}

enum Active {
    Quadrics(crate::pipeline::QuadricRender),
    Curves(ImageBuffer),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_split_rules() {
        let s = Schedule {
            steps: 10,
            ..Schedule::default()
        };
        assert_eq!(s.stage_steps(3, 1), (4, 6));
        assert_eq!(s.stage_steps(3, 0), (0, 10));
        assert_eq!(s.stage_steps(0, 2), (10, 0));
    }

    #[test]
    fn batches_cover_each_epoch() {
        let mut b = Batcher::new(10, 3);
        let mut seen: Vec<usize> = (0..5).flat_map(|_| b.next_batch(2)).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        let mut b = Batcher::new(3, 3);
        for _ in 0..20 {
            let batch = b.next_batch(4);
            assert_eq!(batch.len(), 3);
        }
    }
}
