use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.eps.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Flat parameters with Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub params: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates taken since the last reset.
    pub step: u64,
}

impl OptState {
    pub fn new(params: Vec<f64>) -> Self {
        let n = params.len();
        Self {
            params,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    /// Clears moments and the step counter (start of a new stage).
    pub fn reset_moments(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.step = 0;
    }
}

/// One bias-corrected Adam update restricted to `active`. Entries outside
/// the range, including their moments, are left untouched. `step_index` is
/// reported when the gradient is not finite.
pub fn adam_step(
    state: &mut OptState,
    grad: &[f64],
    cfg: &AdamConfig,
    active: Range<usize>,
    step_index: usize,
) -> Result<()> {
    if grad.len() != state.params.len() {
        return Err(Error::Domain(format!(
            "gradient length {} does not match {} parameters",
            grad.len(),
            state.params.len()
        )));
    }
    if active.end > grad.len() {
        return Err(Error::Domain("active range exceeds parameter count".into()));
    }
    if let Some(i) = grad[active.clone()].iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical {
            step: step_index,
            detail: format!("non-finite gradient at parameter {}", active.start + i),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for i in active {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        state.params[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = OptState::new(vec![0.5]);
        adam_step(&mut s, &[1.0], &AdamConfig::default(), 0..1, 0).unwrap();
        assert!((s.params[0] - (0.5 - 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = OptState::new(vec![0.25, -3.0]);
        for i in 0..50 {
            adam_step(&mut s, &[0.0, 0.0], &AdamConfig::default(), 0..2, i).unwrap();
        }
        assert_eq!(s.params, vec![0.25, -3.0]);
    }

    #[test]
    fn inactive_entries_untouched() {
        let mut s = OptState::new(vec![1.0, 2.0]);
        adam_step(&mut s, &[1.0, 1.0], &AdamConfig::default(), 1..2, 0).unwrap();
        assert_eq!(s.params[0].to_bits(), 1f64.to_bits());
        assert_eq!(s.m[0], 0.0);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut s = OptState::new(vec![1.0]);
        match adam_step(&mut s, &[f64::NAN], &AdamConfig::default(), 0..1, 7) {
            Err(Error::Numerical { step, .. }) => assert_eq!(step, 7),
            other => panic!("{other:?}"),
        }
    }
}
