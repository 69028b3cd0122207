//! AdamW with decoupled weight decay and a linearly decaying learning rate.
//!
//! One step at learning rate `lr`, for every coordinate:
//!
//! ```text
//! θ ← θ · (1 − lr · λ)
//! m ← β₁ m + (1 − β₁) g
//! v ← β₂ v + (1 − β₂) g²
//! θ ← θ − lr · (m / (1 − β₁ᵗ)) / (√(v / (1 − β₂ᵗ)) + ε)
//! ```
//!
//! with `t` counted from 1 after the increment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    LinearDecay,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub schedule: Schedule,
    /// Width of the hashed feature space, as a power of two.
    pub dim_log2: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            batch_size: 8,
            epochs: 5,
            seed: 0,
            schedule: Schedule::LinearDecay,
            dim_log2: super::features::DEFAULT_DIM_LOG2,
        }
    }
}

impl TrainConfig {
    /// Transformer fine-tuning profile (learning rate 5e-5); the default for
    /// remotely served backbones.
    pub fn transformer() -> Self {
        TrainConfig {
            lr0: 5e-5,
            ..Default::default()
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Argument(format!("train config: {what}")));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(1..=28).contains(&self.dim_log2) {
            return bad("dim_log2 must lie in 1..=28");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }

    pub fn lr(&self, step: usize, total_steps: usize) -> Result<f64> {
        match self.schedule {
            Schedule::LinearDecay => lr_at(step, total_steps, self.lr0),
            Schedule::Constant => Ok(self.lr0),
        }
    }
}

/// `lr0 · (1 − step / total_steps)`.
pub fn lr_at(step: usize, total_steps: usize, lr0: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Argument("total_steps must be at least 1".into()));
    }
    if step > total_steps {
        return Err(Error::Argument(format!(
            "step {step} beyond total_steps {total_steps}"
        )));
    }
    Ok(lr0 * (1.0 - step as f64 / total_steps as f64))
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Argument(format!(
            "shape mismatch: params {n}, grads {}, m {}, v {}",
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at index {i}")));
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;

    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *p *= decay;
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / bias1) / ((*v / bias2).sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_decay_endpoints_and_midpoint() {
        assert_eq!(lr_at(0, 100, 5e-5).unwrap(), 5e-5);
        assert_eq!(lr_at(100, 100, 5e-5).unwrap(), 0.0);
        assert_relative_eq!(lr_at(50, 100, 5e-5).unwrap(), 2.5e-5, max_relative = 1e-15);
        assert!(matches!(lr_at(0, 0, 1.0), Err(Error::Argument(_))));
        assert!(lr_at(101, 100, 1.0).is_err());
    }

    #[test]
    fn zero_gradient_without_decay_leaves_params() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = vec![1.0, -2.0, 0.5];
        let mut s = AdamState::zeros(3);
        adamw_step(&mut p, &[0.0; 3], &mut s, &cfg, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = vec![1.0];
        let mut s = AdamState::zeros(1);
        adamw_step(&mut p, &[1.0], &mut s, &cfg, 0.1).unwrap();
        // m̂ = 1, v̂ = 1 after bias correction
        assert_relative_eq!(p[0], 1.0 - 0.1 / (1.0 + 1e-8), max_relative = 1e-14);
        assert_relative_eq!(p[0], 0.9, max_relative = 1e-7);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let cfg = TrainConfig {
            weight_decay: 0.5,
            ..Default::default()
        };
        let mut p = vec![2.0];
        let mut s = AdamState::zeros(1);
        adamw_step(&mut p, &[0.0], &mut s, &cfg, 0.1).unwrap();
        assert_relative_eq!(p[0], 2.0 * (1.0 - 0.05), max_relative = 1e-15);
    }

    #[test]
    fn deterministic_and_checked() {
        let cfg = TrainConfig::default();
        let run = || {
            let mut p = vec![0.3, -0.7];
            let mut s = AdamState::zeros(2);
            for _ in 0..5 {
                adamw_step(&mut p, &[0.2, -1.5], &mut s, &cfg, 0.05).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());

        let mut p = vec![0.0];
        let mut s = AdamState::zeros(1);
        assert!(matches!(
            adamw_step(&mut p, &[f64::NAN], &mut s, &cfg, 0.1),
            Err(Error::Numeric(_))
        ));
        assert_eq!(s.t, 0);
        assert!(adamw_step(&mut p, &[0.0, 0.0], &mut s, &cfg, 0.1).is_err());
    }
}
