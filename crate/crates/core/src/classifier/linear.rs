//! Two-logit softmax regression over hashed features, and its training loop.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize, FeatureVector};
use super::optim::{adamw_step, AdamState, TrainConfig};
use crate::corpus::{Dataset, Label};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub dim_log2: u32,
    /// Row-major `2 × 2^dim_log2`; row `c` holds the weights of logit `c`.
    pub weights: Vec<f64>,
    pub bias: [f64; 2],
}

/// Numerically stable two-way softmax.
pub fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Cross-entropy of `label` under logits `z`, computed via log-sum-exp.
pub fn cross_entropy(z: [f64; 2], label: Label) -> f64 {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    lse - z[label as usize]
}

impl LinearModel {
    pub fn zeros(dim_log2: u32) -> Self {
        LinearModel {
            dim_log2,
            weights: vec![0.0; 2 << dim_log2],
            bias: [0.0; 2],
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.dim_log2
    }

    pub fn check(&self) -> Result<()> {
        if self.weights.len() != 2 * self.dim() {
            return Err(Error::Model(format!(
                "weight matrix holds {} entries, expected {}",
                self.weights.len(),
                2 * self.dim()
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|w| !w.is_finite()) {
            return Err(Error::Model("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn logits(&self, fv: &FeatureVector) -> [f64; 2] {
        let d = self.dim();
        let mut z = self.bias;
        for &(i, count) in &fv.entries {
            let x = f64::from(count);
            z[0] += self.weights[i as usize] * x;
            z[1] += self.weights[d + i as usize] * x;
        }
        z
    }

    pub fn proba(&self, fv: &FeatureVector) -> [f64; 2] {
        softmax2(self.logits(fv))
    }

    pub fn predict_text(&self, text: &str) -> [f64; 2] {
        self.proba(&featurize(text, self.dim_log2))
    }

    /// Adds `scale · ∂CE/∂θ` for one example into the gradient buffers and
    /// returns the example's loss.
    pub fn accumulate_grad(
        &self,
        fv: &FeatureVector,
        label: Label,
        scale: f64,
        grad_w: &mut [f64],
        grad_b: &mut [f64; 2],
    ) -> f64 {
        let z = self.logits(fv);
        let p = softmax2(z);
        let d = self.dim();
        let delta = [
            (p[0] - f64::from(u8::from(label == 0))) * scale,
            (p[1] - f64::from(u8::from(label == 1))) * scale,
        ];
        for &(i, count) in &fv.entries {
            let x = f64::from(count);
            grad_w[i as usize] += delta[0] * x;
            grad_w[d + i as usize] += delta[1] * x;
        }
        grad_b[0] += delta[0];
        grad_b[1] += delta[1];
        cross_entropy(z, label)
    }
}

pub(crate) fn encode(dataset: &Dataset, dim_log2: u32) -> Result<Vec<(FeatureVector, Label)>> {
    let labels = dataset.labels()?;
    Ok(dataset
        .examples
        .iter()
        .zip(labels)
        .map(|(e, y)| (featurize(&e.text, dim_log2), y))
        .collect())
}

pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    /// Mean pre-update loss of every epoch, in order.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Mini-batch AdamW loop whose optimizer state, shuffle stream and learning
/// rate schedule persist across successive `run_epochs` calls.
pub struct LinearTrainer {
    model: LinearModel,
    w_state: AdamState,
    b_state: AdamState,
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    step: usize,
    total_steps: usize,
    stats: TrainStats,
    grad_w: Vec<f64>,
}

impl LinearTrainer {
    /// `total_steps` is the length of the learning-rate schedule.
    pub fn new(cfg: &TrainConfig, total_steps: usize) -> Result<Self> {
        cfg.validate()?;
        let model = LinearModel::zeros(cfg.dim_log2);
        let n = model.weights.len();
        Ok(LinearTrainer {
            model,
            w_state: AdamState::zeros(n),
            b_state: AdamState::zeros(2),
            cfg: cfg.clone(),
            rng: seed::rng(cfg.seed),
            step: 0,
            total_steps: total_steps.max(1),
            stats: TrainStats::default(),
            grad_w: vec![0.0; n],
        })
    }

    pub fn run_epochs(&mut self, data: &[(FeatureVector, Label)], epochs: usize) -> Result<()> {
        if data.is_empty() {
            return Ok(());
        }
        let bs = self.cfg.batch_size;
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..epochs {
            order.shuffle(&mut self.rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(bs) {
                epoch_loss += self.train_batch(data, batch)?;
            }
            self.stats.epoch_losses.push(epoch_loss / data.len() as f64);
        }
        Ok(())
    }

    fn train_batch(&mut self, data: &[(FeatureVector, Label)], batch: &[usize]) -> Result<f64> {
        let scale = 1.0 / batch.len() as f64;
        let mut grad_b = [0.0; 2];
        let mut loss = 0.0;
        for &i in batch {
            let (fv, y) = &data[i];
            loss += self
                .model
                .accumulate_grad(fv, *y, scale, &mut self.grad_w, &mut grad_b);
        }
        let lr = self.cfg.lr(self.step.min(self.total_steps), self.total_steps)?;
        adamw_step(&mut self.model.weights, &self.grad_w, &mut self.w_state, &self.cfg, lr)?;
        adamw_step(&mut self.model.bias, &grad_b, &mut self.b_state, &self.cfg, lr)?;
        let d = self.model.dim();
        for &i in batch {
            for &(f, _) in &data[i].0.entries {
                self.grad_w[f as usize] = 0.0;
                self.grad_w[d + f as usize] = 0.0;
            }
        }
        self.step += 1;
        self.stats.steps += 1;
        Ok(loss)
    }

    pub fn finish(self) -> (LinearModel, TrainStats) {
        (self.model, self.stats)
    }
}

/// Trains a fresh model on a fully labeled, non-empty dataset for
/// `cfg.epochs` epochs.
pub fn train_linear_model(dataset: &Dataset, cfg: &TrainConfig) -> Result<(LinearModel, TrainStats)> {
    if dataset.is_empty() {
        return Err(Error::Argument("cannot train on an empty dataset".into()));
    }
    let data = encode(dataset, cfg.dim_log2)?;
    let total = cfg.epochs * steps_per_epoch(data.len(), cfg.batch_size);
    let mut trainer = LinearTrainer::new(cfg, total)?;
    trainer.run_epochs(&data, cfg.epochs)?;
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SyntheticSpec};
    use rand::Rng;

    #[test]
    fn zero_model_is_uniform() {
        let m = LinearModel::zeros(8);
        assert_eq!(m.predict_text("anything at all"), [0.5, 0.5]);
        assert_eq!(m.predict_text(""), [0.5, 0.5]);
    }

    #[test]
    fn softmax_is_shift_invariant_in_argmax_and_normalized() {
        let mut rng = seed::rng(1);
        for _ in 0..1000 {
            let z = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
            let c = rng.random_range(-1e3..1e3);
            let p = softmax2(z);
            let q = softmax2([z[0] + c, z[1] + c]);
            assert!((p[0] + p[1] - 1.0).abs() <= 1e-9);
            assert_eq!(p[1] > p[0], q[1] > q[0]);
        }
    }

    #[test]
    fn empty_and_unlabeled_datasets_are_rejected() {
        let spec = SyntheticSpec { n_labeled: 0, n_unlabeled: 3, n_test: 0, ..Default::default() };
        let c = generate_synthetic_corpus(&spec).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(train_linear_model(&c.labeled, &cfg), Err(Error::Argument(_))));
        assert!(matches!(train_linear_model(&c.unlabeled, &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn last_partial_batch_is_trained() {
        let spec = SyntheticSpec { n_labeled: 17, n_unlabeled: 0, n_test: 0, ..Default::default() };
        let c = generate_synthetic_corpus(&spec).unwrap();
        let cfg = TrainConfig { epochs: 2, dim_log2: 10, ..Default::default() };
        let (_, stats) = train_linear_model(&c.labeled, &cfg).unwrap();
        assert_eq!(stats.steps, 2 * 3);
    }
}
