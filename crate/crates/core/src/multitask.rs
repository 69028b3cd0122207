//! Multi-task learning with a hard-shared encoder.
//!
//! A one-hidden-layer tanh encoder over hashed features feeds one linear
//! head per task. Pretraining alternates batches of the entailment and event
//! tasks, updating the encoder and the active head only. The causality model
//! then concatenates the raw head logits (entailment, event, and for
//! [`Arch::A2`] a causality head) and maps them to two logits with a
//! combiner, trained end to end.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::features::{featurize, FeatureVector};
use crate::classifier::linear::{cross_entropy, encode, softmax2, steps_per_epoch};
use crate::classifier::optim::{adamw_step, AdamState, TrainConfig};
use crate::corpus::{Dataset, Example, Label, Provenance, Source};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, Arm, MetricsRow};
use crate::seed;

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_MTL_DIM_LOG2: u32 = 14;
pub const PRETRAIN_EPOCHS: usize = 3;
pub const FINETUNE_EPOCHS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arch {
    A1,
    A2,
}

impl Arch {
    /// Number of heads feeding the combiner.
    pub fn combined_heads(self) -> usize {
        match self {
            Arch::A1 => 2,
            Arch::A2 => 3,
        }
    }

    pub fn combiner_width(self) -> usize {
        2 * self.combined_heads()
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A1" | "a1" => Ok(Arch::A1),
            "A2" | "a2" => Ok(Arch::A2),
            other => Err(Error::Argument(format!("unknown architecture `{other}`"))),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::A1 => "A1",
            Arch::A2 => "A2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Entailment,
    Event,
    Causality,
}

/// Parameter groups, each with its own optimizer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Group {
    Encoder,
    Head(Task),
    Combiner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedEncoder {
    pub dim_log2: u32,
    pub hidden: usize,
    /// Feature-major: the `hidden` weights of feature `f` start at `f * hidden`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SharedEncoder {
    pub fn zeros(dim_log2: u32, hidden: usize) -> Self {
        SharedEncoder {
            dim_log2,
            hidden,
            weights: vec![0.0; (1usize << dim_log2) * hidden],
            bias: vec![0.0; hidden],
        }
    }

    pub fn forward(&self, fv: &FeatureVector) -> Vec<f64> {
        let mut z = self.bias.clone();
        for &(f, count) in &fv.entries {
            let col = &self.weights[f as usize * self.hidden..][..self.hidden];
            let x = f64::from(count);
            for (zi, w) in z.iter_mut().zip(col) {
                *zi += w * x;
            }
        }
        z.iter_mut().for_each(|zi| *zi = zi.tanh());
        z
    }
}

/// Linear map from the hidden state to two logits; weights are row-major
/// `2 × hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskHead {
    pub task: Task,
    pub weights: Vec<f64>,
    pub bias: [f64; 2],
}

impl TaskHead {
    pub fn zeros(task: Task, hidden: usize) -> Self {
        TaskHead {
            task,
            weights: vec![0.0; 2 * hidden],
            bias: [0.0; 2],
        }
    }

    pub fn logits(&self, h: &[f64]) -> [f64; 2] {
        let n = h.len();
        let mut out = self.bias;
        for (o, out_o) in out.iter_mut().enumerate() {
            *out_o += dot(&self.weights[o * n..][..n], h);
        }
        out
    }
}

/// Final layer over the concatenated head logits; weights are row-major
/// `2 × width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combiner {
    pub weights: Vec<f64>,
    pub bias: [f64; 2],
}

impl Combiner {
    pub fn width(&self) -> usize {
        self.weights.len() / 2
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlModel {
    pub arch: Arch,
    pub encoder: SharedEncoder,
    pub entailment: TaskHead,
    pub event: TaskHead,
    /// Present exactly for [`Arch::A2`].
    pub causality: Option<TaskHead>,
    pub combiner: Combiner,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub hidden: Vec<f64>,
    /// Head logits in combiner order.
    pub heads: Vec<[f64; 2]>,
    pub logits: [f64; 2],
}

fn uniform(rng: &mut ChaCha8Rng, values: &mut [f64], bound: f64) {
    for v in values {
        *v = rng.random_range(-bound..bound);
    }
}

impl MtlModel {
    /// All-zero parameters of the right shapes.
    pub fn zeros(arch: Arch, dim_log2: u32, hidden: usize) -> Self {
        MtlModel {
            arch,
            encoder: SharedEncoder::zeros(dim_log2, hidden),
            entailment: TaskHead::zeros(Task::Entailment, hidden),
            event: TaskHead::zeros(Task::Event, hidden),
            causality: (arch == Arch::A2).then(|| TaskHead::zeros(Task::Causality, hidden)),
            combiner: Combiner {
                weights: vec![0.0; 2 * arch.combiner_width()],
                bias: [0.0; 2],
            },
        }
    }

    /// Seeded uniform initialization with zero biases.
    pub fn init(arch: Arch, dim_log2: u32, hidden: usize, seed: u64) -> Result<Self> {
        if !(1..=28).contains(&dim_log2) || hidden == 0 {
            return Err(Error::Argument(format!(
                "invalid MTL shape: dim_log2 {dim_log2}, hidden {hidden}"
            )));
        }
        let mut m = Self::zeros(arch, dim_log2, hidden);
        let mut rng = seed::rng(seed);
        uniform(&mut rng, &mut m.encoder.weights, 0.1);
        let head_bound = (6.0 / (hidden as f64 + 2.0)).sqrt();
        uniform(&mut rng, &mut m.entailment.weights, head_bound);
        uniform(&mut rng, &mut m.event.weights, head_bound);
        if let Some(c) = m.causality.as_mut() {
            uniform(&mut rng, &mut c.weights, head_bound);
        }
        let w = arch.combiner_width() as f64;
        uniform(&mut rng, &mut m.combiner.weights, (6.0 / (w + 2.0)).sqrt());
        Ok(m)
    }

    pub fn hidden(&self) -> usize {
        self.encoder.hidden
    }

    pub fn dim_log2(&self) -> u32 {
        self.encoder.dim_log2
    }

    pub fn head(&self, task: Task) -> Option<&TaskHead> {
        match task {
            Task::Entailment => Some(&self.entailment),
            Task::Event => Some(&self.event),
            Task::Causality => self.causality.as_ref(),
        }
    }

    fn head_mut(&mut self, task: Task) -> Option<&mut TaskHead> {
        match task {
            Task::Entailment => Some(&mut self.entailment),
            Task::Event => Some(&mut self.event),
            Task::Causality => self.causality.as_mut(),
        }
    }

    /// Heads feeding the combiner, in order.
    pub fn combined_tasks(&self) -> &'static [Task] {
        match self.arch {
            Arch::A1 => &[Task::Entailment, Task::Event],
            Arch::A2 => &[Task::Entailment, Task::Event, Task::Causality],
        }
    }

    pub fn groups(&self) -> Vec<Group> {
        let mut g = vec![Group::Encoder];
        g.extend(self.combined_tasks().iter().map(|&t| Group::Head(t)));
        g.push(Group::Combiner);
        g
    }

    /// Weight and bias blocks of a group.
    pub fn blocks(&self, group: Group) -> Option<(&[f64], &[f64])> {
        match group {
            Group::Encoder => Some((&self.encoder.weights, &self.encoder.bias)),
            Group::Head(t) => self.head(t).map(|h| (h.weights.as_slice(), h.bias.as_slice())),
            Group::Combiner => Some((&self.combiner.weights, &self.combiner.bias)),
        }
    }

    pub fn blocks_mut(&mut self, group: Group) -> Option<(&mut [f64], &mut [f64])> {
        match group {
            Group::Encoder => Some((&mut self.encoder.weights, &mut self.encoder.bias)),
            Group::Head(t) => self
                .head_mut(t)
                .map(|h| (h.weights.as_mut_slice(), h.bias.as_mut_slice())),
            Group::Combiner => Some((&mut self.combiner.weights, &mut self.combiner.bias)),
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Model(m));
        let h = self.hidden();
        if self.encoder.weights.len() != (1usize << self.dim_log2()) * h || self.encoder.bias.len() != h {
            return bad("encoder shape does not match its dimensions".into());
        }
        if self.causality.is_some() != (self.arch == Arch::A2) {
            return bad(format!("{} model with causality head present = {}", self.arch, self.causality.is_some()));
        }
        for &t in &[Task::Entailment, Task::Event, Task::Causality] {
            if let Some(head) = self.head(t) {
                if head.task != t || head.weights.len() != 2 * h {
                    return bad(format!("{t:?} head is malformed"));
                }
            }
        }
        if self.combiner.weights.len() != 2 * self.arch.combiner_width() {
            return bad(format!(
                "{} combiner has input width {}, expected {}",
                self.arch,
                self.combiner.width(),
                self.arch.combiner_width()
            ));
        }
        for g in self.groups() {
            let (w, b) = self.blocks(g).expect("listed groups exist");
            if w.iter().chain(b).any(|v| !v.is_finite()) {
                return bad(format!("non-finite parameter in {g:?}"));
            }
        }
        Ok(())
    }

    pub fn forward(&self, fv: &FeatureVector) -> Forward {
        let hidden = self.encoder.forward(fv);
        let heads: Vec<[f64; 2]> = self
            .combined_tasks()
            .iter()
            .map(|&t| self.head(t).expect("combined heads exist").logits(&hidden))
            .collect();
        let concat: Vec<f64> = heads.iter().flatten().copied().collect();
        let w = self.combiner.width();
        let mut logits = self.combiner.bias;
        for (o, l) in logits.iter_mut().enumerate() {
            *l += dot(&self.combiner.weights[o * w..][..w], &concat);
        }
        Forward { hidden, heads, logits }
    }

    pub fn predict_text(&self, text: &str) -> [f64; 2] {
        softmax2(self.forward(&featurize(text, self.dim_log2())).logits)
    }

    /// Loss of one example under `objective`: a single head's logits for an
    /// auxiliary task, the combiner output for causality.
    pub fn loss(&self, fv: &FeatureVector, label: Label, objective: Task) -> f64 {
        let fwd = self.forward(fv);
        match objective {
            Task::Causality => cross_entropy(fwd.logits, label),
            aux => {
                let h = self.head(aux).expect("auxiliary heads always exist");
                cross_entropy(h.logits(&fwd.hidden), label)
            }
        }
    }

    /// Adds `scale · ∂loss/∂θ` into `grads` (a model of the same shape) and
    /// returns the loss.
    pub fn accumulate_grad(
        &self,
        fv: &FeatureVector,
        label: Label,
        objective: Task,
        scale: f64,
        grads: &mut MtlModel,
    ) -> f64 {
        let fwd = self.forward(fv);
        let hsize = self.hidden();
        let delta = |z: [f64; 2]| {
            let p = softmax2(z);
            [
                (p[0] - f64::from(u8::from(label == 0))) * scale,
                (p[1] - f64::from(u8::from(label == 1))) * scale,
            ]
        };
        let mut dh = vec![0.0; hsize];
        let loss;

        let head_backward = |head: &TaskHead, gh: &mut TaskHead, du: [f64; 2], dh: &mut [f64]| {
            for o in 0..2 {
                let row = &head.weights[o * hsize..][..hsize];
                let grow = &mut gh.weights[o * hsize..][..hsize];
                for i in 0..hsize {
                    grow[i] += du[o] * fwd.hidden[i];
                    dh[i] += row[i] * du[o];
                }
                gh.bias[o] += du[o];
            }
        };

        match objective {
            Task::Causality => {
                loss = cross_entropy(fwd.logits, label);
                let d = delta(fwd.logits);
                let w = self.combiner.width();
                let concat: Vec<f64> = fwd.heads.iter().flatten().copied().collect();
                let mut dc = vec![0.0; w];
                for o in 0..2 {
                    for j in 0..w {
                        grads.combiner.weights[o * w + j] += d[o] * concat[j];
                        dc[j] += self.combiner.weights[o * w + j] * d[o];
                    }
                    grads.combiner.bias[o] += d[o];
                }
                for (k, &t) in self.combined_tasks().iter().enumerate() {
                    let head = self.head(t).expect("combined heads exist");
                    let gh = grads.head_mut(t).expect("gradient shaped like model");
                    head_backward(head, gh, [dc[2 * k], dc[2 * k + 1]], &mut dh);
                }
            }
            aux => {
                let head = self.head(aux).expect("auxiliary heads always exist");
                let z = head.logits(&fwd.hidden);
                loss = cross_entropy(z, label);
                let gh = grads.head_mut(aux).expect("auxiliary heads always exist");
                head_backward(head, gh, delta(z), &mut dh);
            }
        }

        let dz: Vec<f64> = dh
            .iter()
            .zip(&fwd.hidden)
            .map(|(g, h)| g * (1.0 - h * h))
            .collect();
        for (gb, g) in grads.encoder.bias.iter_mut().zip(&dz) {
            *gb += g;
        }
        for &(f, count) in &fv.entries {
            let x = f64::from(count);
            let col = &mut grads.encoder.weights[f as usize * hsize..][..hsize];
            for (gw, g) in col.iter_mut().zip(&dz) {
                *gw += g * x;
            }
        }
        loss
    }
}

/// Mini-batch AdamW over a chosen set of parameter groups. Groups outside
/// the active set are neither decayed nor updated.
struct MtlTrainer<'a> {
    model: MtlModel,
    grads: MtlModel,
    states: BTreeMap<Group, (AdamState, AdamState)>,
    cfg: &'a TrainConfig,
    step: usize,
    total_steps: usize,
}

impl<'a> MtlTrainer<'a> {
    fn new(model: MtlModel, cfg: &'a TrainConfig, total_steps: usize) -> Self {
        let grads = MtlModel::zeros(model.arch, model.dim_log2(), model.hidden());
        MtlTrainer {
            model,
            grads,
            states: BTreeMap::new(),
            cfg,
            step: 0,
            total_steps: total_steps.max(1),
        }
    }

    fn train_batch(&mut self, data: &[(FeatureVector, Label)], batch: &[usize], objective: Task) -> Result<f64> {
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            let (fv, y) = &data[i];
            loss += self.model.accumulate_grad(fv, *y, objective, scale, &mut self.grads);
        }
        let active: Vec<Group> = match objective {
            Task::Causality => self.model.groups(),
            aux => vec![Group::Encoder, Group::Head(aux)],
        };
        let lr = self.cfg.lr(self.step.min(self.total_steps), self.total_steps)?;
        for g in active {
            let (w, b) = self.model.blocks_mut(g).expect("active groups exist");
            let (gw, gb) = self.grads.blocks(g).expect("gradient shaped like model");
            let (sw, sb) = self
                .states
                .entry(g)
                .or_insert_with(|| (AdamState::zeros(w.len()), AdamState::zeros(b.len())));
            adamw_step(w, gw, sw, self.cfg, lr)?;
            adamw_step(b, gb, sb, self.cfg, lr)?;
        }
        self.clear_grads(data, batch);
        self.step += 1;
        Ok(loss)
    }

    fn clear_grads(&mut self, data: &[(FeatureVector, Label)], batch: &[usize]) {
        let h = self.grads.hidden();
        for &i in batch {
            for &(f, _) in &data[i].0.entries {
                self.grads.encoder.weights[f as usize * h..][..h].fill(0.0);
            }
        }
        for g in self.grads.groups() {
            if g == Group::Encoder {
                self.grads.encoder.bias.fill(0.0);
                continue;
            }
            let (w, b) = self.grads.blocks_mut(g).expect("listed groups exist");
            w.fill(0.0);
            b.fill(0.0);
        }
    }
}

fn shuffled_batches(rng: &mut ChaCha8Rng, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Joins each premise and hypothesis with a single space.
pub fn build_entailment_dataset<S: AsRef<str>>(pairs: &[(S, S, Label)]) -> Result<Dataset> {
    let examples = pairs
        .iter()
        .enumerate()
        .map(|(i, (a, b, y))| {
            Example::labeled(format!("rte{i}"), format!("{} {}", a.as_ref(), b.as_ref()), *y, Source::Original)
        })
        .collect();
    Dataset::from_examples(Provenance::new("entailment", 0), examples)
}

/// Event sentences get label 1, the rest 0; the union is shuffled with `seed`.
pub fn build_event_dataset<S: AsRef<str>>(events: &[S], nonevents: &[S], seed: u64) -> Result<Dataset> {
    let mut examples: Vec<Example> = events
        .iter()
        .enumerate()
        .map(|(i, s)| Example::labeled(format!("ev{i}"), s.as_ref(), 1, Source::Original))
        .chain(
            nonevents
                .iter()
                .enumerate()
                .map(|(i, s)| Example::labeled(format!("ne{i}"), s.as_ref(), 0, Source::Original)),
        )
        .collect();
    examples.shuffle(&mut seed::rng(seed));
    Dataset::from_examples(Provenance::new("event", seed), examples)
}

/// Mean loss of `objective` over a dataset.
pub fn mean_loss(model: &MtlModel, dataset: &Dataset, objective: Task) -> Result<f64> {
    let data = encode(dataset, model.dim_log2())?;
    if data.is_empty() {
        return Ok(0.0);
    }
    Ok(data.iter().map(|(fv, y)| model.loss(fv, *y, objective)).sum::<f64>() / data.len() as f64)
}

/// Trains the encoder with the entailment and event heads, alternating one
/// batch of each task while both have batches left in the epoch.
pub fn pretrain_shared(
    model: MtlModel,
    entailment: &Dataset,
    event: &Dataset,
    epochs: usize,
    cfg: &TrainConfig,
) -> Result<MtlModel> {
    model.check()?;
    cfg.validate()?;
    let ent = encode(entailment, model.dim_log2())?;
    let evt = encode(event, model.dim_log2())?;
    let bs = cfg.batch_size;
    let total = epochs * (steps_per_epoch(ent.len(), bs) + steps_per_epoch(evt.len(), bs));
    let mut rng = seed::rng(cfg.seed);
    let mut trainer = MtlTrainer::new(model, cfg, total);
    for _ in 0..epochs {
        let a = shuffled_batches(&mut rng, ent.len(), bs);
        let b = shuffled_batches(&mut rng, evt.len(), bs);
        for i in 0..a.len().max(b.len()) {
            if let Some(batch) = a.get(i) {
                trainer.train_batch(&ent, batch, Task::Entailment)?;
            }
            if let Some(batch) = b.get(i) {
                trainer.train_batch(&evt, batch, Task::Event)?;
            }
        }
    }
    Ok(trainer.model)
}

/// Trains every combined group end to end on the causality objective, then
/// scores the model on `eval`.
pub fn finetune_causality(
    model: MtlModel,
    train: &Dataset,
    eval: &Dataset,
    epochs: usize,
    cfg: &TrainConfig,
    trial: usize,
    config_digest: &str,
) -> Result<(MtlModel, MetricsRow)> {
    model.check()?;
    cfg.validate()?;
    let data = encode(train, model.dim_log2())?;
    let total = epochs * steps_per_epoch(data.len(), cfg.batch_size);
    let mut rng = seed::rng(cfg.seed);
    let mut trainer = MtlTrainer::new(model, cfg, total);
    if !data.is_empty() {
        for _ in 0..epochs {
            for batch in shuffled_batches(&mut rng, data.len(), cfg.batch_size) {
                trainer.train_batch(&data, &batch, Task::Causality)?;
            }
        }
    }
    let model = trainer.model;
    let golds = eval.labels()?;
    let preds: Vec<Label> = eval
        .examples
        .iter()
        .map(|e| {
            let p = model.predict_text(&e.text);
            u8::from(p[1] > p[0])
        })
        .collect();
    let row = MetricsRow::new(Arm::Mtl, trial, evaluate(&preds, &golds)?, config_digest);
    Ok((model, row))
}

/// Sizes of the generated auxiliary tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxSpec {
    pub n_entailment: usize,
    pub n_event: usize,
    pub n_nonevent: usize,
    pub seed: u64,
}

impl Default for AuxSpec {
    fn default() -> Self {
        AuxSpec {
            n_entailment: 400,
            n_event: 300,
            n_nonevent: 200,
            seed: 11,
        }
    }
}

const AUX_WORDS: [&str; 24] = [
    "river", "garden", "window", "market", "letter", "morning", "station", "bridge", "table",
    "village", "silver", "harbor", "evening", "orchard", "meadow", "lantern", "tower", "road",
    "valley", "forest", "kitchen", "island", "museum", "library",
];
const EVENT_VERBS: [&str; 6] = ["protested", "marched", "clashed", "rallied", "struck", "rioted"];
const NEGATIONS: [&str; 3] = ["not", "never", "no"];

fn aux_words(rng: &mut ChaCha8Rng, n: usize) -> Vec<&'static str> {
    (0..n).map(|_| AUX_WORDS[rng.random_range(0..AUX_WORDS.len())]).collect()
}

/// Toy entailment and event-detection tasks. A hypothesis is a span of its
/// premise, with a negation word inserted for non-entailed pairs; event
/// sentences contain a protest verb.
pub fn synthetic_aux(spec: &AuxSpec) -> Result<(Dataset, Dataset)> {
    let mut rng = seed::rng(seed::derive_named(spec.seed, "entailment"));
    let pairs: Vec<(String, String, Label)> = (0..spec.n_entailment)
        .map(|_| {
            let len = rng.random_range(6..=10);
            let premise = aux_words(&mut rng, len);
            let start = rng.random_range(0..premise.len() - 3);
            let mut hyp: Vec<&str> = premise[start..start + 3].to_vec();
            let label = u8::from(rng.random_bool(0.5));
            if label == 0 {
                hyp.insert(1, NEGATIONS[rng.random_range(0..NEGATIONS.len())]);
            }
            (premise.join(" "), hyp.join(" "), label)
        })
        .collect();

    let mut rng = seed::rng(seed::derive_named(spec.seed, "event"));
    let mut sentence = |event: bool| {
        let len = rng.random_range(6..=10);
        let mut words = aux_words(&mut rng, len);
        if event {
            let at = rng.random_range(1..words.len());
            words.insert(at, EVENT_VERBS[rng.random_range(0..EVENT_VERBS.len())]);
        }
        words.join(" ")
    };
    let events: Vec<String> = (0..spec.n_event).map(|_| sentence(true)).collect();
    let nonevents: Vec<String> = (0..spec.n_nonevent).map(|_| sentence(false)).collect();

    Ok((
        build_entailment_dataset(&pairs)?,
        build_event_dataset(&events, &nonevents, spec.seed)?,
    ))
}

/// Checks `accumulate_grad` against central differences on every parameter
/// of `group` touched by `fv`, returning the largest relative error.
/// Relative error is `|a − n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    model: &MtlModel,
    fv: &FeatureVector,
    label: Label,
    objective: Task,
    group: Group,
    step: f64,
    floor: f64,
) -> f64 {
    let mut grads = MtlModel::zeros(model.arch, model.dim_log2(), model.hidden());
    model.accumulate_grad(fv, label, objective, 1.0, &mut grads);
    let (gw, gb) = grads.blocks(group).expect("group exists");
    let analytic: Vec<f64> = gw.iter().chain(gb).copied().collect();
    let nw = gw.len();

    let h = model.hidden();
    let indices: Vec<usize> = match group {
        Group::Encoder => fv
            .entries
            .iter()
            .flat_map(|&(f, _)| (0..h).map(move |i| f as usize * h + i))
            .chain(nw..nw + h)
            .collect(),
        _ => (0..analytic.len()).collect(),
    };

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for idx in indices {
        let set = |m: &mut MtlModel, v: f64| {
            let (w, b) = m.blocks_mut(group).expect("group exists");
            if idx < nw {
                w[idx] = v;
            } else {
                b[idx - nw] = v;
            }
        };
        let original = {
            let (w, b) = model.blocks(group).expect("group exists");
            if idx < nw {
                w[idx]
            } else {
                b[idx - nw]
            }
        };
        set(&mut probe, original + step);
        let up = probe.loss(fv, label, objective);
        set(&mut probe, original - step);
        let down = probe.loss(fv, label, objective);
        set(&mut probe, original);
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[idx];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}
