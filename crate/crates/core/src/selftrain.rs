//! Teacher–student self-training.
//!
//! 1. A teacher is trained on the original labeled data.
//! 2. The teacher labels an unlabeled stream; an example is kept when its
//!    argmax probability is strictly above the threshold, and goes to the
//!    positive or negative pool by its argmax label.
//! 3. A pseudo-labeled split of `total` examples is drawn from the pools at a
//!    fixed positive:negative ratio.
//! 4. A fresh student trains for `epochs_pseudo` epochs on the split and
//!    then `epochs_original` epochs on the original data, under one
//!    optimizer state and one learning-rate schedule.
//!
//! [`run_experiment`] repeats the student and a baseline (original data
//! only) over several seeded trials and scores both arms.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::linear::{encode, steps_per_epoch, LinearTrainer, TrainStats};
use crate::classifier::{train_linear, ClassifierHandle, TrainConfig};
use crate::corpus::{Dataset, Example, Label, Provenance, Source};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, evaluate, Arm, MetricsReport, MetricsRow};
use crate::seed;

/// Examples per inference task when pseudo-labeling in parallel.
const INFERENCE_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPool {
    pub positives: Vec<Example>,
    pub negatives: Vec<Example>,
    pub threshold: f64,
}

impl PseudoPool {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Size and polarity ratio of a pseudo-labeled split. Serialized as
/// `{"total": 10000, "ratio": "1:3", "seed": 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SplitSpecRepr", into = "SplitSpecRepr")]
pub struct SplitSpec {
    pub total: usize,
    pub pos_parts: usize,
    pub neg_parts: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitSpecRepr {
    total: usize,
    ratio: String,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<SplitSpecRepr> for SplitSpec {
    type Error = Error;

    fn try_from(r: SplitSpecRepr) -> Result<Self> {
        let (pos_parts, neg_parts) = parse_ratio(&r.ratio)?;
        SplitSpec::new(r.total, pos_parts, neg_parts, r.seed)
    }
}

impl From<SplitSpec> for SplitSpecRepr {
    fn from(s: SplitSpec) -> Self {
        SplitSpecRepr {
            total: s.total,
            ratio: format!("{}:{}", s.pos_parts, s.neg_parts),
            seed: s.seed,
        }
    }
}

/// Parses `"pos:neg"`.
pub fn parse_ratio(ratio: &str) -> Result<(usize, usize)> {
    let bad = || Error::Argument(format!("ratio `{ratio}` is not of the form pos:neg"));
    let (p, n) = ratio.split_once(':').ok_or_else(bad)?;
    let p = usize::from_str(p.trim()).map_err(|_| bad())?;
    let n = usize::from_str(n.trim()).map_err(|_| bad())?;
    Ok((p, n))
}

impl SplitSpec {
    pub fn new(total: usize, pos_parts: usize, neg_parts: usize, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            total,
            pos_parts,
            neg_parts,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total == 0 || self.pos_parts == 0 || self.neg_parts == 0 {
            return Err(Error::Argument(
                "split total and ratio parts must be positive".into(),
            ));
        }
        if self.total % (self.pos_parts + self.neg_parts) != 0 {
            return Err(Error::Argument(format!(
                "split total {} is not divisible by {}+{}",
                self.total, self.pos_parts, self.neg_parts
            )));
        }
        Ok(())
    }

    /// `(s, t)`: the number of positives and negatives.
    pub fn counts(&self) -> (usize, usize) {
        let s = self.total / (self.pos_parts + self.neg_parts) * self.pos_parts;
        (s, self.total - s)
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @ {}:{}", self.total, self.pos_parts, self.neg_parts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Base seed the experiment was resolved from.
    pub seed: u64,
    pub threshold: f64,
    pub split: SplitSpec,
    pub teacher: TrainConfig,
    /// Student and baseline settings; per-trial seeds derive from `seed`.
    pub student: TrainConfig,
    pub epochs_pseudo: usize,
    pub epochs_original: usize,
    pub trials: usize,
}

impl PipelineConfig {
    /// Defaults with every seed derived from `seed`: threshold 0.9, a 1:1
    /// split of 10,000, one pseudo epoch then five original epochs, five
    /// trials.
    pub fn from_seed(seed: u64) -> Self {
        PipelineConfig {
            seed,
            threshold: 0.9,
            split: SplitSpec {
                total: 10_000,
                pos_parts: 1,
                neg_parts: 1,
                seed: seed::derive_named(seed, "split"),
            },
            teacher: TrainConfig::default().with_seed(seed::derive_named(seed, "teacher")),
            student: TrainConfig::default().with_seed(seed::derive_named(seed, "student")),
            epochs_pseudo: 1,
            epochs_original: 5,
            trials: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_threshold(self.threshold)?;
        self.split.validate()?;
        self.teacher.validate()?;
        self.student.validate()?;
        if self.trials == 0 {
            return Err(Error::Argument("trials must be at least 1".into()));
        }
        Ok(())
    }

    /// Student settings for one trial.
    pub fn trial_student(&self, trial: usize) -> TrainConfig {
        self.student
            .clone()
            .with_seed(seed::derive(self.student.seed, trial as u64))
    }

    /// Short SHA-256 digest of the configuration's JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("configs always serialize");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.5 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "threshold must lie strictly between 0.5 and 1, got {threshold}"
        )))
    }
}

pub fn train_teacher(original: &Dataset, cfg: &TrainConfig) -> Result<ClassifierHandle> {
    train_linear(original, cfg)
}

/// Runs `f` over `items` in order-preserving chunks on `workers` threads.
fn par_map_chunks<T, U, F>(items: &[T], workers: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&[T]) -> Result<Vec<U>> + Sync + Send,
{
    if workers <= 1 || items.len() <= INFERENCE_CHUNK {
        return f(items);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {workers} workers: {e}")))?;
    let parts: Vec<Result<Vec<U>>> =
        pool.install(|| items.par_chunks(INFERENCE_CHUNK).map(&f).collect());
    let mut out = Vec::with_capacity(items.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Keeps every example whose larger class probability is strictly above
/// `threshold`. Pool order follows input order for any worker count.
pub fn pseudo_label(
    teacher: &ClassifierHandle,
    unlabeled: &[Example],
    threshold: f64,
    workers: usize,
) -> Result<PseudoPool> {
    check_threshold(threshold)?;
    let probs = par_map_chunks(unlabeled, workers, |chunk| {
        let texts: Vec<&str> = chunk.iter().map(|e| e.text.as_str()).collect();
        teacher.predict_proba(&texts)
    })?;
    if probs.len() != unlabeled.len() {
        return Err(Error::provider(format!(
            "{} probability pairs for {} inputs",
            probs.len(),
            unlabeled.len()
        )));
    }

    let mut pool = PseudoPool {
        positives: Vec::new(),
        negatives: Vec::new(),
        threshold,
    };
    for (e, p) in unlabeled.iter().zip(probs) {
        let (label, confidence): (Label, f64) = if p[1] > p[0] { (1, p[1]) } else { (0, p[0]) };
        if confidence <= threshold {
            continue;
        }
        let example = Example {
            id: e.id.clone(),
            text: e.text.clone(),
            label: Some(label),
            source: Source::Pseudo,
            confidence: Some(confidence),
            meta: e.meta.clone(),
        };
        if label == 1 {
            pool.positives.push(example);
        } else {
            pool.negatives.push(example);
        }
    }
    Ok(pool)
}

/// Shuffles each pool, takes the first `s` positives and `t` negatives, and
/// shuffles their concatenation. All three shuffles are seeded from
/// `spec.seed`.
pub fn build_split(pool: &PseudoPool, spec: &SplitSpec) -> Result<Dataset> {
    spec.validate()?;
    let (s, t) = spec.counts();
    if pool.positives.len() < s {
        return Err(Error::Capacity {
            side: "positive",
            required: s,
            available: pool.positives.len(),
        });
    }
    if pool.negatives.len() < t {
        return Err(Error::Capacity {
            side: "negative",
            required: t,
            available: pool.negatives.len(),
        });
    }

    let mut positives: Vec<&Example> = pool.positives.iter().collect();
    let mut negatives: Vec<&Example> = pool.negatives.iter().collect();
    positives.shuffle(&mut seed::rng(seed::derive(spec.seed, 0)));
    negatives.shuffle(&mut seed::rng(seed::derive(spec.seed, 1)));

    let mut split: Vec<Example> = positives[..s]
        .iter()
        .chain(&negatives[..t])
        .map(|&e| e.clone())
        .collect();
    split.shuffle(&mut seed::rng(seed::derive(spec.seed, 2)));

    let mut provenance = Provenance::new(format!("pseudo_split/{}:{}", spec.pos_parts, spec.neg_parts), spec.seed)
        .with_parents(["pseudo_pool"]);
    provenance.threshold = Some(pool.threshold);
    Dataset::from_examples(provenance, split)
}

#[derive(Debug, Clone)]
pub struct StudentRun {
    pub classifier: ClassifierHandle,
    /// `(epochs on the pseudo split, epochs on the original data)`.
    pub schedule: (usize, usize),
    pub stats: TrainStats,
}

/// Trains a freshly initialized student with `cfg.student`.
pub fn train_student(pseudo: &Dataset, original: &Dataset, cfg: &PipelineConfig) -> Result<StudentRun> {
    let student = &cfg.student;
    student.validate()?;
    if original.is_empty() {
        return Err(Error::Argument("cannot train on an empty dataset".into()));
    }
    let pseudo_data = encode(pseudo, student.dim_log2)?;
    let original_data = encode(original, student.dim_log2)?;
    let total = cfg.epochs_pseudo * steps_per_epoch(pseudo_data.len(), student.batch_size)
        + cfg.epochs_original * steps_per_epoch(original_data.len(), student.batch_size);

    let mut trainer = LinearTrainer::new(student, total)?;
    trainer.run_epochs(&pseudo_data, cfg.epochs_pseudo)?;
    trainer.run_epochs(&original_data, cfg.epochs_original)?;
    let (model, stats) = trainer.finish();
    Ok(StudentRun {
        classifier: ClassifierHandle::linear(model, student.clone()),
        schedule: (cfg.epochs_pseudo, cfg.epochs_original),
        stats,
    })
}

/// Everything one experiment produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: MetricsReport,
    pub pool: PseudoPool,
    pub pseudo_split: Dataset,
    pub teacher: ClassifierHandle,
    /// Trial-0 models.
    pub baseline: ClassifierHandle,
    pub student: ClassifierHandle,
}

fn score(model: &ClassifierHandle, eval: &Dataset) -> Result<crate::metrics::MetricValues> {
    let golds = eval.labels()?;
    let preds = model.predict_labels(&eval.texts())?;
    evaluate(&preds, &golds)
}

/// Trains a native teacher with `cfg.teacher` and runs the experiment.
pub fn run_experiment(
    cfg: &PipelineConfig,
    train: &Dataset,
    eval: &Dataset,
    unlabeled: &Dataset,
    workers: usize,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let teacher = train_teacher(train, &cfg.teacher)?;
    run_experiment_with_teacher(cfg, teacher, train, eval, unlabeled, workers)
}

/// Pseudo-labels `unlabeled` with `teacher`, builds one split, then for every
/// trial trains and scores a baseline (`epochs_original` epochs on `train`)
/// and a student. Both arms of a trial share the trial seed.
pub fn run_experiment_with_teacher(
    cfg: &PipelineConfig,
    teacher: ClassifierHandle,
    train: &Dataset,
    eval: &Dataset,
    unlabeled: &Dataset,
    workers: usize,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if eval.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    let pool = pseudo_label(&teacher, &unlabeled.examples, cfg.threshold, workers)?;
    let pseudo_split = build_split(&pool, &cfg.split)?;
    let digest = cfg.digest();

    let trials: Vec<Result<(MetricsRow, MetricsRow, ClassifierHandle, ClassifierHandle)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let student_cfg = cfg.trial_student(trial);
            let baseline = train_linear(train, &student_cfg.clone().with_epochs(cfg.epochs_original))?;
            let trial_cfg = PipelineConfig {
                student: student_cfg,
                ..cfg.clone()
            };
            let student = train_student(&pseudo_split, train, &trial_cfg)?.classifier;
            let baseline_row = MetricsRow::new(Arm::Baseline, trial, score(&baseline, eval)?, &digest);
            let student_row = MetricsRow::new(Arm::Selftrain, trial, score(&student, eval)?, &digest);
            Ok((baseline_row, student_row, baseline, student))
        })
        .collect();

    let mut rows = Vec::with_capacity(2 * cfg.trials);
    let mut first = None;
    for trial in trials {
        let (b, s, baseline, student) = trial?;
        rows.push(b);
        rows.push(s);
        first.get_or_insert((baseline, student));
    }
    let (baseline, student) = first.expect("at least one trial");
    Ok(ExperimentOutput {
        report: aggregate(rows),
        pool,
        pseudo_split,
        teacher,
        baseline,
        student,
    })
}
