//! Desk-scale stand-in corpus.
//!
//! Sentences are strings of pseudo-words. A latent positive carries one cue
//! phrase from the lexicon at a random token position; a latent negative
//! carries none. Observed labels of the labeled and test splits are flipped
//! with probability `noise`; unlabeled examples carry no label.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Example, Label, Provenance, Source};
use crate::classifier::features::tokenize;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub noise: f64,
    pub cue_lexicon: Vec<String>,
    pub vocab_size: usize,
    /// Inclusive token-count bounds.
    pub sentence_len: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_labeled: 200,
            n_unlabeled: 5_000,
            n_test: 1_000,
            noise: 0.1,
            cue_lexicon: ["because", "due to", "led to", "caused", "as a result"]
                .map(String::from)
                .to_vec(),
            vocab_size: 200,
            sentence_len: (8, 20),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::Argument(format!(
                "noise must lie in [0, 0.5), got {}",
                self.noise
            )));
        }
        if self.cue_lexicon.is_empty() || self.cue_lexicon.iter().any(|c| tokenize(c).is_empty()) {
            return Err(Error::Argument("cue lexicon must hold non-empty phrases".into()));
        }
        if self.vocab_size == 0 {
            return Err(Error::Argument("vocab_size must be positive".into()));
        }
        let longest_cue = self.cue_lexicon.iter().map(|c| tokenize(c).len()).max().unwrap_or(0);
        let (lo, hi) = self.sentence_len;
        if lo > hi || lo <= longest_cue {
            return Err(Error::Argument(format!(
                "sentence_len {lo}..={hi} must be ordered and longer than the longest cue"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub test: Dataset,
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
];
const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

fn build_vocab(spec: &SyntheticSpec) -> Vec<String> {
    let reserved: HashSet<String> = spec.cue_lexicon.iter().flat_map(|c| tokenize(c)).collect();
    let mut rng = seed::rng(seed::derive_named(spec.seed, "vocab"));
    let mut seen = HashSet::new();
    let mut vocab = Vec::with_capacity(spec.vocab_size);
    while vocab.len() < spec.vocab_size {
        let syllables = rng.random_range(2..=3);
        let word: String = (0..syllables)
            .map(|_| {
                let onset = ONSETS[rng.random_range(0..ONSETS.len())];
                let nucleus = NUCLEI[rng.random_range(0..NUCLEI.len())];
                format!("{onset}{nucleus}")
            })
            .collect();
        if !reserved.contains(&word) && seen.insert(word.clone()) {
            vocab.push(word);
        }
    }
    vocab
}

fn sentence(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, vocab: &[String], positive: bool) -> String {
    let (lo, hi) = spec.sentence_len;
    let len = rng.random_range(lo..=hi);
    let cue: Vec<&str> = if positive {
        let phrase = &spec.cue_lexicon[rng.random_range(0..spec.cue_lexicon.len())];
        phrase.split_whitespace().collect()
    } else {
        Vec::new()
    };
    let filler = len - cue.len();
    let mut tokens: Vec<&str> = (0..filler)
        .map(|_| vocab[rng.random_range(0..vocab.len())].as_str())
        .collect();
    if positive {
        let at = rng.random_range(0..=filler);
        tokens.splice(at..at, cue);
    }
    let mut text = tokens.join(" ");
    if let Some(first) = text.get(..1) {
        let upper = first.to_uppercase();
        text.replace_range(..1, &upper);
    }
    text.push('.');
    text
}

fn split(
    spec: &SyntheticSpec,
    vocab: &[String],
    name: &str,
    prefix: &str,
    n: usize,
    labeled: bool,
) -> Result<Dataset> {
    let stream_seed = seed::derive_named(spec.seed, name);
    let mut rng = seed::rng(stream_seed);
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let positive = rng.random_bool(0.5);
        let text = sentence(&mut rng, spec, vocab, positive);
        let flip = rng.random::<f64>() < spec.noise;
        let id = format!("{prefix}{i}");
        examples.push(if labeled {
            let label = Label::from(positive ^ flip);
            Example::labeled(id, text, label, Source::Synthetic)
        } else {
            Example::unlabeled(id, text, Source::Synthetic)
        });
    }
    Dataset::from_examples(
        Provenance::new(format!("synthetic/{name}"), spec.seed),
        examples,
    )
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let vocab = build_vocab(spec);
    Ok(SyntheticCorpus {
        labeled: split(spec, &vocab, "labeled", "l", spec.n_labeled, true)?,
        unlabeled: split(spec, &vocab, "unlabeled", "u", spec.n_unlabeled, false)?,
        test: split(spec, &vocab, "test", "t", spec.n_test, true)?,
    })
}

/// The generating rule: `1` iff the text contains one of the cue phrases as a
/// contiguous token sequence.
pub fn cue_rule(text: &str, cue_lexicon: &[String]) -> Label {
    let tokens = tokenize(text);
    let hit = cue_lexicon.iter().any(|phrase| {
        let cue = tokenize(phrase);
        !cue.is_empty() && tokens.windows(cue.len()).any(|w| w == cue.as_slice())
    });
    Label::from(hit)
}
