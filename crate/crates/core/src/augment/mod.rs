//! Label-preserving data augmentation: round-trip translation, random-word
//! fill-mask and entity fill-mask.
//!
//! Every augmented example keeps its parent's label and records its lineage
//! in `meta` (`parent_id`, `method`, and one of `pivot`, `masked_index` or
//! `entity_spans`). Each original is followed directly by its variants.

mod mock;

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example, Provenance, Source};
use crate::error::{Error, Result};
use crate::seed;

pub use mock::MockProvider;

pub const FILL_MASK_TOP_K: usize = 3;
pub const NER_COPIES: usize = 3;
pub const DEFAULT_PIVOTS: [&str; 2] = ["de", "ru"];
const SOURCE_LANG: &str = "en";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskCandidate {
    pub token: String,
    pub score: f64,
}

/// Character-offset span, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

/// The three model capabilities augmentation needs.
pub trait AugmentProvider: Send + Sync {
    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>>;
    /// Up to `top_k` replacements for the character span, best first.
    fn fill_mask(&self, text: &str, span: (usize, usize), top_k: usize) -> Result<Vec<MaskCandidate>>;
    fn ner(&self, text: &str) -> Result<Vec<EntitySpan>>;
}

/// Checks bounds and pairwise disjointness of entity spans.
pub fn validate_spans(spans: &[EntitySpan], text_chars: usize) -> Result<()> {
    for s in spans {
        if s.start >= s.end || s.end > text_chars {
            return Err(Error::Validation(format!(
                "entity span {}..{} invalid for text of {text_chars} characters",
                s.start, s.end
            )));
        }
    }
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    if let Some(w) = sorted.windows(2).find(|w| w[1].start < w[0].end) {
        return Err(Error::Validation(format!(
            "entity spans {}..{} and {}..{} overlap",
            w[0].start, w[0].end, w[1].start, w[1].end
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AugmentOptions {
    /// Skip items whose provider call fails (recorded in the original's
    /// `meta`) instead of aborting.
    pub skip_failures: bool,
}

fn byte_offset(text: &str, char_idx: usize) -> usize {
    text.char_indices()
        .nth(char_idx)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

/// Replaces character spans (assumed disjoint) with the given strings.
fn replace_spans(text: &str, replacements: &[((usize, usize), &str)]) -> String {
    let mut ordered: Vec<_> = replacements
        .iter()
        .map(|&((s, e), r)| (byte_offset(text, s), byte_offset(text, e), r))
        .collect();
    ordered.sort_by_key(|&(s, _, _)| std::cmp::Reverse(s));
    let mut out = text.to_owned();
    for (s, e, r) in ordered {
        out.replace_range(s..e, r);
    }
    out
}

/// Whitespace tokens as `(char_start, char_end)` spans.
fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
        n = i + 1;
    }
    if let Some(s) = start {
        spans.push((s, n));
    }
    spans
}

fn char_slice(text: &str, (s, e): (usize, usize)) -> &str {
    &text[byte_offset(text, s)..byte_offset(text, e)]
}

fn item_error(index: usize, example: &Example, source: Error) -> Error {
    Error::Item {
        index,
        id: example.id.clone(),
        source: Box::new(source),
    }
}

fn augmented(parent: &Example, suffix: String, text: String, method: &str) -> Example {
    Example {
        id: format!("{}+{suffix}", parent.id),
        text,
        label: parent.label,
        source: Source::Augmented,
        confidence: None,
        meta: Default::default(),
    }
    .with_meta("parent_id", parent.id.clone())
    .with_meta("method", method)
}

fn require_labels(dataset: &Dataset) -> Result<()> {
    dataset.labels().map(|_| ())
}

fn derived_provenance(dataset: &Dataset, recipe: &str, seed: u64) -> Provenance {
    Provenance::new(recipe, seed).with_parents([dataset.provenance.recipe.clone()])
}

/// Translates texts, falling back to one call per item when the batch call
/// fails so the failing item can be named.
fn translate_items(
    provider: &dyn AugmentProvider,
    texts: &[String],
    src: &str,
    tgt: &str,
) -> Vec<Result<String>> {
    match provider.translate(texts, src, tgt) {
        Ok(out) if out.len() == texts.len() => out.into_iter().map(Ok).collect(),
        _ => texts
            .iter()
            .map(|t| {
                provider
                    .translate(std::slice::from_ref(t), src, tgt)
                    .and_then(|mut v| {
                        if v.len() == 1 {
                            Ok(v.remove(0))
                        } else {
                            Err(Error::protocol("texts", "expected one translation"))
                        }
                    })
            })
            .collect(),
    }
}

/// Round-trip translation `en → pivot → en`, one variant per pivot.
pub fn seq2seq_augment(
    dataset: &Dataset,
    provider: &dyn AugmentProvider,
    pivots: &[&str],
    options: AugmentOptions,
) -> Result<Dataset> {
    require_labels(dataset)?;
    let texts: Vec<String> = dataset.examples.iter().map(|e| e.text.clone()).collect();

    // per pivot, per example: round-trip text or error
    let mut round_trips: Vec<Vec<Result<String>>> = Vec::with_capacity(pivots.len());
    for &pivot in pivots {
        let forward = translate_items(provider, &texts, SOURCE_LANG, pivot);
        let ok_idx: Vec<usize> = (0..texts.len()).filter(|&i| forward[i].is_ok()).collect();
        let ok_texts: Vec<String> = ok_idx
            .iter()
            .map(|&i| forward[i].as_ref().unwrap().clone())
            .collect();
        let mut back = translate_items(provider, &ok_texts, pivot, SOURCE_LANG).into_iter();
        let mut merged = Vec::with_capacity(texts.len());
        for f in forward {
            merged.push(match f {
                Ok(_) => back.next().expect("one back translation per forward success"),
                Err(e) => Err(e),
            });
        }
        round_trips.push(merged);
    }

    let mut examples = Vec::with_capacity(dataset.len() * (1 + pivots.len()));
    for (i, original) in dataset.examples.iter().enumerate() {
        let mut variants = Vec::new();
        let mut skipped = Vec::new();
        for (p, &pivot) in pivots.iter().enumerate() {
            match std::mem::replace(&mut round_trips[p][i], Ok(String::new())) {
                Ok(text) => variants.push(
                    augmented(original, format!("bt-{pivot}"), text, "seq2seq").with_meta("pivot", pivot),
                ),
                Err(e) if options.skip_failures => skipped.push(format!("{pivot}: {e}")),
                Err(e) => return Err(item_error(i, original, e)),
            }
        }
        let mut original = original.clone();
        if !skipped.is_empty() {
            original = original.with_meta("augment_skipped", skipped.join("; "));
        }
        examples.push(original);
        examples.extend(variants);
    }
    Dataset::from_examples(derived_provenance(dataset, "augment/seq2seq", 0), examples)
}

/// Masks one uniformly chosen word per sentence and emits one variant per
/// fill-mask candidate. Pure punctuation tokens are never chosen unless the
/// sentence has nothing else.
pub fn random_fillmask_augment(
    dataset: &Dataset,
    provider: &dyn AugmentProvider,
    seed: u64,
    options: AugmentOptions,
) -> Result<Dataset> {
    require_labels(dataset)?;
    let results: Vec<Result<(usize, Vec<MaskCandidate>)>> = dataset
        .examples
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let spans = token_spans(&e.text);
            if spans.is_empty() {
                return Err(Error::Data("text has no tokens".into()));
            }
            let words: Vec<usize> = (0..spans.len())
                .filter(|&t| char_slice(&e.text, spans[t]).chars().any(char::is_alphanumeric))
                .collect();
            let eligible = if words.is_empty() { (0..spans.len()).collect() } else { words };
            let mut rng = seed::rng(seed::derive(seed, i as u64));
            let masked = eligible[rng.random_range(0..eligible.len())];
            let candidates = provider.fill_mask(&e.text, spans[masked], FILL_MASK_TOP_K)?;
            Ok((masked, candidates))
        })
        .collect();

    let mut examples = Vec::with_capacity(dataset.len() * (1 + FILL_MASK_TOP_K));
    for ((i, original), result) in dataset.examples.iter().enumerate().zip(results) {
        let (masked, candidates) = match result {
            Ok(r) => r,
            Err(e) if options.skip_failures => {
                examples.push(original.clone().with_meta("augment_skipped", e.to_string()));
                continue;
            }
            Err(e) => return Err(item_error(i, original, e)),
        };
        let span = token_spans(&original.text)[masked];
        if candidates.is_empty() {
            examples.push(original.clone().with_meta("fillmask_candidates", "0"));
            continue;
        }
        examples.push(original.clone());
        for (rank, c) in candidates.iter().take(FILL_MASK_TOP_K).enumerate() {
            let text = replace_spans(&original.text, &[(span, c.token.as_str())]);
            examples.push(
                augmented(original, format!("fm-{rank}"), text, "fillmask")
                    .with_meta("masked_index", masked.to_string()),
            );
        }
    }
    Dataset::from_examples(derived_provenance(dataset, "augment/fillmask", seed), examples)
}

/// Replaces every named entity with fill-mask candidates; copy `j` uses, for
/// each entity, its best candidate not used by copies `0..j`. When an entity
/// runs out of distinct candidates the last one is reused and the copy's
/// `meta` records it under `reused_candidates`.
pub fn ner_fillmask_augment(
    dataset: &Dataset,
    provider: &dyn AugmentProvider,
    options: AugmentOptions,
) -> Result<Dataset> {
    require_labels(dataset)?;
    let results: Vec<Result<Vec<(EntitySpan, Vec<String>)>>> = dataset
        .examples
        .par_iter()
        .map(|e| {
            let entities = provider.ner(&e.text)?;
            validate_spans(&entities, e.text.chars().count())?;
            entities
                .into_iter()
                .map(|span| {
                    let candidates = provider.fill_mask(&e.text, (span.start, span.end), FILL_MASK_TOP_K)?;
                    let mut seen = BTreeSet::new();
                    let distinct = candidates
                        .into_iter()
                        .map(|c| c.token)
                        .filter(|t| seen.insert(t.clone()))
                        .collect();
                    Ok((span, distinct))
                })
                .collect()
        })
        .collect();

    let mut examples = Vec::with_capacity(dataset.len() * (1 + NER_COPIES));
    for ((i, original), result) in dataset.examples.iter().enumerate().zip(results) {
        let entities = match result {
            Ok(r) => r,
            Err(e) if options.skip_failures => {
                examples.push(original.clone().with_meta("augment_skipped", e.to_string()));
                continue;
            }
            Err(e) => return Err(item_error(i, original, e)),
        };
        examples.push(original.clone());
        if entities.is_empty() {
            continue;
        }
        let spans_meta = entities
            .iter()
            .map(|(s, _)| format!("{}-{}:{}", s.start, s.end, s.kind))
            .collect::<Vec<_>>()
            .join(";");
        for copy in 0..NER_COPIES {
            let mut reused = Vec::new();
            let replacements: Vec<((usize, usize), &str)> = entities
                .iter()
                .enumerate()
                .map(|(k, (span, distinct))| {
                    let range = (span.start, span.end);
                    let token = match distinct.get(copy).or_else(|| distinct.last()) {
                        Some(t) => {
                            if copy >= distinct.len() {
                                reused.push(k.to_string());
                            }
                            t.as_str()
                        }
                        None => {
                            reused.push(k.to_string());
                            char_slice(&original.text, range)
                        }
                    };
                    (range, token)
                })
                .collect();
            let text = replace_spans(&original.text, &replacements);
            let mut ex = augmented(original, format!("ner-{copy}"), text, "ner")
                .with_meta("entity_spans", spans_meta.clone());
            if !reused.is_empty() {
                ex = ex.with_meta("reused_candidates", reused.join(","));
            }
            examples.push(ex);
        }
    }
    Dataset::from_examples(derived_provenance(dataset, "augment/ner", 0), examples)
}
