//! Examples, datasets and the ways they get into and out of the pipeline.

mod ingest;
mod jsonl;
mod synthetic;
mod text;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{load_article_dir, load_labeled_table};
pub use jsonl::{read_jsonl, write_jsonl};
pub use synthetic::{cue_rule, generate_synthetic_corpus, SyntheticCorpus, SyntheticSpec};
pub use text::{char_len, filter_by_length, split_sentences, DEFAULT_MAX_CHARS, DEFAULT_MIN_CHARS};

/// Binary class label. `1` is the causal (positive) class.
pub type Label = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Original,
    Pseudo,
    Augmented,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Example {
    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: Label, source: Source) -> Self {
        Example {
            id: id.into(),
            text: text.into(),
            label: Some(label),
            source,
            confidence: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn unlabeled(id: impl Into<String>, text: impl Into<String>, source: Source) -> Self {
        Example {
            id: id.into(),
            text: text.into(),
            label: None,
            source,
            confidence: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_owned(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub recipe: String,
    pub seed: u64,
    pub threshold: Option<f64>,
    pub parent_ids: Vec<String>,
}

impl Provenance {
    pub fn new(recipe: impl Into<String>, seed: u64) -> Self {
        Provenance {
            recipe: recipe.into(),
            seed,
            threshold: None,
            parent_ids: Vec::new(),
        }
    }

    pub fn with_parents<I, S>(mut self, parents: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.parent_ids = parents.into_iter().map(Into::into).collect();
        self
    }
}

/// Ordered, id-unique collection of examples plus a record of how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(provenance: Provenance) -> Self {
        Dataset {
            examples: Vec::new(),
            provenance,
        }
    }

    pub fn from_examples(provenance: Provenance, examples: Vec<Example>) -> Result<Self> {
        let dataset = Dataset {
            examples,
            provenance,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.text.as_str()).collect()
    }

    /// Labels of every example; fails on the first unlabeled one.
    pub fn labels(&self) -> Result<Vec<Label>> {
        self.examples
            .iter()
            .map(|e| {
                e.label
                    .ok_or_else(|| Error::Data(format!("example `{}` has no label", e.id)))
            })
            .collect()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.examples
            .iter()
            .filter(|e| e.label == Some(label))
            .count()
    }

    /// Checks the per-example and per-dataset invariants.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.examples.len());
        for e in &self.examples {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Data(format!("duplicate example id `{}`", e.id)));
            }
            if e.text.is_empty() {
                return Err(Error::Data(format!("example `{}` has empty text", e.id)));
            }
            if let Some(label) = e.label {
                if label > 1 {
                    return Err(Error::Data(format!(
                        "example `{}` has non-binary label {label}",
                        e.id
                    )));
                }
            }
            match (e.source, e.confidence) {
                (Source::Pseudo, None) => {
                    return Err(Error::Data(format!(
                        "pseudo example `{}` carries no confidence",
                        e.id
                    )))
                }
                (Source::Pseudo, Some(c)) => {
                    if !(0.0..=1.0).contains(&c) {
                        return Err(Error::Data(format!(
                            "example `{}` confidence {c} outside [0, 1]",
                            e.id
                        )));
                    }
                    if let Some(t) = self.provenance.threshold {
                        if c <= t {
                            return Err(Error::Data(format!(
                                "pseudo example `{}` confidence {c} not above threshold {t}",
                                e.id
                            )));
                        }
                    }
                }
                (_, Some(_)) => {
                    return Err(Error::Data(format!(
                        "non-pseudo example `{}` carries a confidence",
                        e.id
                    )))
                }
                (_, None) => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_ids_are_rejected() {
        let examples = vec![
            Example::labeled("a", "one", 1, Source::Original),
            Example::labeled("a", "two", 0, Source::Original),
        ];
        assert!(matches!(
            Dataset::from_examples(Provenance::new("t", 0), examples),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn pseudo_confidence_must_clear_threshold() {
        let mut prov = Provenance::new("split", 0);
        prov.threshold = Some(0.9);
        let mut e = Example::labeled("p", "text", 1, Source::Pseudo);
        e.confidence = Some(0.9);
        assert!(Dataset::from_examples(prov.clone(), vec![e.clone()]).is_err());
        e.confidence = Some(0.95);
        assert!(Dataset::from_examples(prov, vec![e]).is_ok());
    }

    #[test]
    fn labels_require_every_label() {
        let d = Dataset {
            examples: vec![Example::unlabeled("u", "x", Source::Original)],
            provenance: Provenance::new("t", 0),
        };
        assert!(matches!(d.labels(), Err(Error::Data(_))));
    }
}
