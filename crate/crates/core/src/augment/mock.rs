use super::{token_spans, AugmentProvider, EntitySpan, MaskCandidate};
use crate::classifier::features::fnv1a64;
use crate::error::{Error, Result};

const CANDIDATE_POOL: [&str; 16] = [
    "officials", "workers", "students", "crowds", "police", "farmers", "residents", "unions",
    "activists", "traders", "drivers", "nurses", "teachers", "miners", "voters", "youths",
];
const SCORES: [f64; 3] = [0.6, 0.25, 0.1];

/// Deterministic stand-in for real translation, fill-mask and NER models.
///
/// * translate: rotate the whitespace tokens left by one and append `[tgt]`;
/// * fill_mask: three distinct words from a fixed pool, chosen by a hash of
///   the text with the span replaced by `<mask>`, scored 0.6 / 0.25 / 0.1;
/// * ner: every non-initial whitespace token starting with an uppercase
///   letter, minus surrounding punctuation, as kind `ENT`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockProvider {
    /// Cap on fill-mask candidates returned (at most 3).
    pub max_candidates: usize,
}

impl Default for MockProvider {
    fn default() -> Self {
        MockProvider { max_candidates: 3 }
    }
}

impl AugmentProvider for MockProvider {
    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>> {
        if src == tgt {
            return Err(Error::Argument(format!("source and target language are both `{src}`")));
        }
        Ok(texts
            .iter()
            .map(|t| {
                let mut tokens: Vec<&str> = t.split_whitespace().collect();
                if !tokens.is_empty() {
                    tokens.rotate_left(1);
                }
                tokens.push("");
                let mut out = tokens.join(" ");
                out.push_str(&format!("[{tgt}]"));
                out
            })
            .collect())
    }

    fn fill_mask(&self, text: &str, span: (usize, usize), top_k: usize) -> Result<Vec<MaskCandidate>> {
        let (start, end) = span;
        let n = text.chars().count();
        if start >= end || end > n {
            return Err(Error::Argument(format!("span {start}..{end} outside text of {n} characters")));
        }
        let context: String = text
            .chars()
            .take(start)
            .chain("<mask>".chars())
            .chain(text.chars().skip(end))
            .collect();
        let h = fnv1a64(context.as_bytes()) as usize;
        let k = top_k.min(self.max_candidates).min(SCORES.len());
        // stride 5 is coprime with the pool size, so the picks are distinct
        Ok((0..k)
            .map(|j| MaskCandidate {
                token: CANDIDATE_POOL[(h + 5 * j) % CANDIDATE_POOL.len()].to_owned(),
                score: SCORES[j],
            })
            .collect())
    }

    fn ner(&self, text: &str) -> Result<Vec<EntitySpan>> {
        let chars: Vec<char> = text.chars().collect();
        Ok(token_spans(text)
            .into_iter()
            .skip(1)
            .filter_map(|(mut s, mut e)| {
                while s < e && !chars[s].is_alphanumeric() {
                    s += 1;
                }
                while e > s && !chars[e - 1].is_alphanumeric() {
                    e -= 1;
                }
                (s < e && chars[s].is_uppercase()).then(|| EntitySpan {
                    start: s,
                    end: e,
                    kind: "ENT".into(),
                })
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translation_is_deterministic_rotation() {
        let m = MockProvider::default();
        let out = m.translate(&["a b c".to_owned()], "en", "de").unwrap();
        assert_eq!(out, vec!["b c a [de]"]);
        assert_eq!(m.translate(&[String::new()], "en", "de").unwrap(), vec!["[de]"]);
    }

    #[test]
    fn fill_mask_depends_on_context_only() {
        let m = MockProvider::default();
        let a = m.fill_mask("the crowd marched", (4, 9), 3).unwrap();
        let b = m.fill_mask("the group marched", (4, 9), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a.windows(2).all(|w| w[0].score > w[1].score && w[0].token != w[1].token));
        assert_eq!(m.fill_mask("abc", (0, 1), 1).unwrap().len(), 1);
    }

    #[test]
    fn ner_finds_capitalized_non_initial_tokens() {
        let spans = MockProvider::default().ner("Protests in Paris, (Lyon) and nice").unwrap();
        let got: Vec<_> = spans.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(got, vec![(12, 17), (20, 24)]);
    }
}
