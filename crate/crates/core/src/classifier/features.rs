//! Hashed bag of unigrams and bigrams.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const DEFAULT_DIM_LOG2: u32 = 18;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sparse count vector over `2^dim_log2` hashed feature slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// `(index, count)` pairs, sorted by index, counts ≥ 1.
    pub entries: Vec<(u32, u32)>,
    pub dim_log2: u32,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        1usize << self.dim_log2
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Unigram `u` hashes the token bytes; bigram `(a, b)` hashes `"a b"`.
/// Tokens never contain a space, so the two key spaces cannot alias before
/// the modulus.
pub fn featurize(text: &str, dim_log2: u32) -> FeatureVector {
    assert!((1..=31).contains(&dim_log2), "dim_log2 must lie in 1..=31");
    let mask = (1u64 << dim_log2) - 1;
    let tokens = tokenize(text);
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    let mut bump = |key: &[u8]| {
        *counts.entry((fnv1a64(key) & mask) as u32).or_insert(0) += 1;
    };
    for t in &tokens {
        bump(t.as_bytes());
    }
    let mut key = String::new();
    for pair in tokens.windows(2) {
        key.clear();
        key.push_str(&pair[0]);
        key.push(' ');
        key.push_str(&pair[1]);
        bump(key.as_bytes());
    }
    FeatureVector {
        entries: counts.into_iter().collect(),
        dim_log2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_is_empty_vector() {
        assert!(featurize("", 18).is_empty());
        assert!(featurize(" ,. ", 18).is_empty());
    }

    #[test]
    fn two_tokens_give_three_features() {
        let fv = featurize("a b", 18);
        let slots: Vec<u32> = ["a", "b", "a b"]
            .iter()
            .map(|k| (fnv1a64(k.as_bytes()) & ((1 << 18) - 1)) as u32)
            .collect();
        let mut distinct = slots.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 3, "hash collision at k = 18");
        assert_eq!(fv.len(), 3);
        assert!(fv.entries.iter().all(|&(_, c)| c == 1));
    }

    #[test]
    fn counts_repeat_tokens_and_ignore_case_and_punctuation() {
        let fv = featurize("Strike, strike!", 18);
        // "strike" twice plus bigram "strike strike"
        let total: u32 = fv.entries.iter().map(|&(_, c)| c).sum();
        assert_eq!(total, 3);
        assert_eq!(fv.len(), 2);
        assert_eq!(featurize("Strike, strike!", 18), featurize("strike STRIKE", 18));
    }

    #[test]
    fn indices_stay_in_range() {
        let fv = featurize("the quick brown fox jumps over the lazy dog", 4);
        assert!(fv.entries.iter().all(|&(i, c)| i < 16 && c >= 1));
        assert!(fv.entries.windows(2).all(|w| w[0].0 < w[1].0));
    }
}
