use crate::error::{Error, Result};

pub const DEFAULT_MIN_CHARS: usize = 50;
pub const DEFAULT_MAX_CHARS: usize = 500;

/// Length in Unicode scalar values.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Rule-based sentence splitter.
///
/// A sentence ends at `.`, `!` or `?` when the terminator is followed by
/// whitespace and then an uppercase letter, or by the end of the text.
/// Abbreviations such as `Dr.` are split like any other terminator.
pub fn split_sentences(article_text: &str) -> Vec<String> {
    let text = article_text.trim();
    let mut sentences = Vec::new();
    if text.is_empty() {
        return sentences;
    }

    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (byte, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut k = i + 1;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let has_gap = k > i + 1;
            if k < chars.len() && has_gap && chars[k].1.is_uppercase() {
                sentences.push(text[start..byte + c.len_utf8()].to_owned());
                start = chars[k].0;
                i = k;
                continue;
            }
        }
        i += 1;
    }
    if start < text.len() {
        sentences.push(text[start..].to_owned());
    }
    sentences
}

/// Keeps sentences whose character count lies in `min_chars..=max_chars`.
pub fn filter_by_length<S: AsRef<str>>(
    sentences: &[S],
    min_chars: usize,
    max_chars: usize,
) -> Result<Vec<String>> {
    if min_chars > max_chars {
        return Err(Error::Argument(format!(
            "min_chars ({min_chars}) exceeds max_chars ({max_chars})"
        )));
    }
    Ok(sentences
        .iter()
        .map(AsRef::as_ref)
        .filter(|s| (min_chars..=max_chars).contains(&char_len(s)))
        .map(str::to_owned)
        .collect())
}
