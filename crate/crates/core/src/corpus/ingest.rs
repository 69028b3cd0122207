use std::fs;
use std::path::Path;

use super::{filter_by_length, split_sentences, Dataset, Example, Label, Provenance, Source};
use crate::error::{Error, Result};

/// Reads a UTF-8 CSV with a header row into a dataset of original examples.
///
/// Ids are the zero-based data-row index. Labels must be the literal `0` or
/// `1` after trimming.
pub fn load_labeled_table(
    path: impl AsRef<Path>,
    text_column: &str,
    label_column: &str,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);

    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
    };
    let text_idx = column(text_column)?;
    let label_idx = column(label_column)?;

    let mut examples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let text = record.get(text_idx).unwrap_or_default();
        let label = parse_label(record.get(label_idx).unwrap_or_default())
            .map_err(|message| Error::Value { row, message })?;
        if text.is_empty() {
            return Err(Error::Value {
                row,
                message: "empty text".into(),
            });
        }
        examples.push(Example::labeled(row.to_string(), text, label, Source::Original));
    }

    let provenance = Provenance::new("labeled_table", 0)
        .with_parents([path.display().to_string()]);
    Dataset::from_examples(provenance, examples)
}

fn parse_label(raw: &str) -> std::result::Result<Label, String> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(format!("label `{other}` is not 0 or 1")),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Schema(format!("{}: {e}", path.display())),
    }
}

/// Reads every `.txt` file of `dir` (one article per file, sorted by file
/// name), splits it into sentences and keeps those within the length bounds.
///
/// Example ids are `<file stem>:<sentence index after filtering>`.
pub fn load_article_dir(dir: impl AsRef<Path>, min_chars: usize, max_chars: usize) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    files.sort();

    let mut examples = Vec::new();
    for file in &files {
        let body = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let stem = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let kept = filter_by_length(&split_sentences(&body), min_chars, max_chars)?;
        for (i, sentence) in kept.into_iter().enumerate() {
            examples.push(Example::unlabeled(
                format!("{stem}:{i}"),
                sentence,
                Source::Original,
            ));
        }
    }

    let provenance = Provenance::new("article_dir", 0).with_parents([dir.display().to_string()]);
    Dataset::from_examples(provenance, examples)
}
