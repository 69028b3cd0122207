use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Dataset, Example, Provenance};
use crate::error::{Error, Result};

/// Writes the provenance record on line 1 and one example per following line.
pub fn write_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    serde_json::to_writer(&mut out, &dataset.provenance).map_err(|e| io(e.into()))?;
    out.write_all(b"\n").map_err(io)?;
    for example in &dataset.examples {
        serde_json::to_writer(&mut out, example).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let header = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing provenance record".into(),
            })
        }
    };
    let provenance: Provenance = serde_json::from_str(&header).map_err(|e| Error::Parse {
        line: 1,
        message: format!("provenance: {e}"),
    })?;

    let mut examples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let example: Example = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        examples.push(example);
    }
    Dataset::from_examples(provenance, examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use proptest::prelude::*;

    fn roundtrip(d: &Dataset) -> Dataset {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_jsonl(d, &path).unwrap();
        read_jsonl(&path).unwrap()
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let d = Dataset::new(Provenance::new("empty", 3));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_jsonl(&d, &path).unwrap();
        let body = fs::read_to_string(&path).unwrap();
        assert_eq!(
            body,
            "{\"recipe\":\"empty\",\"seed\":3,\"threshold\":null,\"parent_ids\":[]}\n"
        );
        assert_eq!(read_jsonl(&path).unwrap(), d);
    }

    #[test]
    fn non_ascii_text_survives() {
        let mut d = Dataset::new(Provenance::new("x", 0));
        d.examples.push(
            Example::labeled("0", "Protesta en São Paulo — «huelga» 罷工 🚩", 1, Source::Original)
                .with_meta("note", "ü"),
        );
        assert_eq!(roundtrip(&d), d);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        fs::write(
            &path,
            "{\"recipe\":\"x\",\"seed\":0,\"threshold\":null,\"parent_ids\":[]}\n\
             {\"id\":\"0\",\"text\":\"a\",\"source\":\"original\"}\n\
             {\"id\":\"1\",\"text\":\n",
        )
        .unwrap();
        match read_jsonl(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn arb_example(i: usize) -> impl Strategy<Value = Example> {
        (
            "\\PC{1,40}",
            proptest::option::of(0u8..2),
            prop_oneof![
                Just(Source::Original),
                Just(Source::Augmented),
                Just(Source::Synthetic),
                Just(Source::Pseudo)
            ],
            0.95f64..=1.0,
            proptest::collection::btree_map("[a-z_]{1,8}", "\\PC{0,10}", 0..3),
        )
            .prop_map(move |(text, label, source, conf, meta)| Example {
                id: format!("ex-{i}"),
                text,
                label: if source == Source::Pseudo { Some(label.unwrap_or(1)) } else { label },
                source,
                confidence: (source == Source::Pseudo).then_some(conf),
                meta,
            })
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        (0usize..8, any::<u64>(), proptest::collection::vec("[a-z0-9]{1,6}", 0..3))
            .prop_flat_map(|(n, seed, parents)| {
                let examples: Vec<_> = (0..n).map(arb_example).collect();
                (examples, Just(seed), Just(parents))
            })
            .prop_map(|(examples, seed, parents)| {
                let mut provenance = Provenance::new("prop", seed).with_parents(parents);
                provenance.threshold = Some(0.9);
                Dataset { examples, provenance }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn jsonl_roundtrip_is_identity(d in arb_dataset()) {
            prop_assert_eq!(roundtrip(&d), d);
        }
    }
}
