//! JSON-lines helpers with line-numbered errors.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parses every non-blank line of `path` as `T`. Line numbers are 1-based.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Like [`read`] but keeps the 1-based line number of each record.
pub fn read_numbered<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, item));
    }
    Ok(out)
}

pub fn write<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Field names that carry sentence text in any of the supported record
/// schemas (NLI, triples, task files, retrieval files).
pub const TEXT_FIELDS: &[&str] = &[
    "premise",
    "hypothesis",
    "sentence1",
    "sentence2",
    "hard_neg",
    "text",
    "text_a",
    "text_b",
    "context",
    "question",
    "choices",
    "claim",
];

/// Every sentence-bearing string of every record in a JSON-lines file, in
/// document order. Labels, ids and other metadata fields are skipped.
pub fn collect_texts(path: &Path) -> Result<Vec<String>> {
    let values: Vec<serde_json::Value> = read(path)?;
    let mut out = Vec::new();
    for v in &values {
        let serde_json::Value::Object(obj) = v else {
            continue;
        };
        for &field in TEXT_FIELDS {
            match obj.get(field) {
                Some(serde_json::Value::String(s)) => out.push(s.clone()),
                Some(serde_json::Value::Array(items)) => out.extend(
                    items
                        .iter()
                        .filter_map(|x| x.as_str().map(str::to_owned)),
                ),
                _ => {}
            }
        }
    }
    Ok(out)
}
