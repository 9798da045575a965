//! JSONL dataset ingestion with per-line validation.
//!
//! Schema (one JSON object per line):
//! `{"id": string, "text": string, "label": 0|1, "categories": [string]?}`
//! where label 1 means harmful. Duplicate ids are a hard error rather
//! than a dedupe, since silently dropping records would change harm
//! ratios.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::domain::{ContentItem, HarmLabel};

use super::HarnessError;

#[derive(Deserialize)]
struct DatasetRecord {
    id: String,
    text: String,
    label: HarmLabel,
    #[serde(default)]
    categories: Vec<String>,
}

/// Loads and validates a JSONL dataset file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<ContentItem>, HarnessError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HarnessError::Io {
        message: format!("failed to open dataset {}: {e}", path.display()),
    })?;

    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| HarnessError::Io {
            message: format!("failed reading dataset line {line_no}: {e}"),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| HarnessError::Load {
                line: line_no,
                message: e.to_string(),
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(HarnessError::Load {
                line: line_no,
                message: format!("duplicate id '{}'", record.id),
            });
        }
        let item = ContentItem::new(
            record.id,
            record.text,
            Some(record.label),
            record.categories,
        )
        .map_err(|e| HarnessError::Load {
            line: line_no,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn write_file(contents: &str) -> NamedTempFile {
        let mut file = NamedTempFile::new().unwrap();
        file.write_all(contents.as_bytes()).unwrap();
        file
    }

    #[test]
    fn loads_valid_records() {
        let file = write_file(
            r#"{"id": "a", "text": "first", "label": 0}
{"id": "b", "text": "second", "label": 1, "categories": ["Sexual Harms"]}
"#,
        );
        let items = load_dataset(file.path()).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].label(), Some(HarmLabel::Harmless));
        assert_eq!(items[1].label(), Some(HarmLabel::Harmful));
        assert!(items[1].categories().contains("Sexual Harms"));
    }

    #[test]
    fn rejects_out_of_domain_label() {
        let file = write_file(r#"{"id": "a", "text": "x", "label": 2}"#);
        match load_dataset(file.path()).unwrap_err() {
            HarnessError::Load { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("invalid label 2"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_ids() {
        let file = write_file(
            r#"{"id": "a", "text": "x", "label": 0}
{"id": "a", "text": "y", "label": 1}
"#,
        );
        match load_dataset(file.path()).unwrap_err() {
            HarnessError::Load { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate id"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_field_and_malformed_json() {
        let missing = write_file(r#"{"id": "a", "label": 0}"#);
        assert!(matches!(
            load_dataset(missing.path()),
            Err(HarnessError::Load { line: 1, .. })
        ));
        let malformed = write_file("{not json}");
        assert!(matches!(
            load_dataset(malformed.path()),
            Err(HarnessError::Load { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_empty_text() {
        let file = write_file(r#"{"id": "a", "text": "   ", "label": 0}"#);
        assert!(matches!(
            load_dataset(file.path()),
            Err(HarnessError::Load { line: 1, .. })
        ));
    }

    #[test]
    fn skips_blank_lines() {
        let file = write_file("\n{\"id\": \"a\", \"text\": \"x\", \"label\": 0}\n\n");
        assert_eq!(load_dataset(file.path()).unwrap().len(), 1);
    }

    #[test]
    fn shipped_fixture_has_expected_composition() {
        let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("../../fixtures/sample_dataset.jsonl");
        let items = load_dataset(path).unwrap();
        assert_eq!(items.len(), 40);
        let harmless = items
            .iter()
            .filter(|i| i.label() == Some(HarmLabel::Harmless))
            .count();
        assert_eq!(harmless, 28);
        let seq = crate::domain::ContentSequence::new(items).unwrap();
        assert_eq!(crate::domain::count_harmless(&seq).unwrap(), 28);
    }
}
