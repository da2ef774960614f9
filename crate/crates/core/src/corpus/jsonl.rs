//! Normalized JSONL form: one dialogue object per line.
//!
//! `save_jsonl` followed by `load_jsonl` is the identity on the normalized
//! form, and the bytes written are deterministic, which the manifest hashing
//! relies on.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::corpus::Dialogue;
use crate::error::{PipelineError, Result};

pub fn save_jsonl(dialogues: &[Dialogue], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in dialogues {
        let line = serde_json::to_string(d)
            .map_err(|e| PipelineError::Integrity(format!("serialize dialogue {}: {e}", d.id)))?;
        writeln!(w, "{line}").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    load_jsonl_with(path, None)
}

/// Load and validate; `expected_candidates` as in [`Dialogue::validate`].
pub fn load_jsonl_with(
    path: impl AsRef<Path>,
    expected_candidates: Option<usize>,
) -> Result<Vec<Dialogue>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut dialogues = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = serde_json::from_str(line).map_err(|e| PipelineError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        d.validate(expected_candidates).map_err(|e| match e {
            PipelineError::Integrity(msg) => PipelineError::Schema {
                line: idx + 1,
                message: msg,
            },
            other => other,
        })?;
        dialogues.push(d);
    }
    Ok(dialogues)
}
