//! Mined-concepts JSONL and the lookup store used by training/evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::concepts::{Concept, ConceptSet, ConceptSource};
use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MinedTurn {
    pub dialogue_id: String,
    pub turn: usize,
    pub set: ConceptSet,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConceptLine {
    dialogue_id: String,
    turn: usize,
    context_concepts: Vec<Entry>,
    response_concepts: Vec<Vec<Entry>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    s: String,
    score: f64,
}

fn to_entries(concepts: &[Concept]) -> Vec<Entry> {
    concepts
        .iter()
        .map(|c| Entry {
            s: c.surface.clone(),
            score: c.score,
        })
        .collect()
}

fn from_entries(entries: Vec<Entry>, source: ConceptSource) -> Vec<Concept> {
    entries
        .into_iter()
        .map(|e| Concept {
            surface: e.s,
            score: e.score,
            source,
        })
        .collect()
}

pub fn save_concepts(mined: &[MinedTurn], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for m in mined {
        let line = ConceptLine {
            dialogue_id: m.dialogue_id.clone(),
            turn: m.turn,
            context_concepts: to_entries(&m.set.context_concepts),
            response_concepts: m.set.response_concepts.iter().map(|c| to_entries(c)).collect(),
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| PipelineError::Integrity(format!("serialize concepts: {e}")))?;
        writeln!(w, "{json}").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn load_concepts(path: impl AsRef<Path>) -> Result<Vec<MinedTurn>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: ConceptLine = serde_json::from_str(raw).map_err(|e| PipelineError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(MinedTurn {
            dialogue_id: line.dialogue_id,
            turn: line.turn,
            set: ConceptSet {
                context_concepts: from_entries(line.context_concepts, ConceptSource::Context),
                response_concepts: line
                    .response_concepts
                    .into_iter()
                    .map(|e| from_entries(e, ConceptSource::Response))
                    .collect(),
            },
        });
    }
    Ok(out)
}

/// Keyed lookup over mined turns.
#[derive(Debug, Default, Clone)]
pub struct ConceptStore {
    map: BTreeMap<(String, usize), ConceptSet>,
}

impl ConceptStore {
    pub fn from_mined(mined: Vec<MinedTurn>) -> Self {
        let map = mined
            .into_iter()
            .map(|m| ((m.dialogue_id, m.turn), m.set))
            .collect();
        ConceptStore { map }
    }

    pub fn get(&self, dialogue_id: &str, turn: usize) -> Option<&ConceptSet> {
        self.map.get(&(dialogue_id.to_string(), turn))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
