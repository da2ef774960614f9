//! Annotation JSONL: the replay format for offline-produced annotations.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotationRecord, EmotionTag, EntailLabel};
use crate::error::{PipelineError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationLine {
    dialogue_id: String,
    emotions: Vec<EmotionEntry>,
    entailment: Vec<EntailEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmotionEntry {
    utt: usize,
    label: String,
    conf: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntailEntry {
    src: Source,
    idx: usize,
    turn: usize,
    cand: usize,
    label: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Source {
    Utt,
    Persona,
}

pub fn save_annotations(records: &[AnnotationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for record in records {
        let line = AnnotationLine {
            dialogue_id: record.dialogue_id.clone(),
            emotions: record
                .emotions
                .iter()
                .enumerate()
                .map(|(utt, tag)| EmotionEntry {
                    utt,
                    label: tag.label.clone(),
                    conf: tag.confidence,
                })
                .collect(),
            entailment: record
                .utterance_entailment
                .iter()
                .map(|(&(turn, idx, cand), &label)| EntailEntry {
                    src: Source::Utt,
                    idx,
                    turn,
                    cand,
                    label: label.as_str().to_string(),
                })
                .chain(record.persona_entailment.iter().map(
                    |(&(turn, idx, cand), &label)| EntailEntry {
                        src: Source::Persona,
                        idx,
                        turn,
                        cand,
                        label: label.as_str().to_string(),
                    },
                ))
                .collect(),
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| PipelineError::Integrity(format!("serialize annotations: {e}")))?;
        writeln!(w, "{json}").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: AnnotationLine = serde_json::from_str(raw).map_err(|e| PipelineError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let mut record = AnnotationRecord {
            dialogue_id: line.dialogue_id,
            emotions: Vec::new(),
            utterance_entailment: Default::default(),
            persona_entailment: Default::default(),
        };
        let mut emotions = line.emotions;
        emotions.sort_by_key(|e| e.utt);
        for (expect, entry) in emotions.iter().enumerate() {
            if entry.utt != expect {
                return Err(PipelineError::Schema {
                    line: idx + 1,
                    message: format!("field emotions: utterance indices not dense at {}", entry.utt),
                });
            }
            record.emotions.push(EmotionTag {
                label: entry.label.clone(),
                confidence: entry.conf,
            });
        }
        for entry in line.entailment {
            let label = EntailLabel::parse(&entry.label).ok_or_else(|| PipelineError::Schema {
                line: idx + 1,
                message: format!("field entailment.label: unknown value {:?}", entry.label),
            })?;
            let key = (entry.turn, entry.idx, entry.cand);
            match entry.src {
                Source::Utt => record.utterance_entailment.insert(key, label),
                Source::Persona => record.persona_entailment.insert(key, label),
            };
        }
        records.push(record);
    }
    Ok(records)
}
