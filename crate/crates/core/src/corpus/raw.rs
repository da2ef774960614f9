//! Parser for the distributed plain-text dialogue format.
//!
//! Each line starts with a 1-based number that resets to 1 at every new
//! dialogue. Persona lines carry "your persona:" or "partner's persona:";
//! dialogue lines carry tab-separated fields: user utterance, bot utterance,
//! an unused field, and "|"-separated candidate responses. The bot utterance
//! is the gold response and must appear among the candidates.

use std::fs;
use std::path::Path;

use crate::corpus::{Dialogue, PersonaKind, Speaker, Turn, Utterance, DEFAULT_CANDIDATES};
use crate::error::{PipelineError, Result};

#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Candidate-set size enforced per turn; `None` disables the check.
    pub expected_candidates: Option<usize>,
    /// Overrides the persona kind inferred from the file name.
    pub persona_kind: Option<PersonaKind>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            expected_candidates: Some(DEFAULT_CANDIDATES),
            persona_kind: None,
        }
    }
}

/// Parse a raw split file with default options.
pub fn parse_raw(path: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    parse_raw_with(path, &ParseOptions::default())
}

pub fn parse_raw_with(path: impl AsRef<Path>, opts: &ParseOptions) -> Result<Vec<Dialogue>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let kind = opts
        .persona_kind
        .unwrap_or_else(|| kind_from_name(path))
        ;
    parse_raw_text(&text, kind, opts.expected_candidates)
}

/// Parse raw-format text. Exposed for fixtures and the JSONL round-trip tests.
pub fn parse_raw_text(
    text: &str,
    kind: PersonaKind,
    expected_candidates: Option<usize>,
) -> Result<Vec<Dialogue>> {
    let mut dialogues = Vec::new();
    let mut builder: Option<DialogueBuilder> = None;
    let mut prev_number = 0usize;
    let mut partial = 0usize;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (number, rest) = split_line_number(line, line_no)?;
        if number == 1 {
            if let Some(b) = builder.take() {
                flush(b, kind, expected_candidates, &mut dialogues, &mut partial)?;
            }
            builder = Some(DialogueBuilder::new(dialogues.len() + partial));
        } else if number != prev_number + 1 {
            return Err(PipelineError::Parse {
                line: line_no,
                message: format!(
                    "line number {} does not follow {} (expected {} or 1)",
                    number,
                    prev_number,
                    prev_number + 1
                ),
            });
        }
        prev_number = number;

        let b = builder.as_mut().ok_or_else(|| PipelineError::Parse {
            line: line_no,
            message: "dialogue does not start at line number 1".into(),
        })?;

        if let Some(p) = rest.strip_prefix("your persona:") {
            b.push_persona(true, p.trim(), line_no)?;
        } else if let Some(p) = rest.strip_prefix("partner's persona:") {
            b.push_persona(false, p.trim(), line_no)?;
        } else {
            b.push_dialogue_line(rest, line_no)?;
        }
    }
    if let Some(b) = builder.take() {
        flush(b, kind, expected_candidates, &mut dialogues, &mut partial)?;
    }
    if partial > 0 {
        log::warn!("dropped {partial} dialogue(s) without a complete turn");
    }
    Ok(dialogues)
}

fn split_line_number(line: &str, line_no: usize) -> Result<(usize, &str)> {
    let (head, rest) = line.split_once(' ').ok_or_else(|| PipelineError::Parse {
        line: line_no,
        message: "missing space after line number".into(),
    })?;
    let number: usize = head.parse().map_err(|_| PipelineError::Parse {
        line: line_no,
        message: format!("malformed line number {head:?}"),
    })?;
    if number == 0 {
        return Err(PipelineError::Parse {
            line: line_no,
            message: "line numbers are 1-based".into(),
        });
    }
    Ok((number, rest))
}

fn flush(
    b: DialogueBuilder,
    kind: PersonaKind,
    expected_candidates: Option<usize>,
    out: &mut Vec<Dialogue>,
    partial: &mut usize,
) -> Result<()> {
    match b.finish(kind)? {
        Some(d) => {
            d.validate(expected_candidates)?;
            out.push(d);
        }
        None => *partial += 1,
    }
    Ok(())
}

fn kind_from_name(path: &Path) -> PersonaKind {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    let revised = name.contains("revised");
    if name.contains("other") || name.contains("partner") {
        if revised {
            PersonaKind::PartnerRevised
        } else {
            PersonaKind::PartnerOriginal
        }
    } else if revised {
        PersonaKind::SelfRevised
    } else {
        PersonaKind::SelfOriginal
    }
}

struct DialogueBuilder {
    ordinal: usize,
    self_persona: Vec<String>,
    partner_persona: Vec<String>,
    utterances: Vec<Utterance>,
    turns: Vec<Turn>,
}

impl DialogueBuilder {
    fn new(ordinal: usize) -> Self {
        DialogueBuilder {
            ordinal,
            self_persona: Vec::new(),
            partner_persona: Vec::new(),
            utterances: Vec::new(),
            turns: Vec::new(),
        }
    }

    fn push_persona(&mut self, is_self: bool, text: &str, line_no: usize) -> Result<()> {
        if !self.utterances.is_empty() {
            return Err(PipelineError::Parse {
                line: line_no,
                message: "persona line after dialogue lines".into(),
            });
        }
        if is_self {
            self.self_persona.push(text.to_string());
        } else {
            self.partner_persona.push(text.to_string());
        }
        Ok(())
    }

    fn push_dialogue_line(&mut self, rest: &str, line_no: usize) -> Result<()> {
        let fields: Vec<&str> = rest.split('\t').collect();
        if fields.len() < 4 {
            return Err(PipelineError::Parse {
                line: line_no,
                message: format!(
                    "dialogue line has {} tab-separated fields, expected 4",
                    fields.len()
                ),
            });
        }
        let user = fields[0].trim();
        let bot = fields[1].trim();
        let candidates: Vec<String> = fields[3]
            .split('|')
            .map(|c| c.trim().to_string())
            .collect();
        let gold_index = candidates
            .iter()
            .position(|c| c == bot)
            .ok_or_else(|| {
                PipelineError::Integrity(format!(
                    "line {line_no}: gold response not found among candidates"
                ))
            })?;

        self.utterances.push(Utterance::new(Speaker::User, user));
        self.turns.push(Turn {
            context_len: self.utterances.len(),
            candidates,
            gold_index,
        });
        self.utterances.push(Utterance::new(Speaker::Bot, bot));
        Ok(())
    }

    fn finish(self, kind: PersonaKind) -> Result<Option<Dialogue>> {
        if self.turns.is_empty() {
            return Ok(None);
        }
        let persona = if !self.self_persona.is_empty() {
            if !self.partner_persona.is_empty() {
                log::warn!("dialogue {}: both persona kinds present, keeping self", self.ordinal);
            }
            self.self_persona
        } else {
            self.partner_persona
        };
        Ok(Some(Dialogue {
            id: format!("{:06}", self.ordinal),
            persona_kind: kind,
            persona,
            utterances: self.utterances,
            turns: self.turns,
        }))
    }
}
