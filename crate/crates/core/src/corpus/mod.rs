//! Dialogue dataset model: raw-format parsing, a normalized JSONL form,
//! structural validation, and vocabulary construction.
//!
//! A [`Dialogue`] holds 3-5 persona sentences, the strictly alternating
//! utterance sequence (user speaks first), and one [`Turn`] per selection
//! point. A turn's context is the full utterance prefix ending in a user
//! utterance; truncation is the encoders' job, not the corpus'. Everything is
//! read-only after construction and safe to share across parallel readers.

mod jsonl;
mod raw;
pub mod tokenizer;
mod vocab;

pub use jsonl::{load_jsonl, save_jsonl};
pub use raw::{parse_raw, parse_raw_text, parse_raw_with, ParseOptions};
pub use vocab::{build_vocab, ReservedToken, Vocab};

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Default number of response candidates per turn (1 gold + 19 negatives).
pub const DEFAULT_CANDIDATES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Bot,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::User => Speaker::Bot,
            Speaker::Bot => Speaker::User,
        }
    }
}

/// Which persona file variant a dialogue came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaKind {
    SelfOriginal,
    SelfRevised,
    PartnerOriginal,
    PartnerRevised,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    /// Token ids, filled by [`attach_tokens`] once a vocabulary exists.
    #[serde(skip)]
    pub tokens: Vec<u32>,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Utterance {
            speaker,
            text: text.into(),
            tokens: Vec::new(),
        }
    }
}

/// The candidate responses offered at one turn, with the gold position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Turn {
    /// Number of utterances visible as context (prefix length). The prefix
    /// always ends in a user utterance.
    pub context_len: usize,
    pub candidates: Vec<String>,
    pub gold_index: usize,
}

impl Turn {
    pub fn negatives(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.candidates.len()).filter(move |&i| i != self.gold_index)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub persona_kind: PersonaKind,
    pub persona: Vec<String>,
    pub utterances: Vec<Utterance>,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Context prefix for a turn: the utterances the model may look at.
    pub fn context(&self, turn: &Turn) -> &[Utterance] {
        &self.utterances[..turn.context_len]
    }

    /// Structural invariants shared by the raw parser and the JSONL loader.
    ///
    /// `expected_candidates` restricts candidate-set size; pass `None` to
    /// allow any size >= 2 (config override for desk-scale fixtures).
    pub fn validate(&self, expected_candidates: Option<usize>) -> Result<()> {
        if !(3..=5).contains(&self.persona.len()) {
            return Err(PipelineError::Integrity(format!(
                "dialogue {}: persona has {} sentences, expected 3-5",
                self.id,
                self.persona.len()
            )));
        }
        if self.persona.iter().any(|p| p.trim().is_empty()) {
            return Err(PipelineError::Integrity(format!(
                "dialogue {}: empty persona sentence",
                self.id
            )));
        }
        let mut expected_speaker = Speaker::User;
        for (i, utt) in self.utterances.iter().enumerate() {
            if utt.text.trim().is_empty() {
                return Err(PipelineError::Integrity(format!(
                    "dialogue {}: utterance {} is empty",
                    self.id, i
                )));
            }
            if utt.speaker != expected_speaker {
                return Err(PipelineError::Integrity(format!(
                    "dialogue {}: speakers do not alternate at utterance {}",
                    self.id, i
                )));
            }
            expected_speaker = expected_speaker.other();
        }
        for (t, turn) in self.turns.iter().enumerate() {
            if turn.context_len == 0 || turn.context_len > self.utterances.len() {
                return Err(PipelineError::Integrity(format!(
                    "dialogue {}: turn {} has context_len {} out of range",
                    self.id, t, turn.context_len
                )));
            }
            if self.utterances[turn.context_len - 1].speaker != Speaker::User {
                return Err(PipelineError::Integrity(format!(
                    "dialogue {}: turn {} context does not end in a user utterance",
                    self.id, t
                )));
            }
            if let Some(n) = expected_candidates {
                if turn.candidates.len() != n {
                    return Err(PipelineError::Integrity(format!(
                        "dialogue {}: turn {} has {} candidates, expected {}",
                        self.id,
                        t,
                        turn.candidates.len(),
                        n
                    )));
                }
            } else if turn.candidates.len() < 2 {
                return Err(PipelineError::Integrity(format!(
                    "dialogue {}: turn {} has fewer than 2 candidates",
                    self.id, t
                )));
            }
            if turn.gold_index >= turn.candidates.len() {
                return Err(PipelineError::Integrity(format!(
                    "dialogue {}: turn {} gold_index {} out of range",
                    self.id, t, turn.gold_index
                )));
            }
        }
        Ok(())
    }
}

/// Fill `Utterance::tokens` for a whole dataset.
pub fn attach_tokens(dialogues: &mut [Dialogue], vocab: &Vocab) {
    for dialogue in dialogues {
        for utt in &mut dialogue.utterances {
            utt.tokens = vocab.encode(&utt.text);
        }
    }
}

/// Count context-candidate-set turns across a dataset.
pub fn total_turns(dialogues: &[Dialogue]) -> usize {
    dialogues.iter().map(|d| d.turns.len()).sum()
}
