//! Vocabulary with a reserved-token prefix.
//!
//! Reserved ids occupy a contiguous prefix starting at 0 = [PAD]: the
//! structural specials, one tag token per emotion label, and one per
//! entailment label. Content tokens follow in first-occurrence order.
//! Because the tokenizer splits brackets off, no tokenized text can ever
//! collide with a reserved token string.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenizer::tokenize, Dialogue};
use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReservedToken {
    Pad,
    Unk,
    Cls,
    Sep,
    Eou,
    Eop,
    /// Placeholder row for empty concept lists.
    Noc,
}

impl ReservedToken {
    pub const ALL: [ReservedToken; 7] = [
        ReservedToken::Pad,
        ReservedToken::Unk,
        ReservedToken::Cls,
        ReservedToken::Sep,
        ReservedToken::Eou,
        ReservedToken::Eop,
        ReservedToken::Noc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReservedToken::Pad => "[PAD]",
            ReservedToken::Unk => "[UNK]",
            ReservedToken::Cls => "[CLS]",
            ReservedToken::Sep => "[SEP]",
            ReservedToken::Eou => "[EOU]",
            ReservedToken::Eop => "[EOP]",
            ReservedToken::Noc => "[NOC]",
        }
    }
}

pub const ENTAIL_LABELS: [&str; 3] = ["entailment", "neutral", "contradiction"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, u32>,
    reserved_len: u32,
    emotion_labels: Vec<String>,
}

impl Vocab {
    /// Assemble a vocabulary from reserved tokens plus every corpus token
    /// with frequency >= `min_count`. `emotion_labels` supplies the [Emo_*]
    /// tag set; it must contain "neutral".
    pub fn build(dialogues: &[Dialogue], min_count: usize, emotion_labels: &[String]) -> Vocab {
        let mut tokens: Vec<String> = Vec::new();
        for r in ReservedToken::ALL {
            tokens.push(r.as_str().to_string());
        }
        for label in emotion_labels {
            tokens.push(format!("[Emo_{label}]"));
        }
        for label in ENTAIL_LABELS {
            tokens.push(format!("[Entail_{label}]"));
        }
        let reserved_len = tokens.len() as u32;

        // Content tokens, first-occurrence order.
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        let mut count_text = |text: &str| {
            for tok in tokenize(text) {
                match counts.get_mut(&tok) {
                    Some(c) => *c += 1,
                    None => {
                        counts.insert(tok.clone(), 1);
                        order.push(tok);
                    }
                }
            }
        };
        for d in dialogues {
            for p in &d.persona {
                count_text(p);
            }
            for u in &d.utterances {
                count_text(&u.text);
            }
            for t in &d.turns {
                for c in &t.candidates {
                    count_text(c);
                }
            }
        }
        for tok in order {
            if counts[&tok] >= min_count {
                tokens.push(tok);
            }
        }

        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab {
            tokens,
            ids,
            reserved_len,
            emotion_labels: emotion_labels.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn reserved_len(&self) -> usize {
        self.reserved_len as usize
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn reserved(&self, r: ReservedToken) -> u32 {
        self.ids[r.as_str()]
    }

    pub fn emotion_tag(&self, label: &str) -> Option<u32> {
        self.ids.get(&format!("[Emo_{label}]")).copied()
    }

    pub fn entail_tag(&self, label: &str) -> Option<u32> {
        self.ids.get(&format!("[Entail_{label}]")).copied()
    }

    pub fn emotion_labels(&self) -> &[String] {
        &self.emotion_labels
    }

    /// Tokenize and map to ids, unknown tokens collapsing to [UNK].
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let unk = self.reserved(ReservedToken::Unk);
        tokenize(text)
            .into_iter()
            .map(|t| self.ids.get(&t).copied().unwrap_or(unk))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)
            .map_err(|e| PipelineError::Integrity(format!("serialize vocab: {e}")))?;
        fs::write(path, json).map_err(|e| PipelineError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocab> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut vocab: Vocab = serde_json::from_str(&text).map_err(|e| PipelineError::Schema {
            line: 1,
            message: format!("vocab file: {e}"),
        })?;
        vocab.ids = vocab
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if vocab.ids.len() != vocab.tokens.len() {
            return Err(PipelineError::Integrity(
                "vocab contains duplicate tokens".into(),
            ));
        }
        Ok(vocab)
    }
}

/// See [`Vocab::build`].
pub fn build_vocab(dialogues: &[Dialogue], min_count: usize, emotion_labels: &[String]) -> Vocab {
    Vocab::build(dialogues, min_count, emotion_labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Speaker, Turn, Utterance};
    use crate::corpus::PersonaKind;

    fn labels() -> Vec<String> {
        vec!["curiosity".to_string(), "neutral".to_string()]
    }

    fn corpus_of(texts: &[&str]) -> Vec<Dialogue> {
        // One dialogue per text, carried in the user utterance.
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Dialogue {
                id: format!("{i:06}"),
                persona_kind: PersonaKind::SelfOriginal,
                persona: vec!["x".into(), "x".into(), "x".into()],
                utterances: vec![
                    Utterance::new(Speaker::User, *t),
                    Utterance::new(Speaker::Bot, "x"),
                ],
                turns: vec![Turn {
                    context_len: 1,
                    candidates: vec!["x".into(), "y".into()],
                    gold_index: 0,
                }],
            })
            .collect()
    }

    #[test]
    fn min_count_filters_rare_tokens() {
        let dialogues = corpus_of(&["i like dogs", "i like cats"]);
        let vocab = Vocab::build(&dialogues, 2, &labels());
        assert!(vocab.id("i").is_some());
        assert!(vocab.id("like").is_some());
        assert!(vocab.id("dogs").is_none());
        assert!(vocab.id("cats").is_none());
        let unk = vocab.reserved(ReservedToken::Unk);
        assert_eq!(vocab.encode("i like dogs")[2], unk);
    }

    #[test]
    fn empty_corpus_is_reserved_only() {
        let vocab = Vocab::build(&[], 1, &labels());
        assert_eq!(vocab.len(), vocab.reserved_len());
    }

    #[test]
    fn min_count_one_keeps_all_tokens() {
        let dialogues = corpus_of(&["a brand new sentence"]);
        let vocab = Vocab::build(&dialogues, 1, &labels());
        for tok in ["brand", "new", "sentence"] {
            assert!(vocab.id(tok).is_some(), "missing {tok}");
        }
    }

    #[test]
    fn reserved_prefix_is_contiguous_and_pad_is_zero() {
        let vocab = Vocab::build(&corpus_of(&["hello"]), 1, &labels());
        assert_eq!(vocab.reserved(ReservedToken::Pad), 0);
        let n = vocab.reserved_len() as u32;
        for id in 0..n {
            let tok = vocab.token(id).unwrap();
            assert!(tok.starts_with('['), "reserved token {tok} at id {id}");
        }
        assert_eq!(
            vocab.reserved_len(),
            ReservedToken::ALL.len() + labels().len() + ENTAIL_LABELS.len()
        );
        assert!(vocab.emotion_tag("curiosity").unwrap() < n);
        assert!(vocab.entail_tag("contradiction").unwrap() < n);
    }

    #[test]
    fn mapping_is_a_bijection() {
        let vocab = Vocab::build(&corpus_of(&["one two three two one"]), 1, &labels());
        for id in 0..vocab.len() as u32 {
            let tok = vocab.token(id).unwrap();
            assert_eq!(vocab.id(tok), Some(id));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let vocab = Vocab::build(&corpus_of(&["round trip works"]), 1, &labels());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        vocab.save(&path).unwrap();
        let loaded = Vocab::load(&path).unwrap();
        assert_eq!(vocab.tokens, loaded.tokens);
        assert_eq!(vocab.encode("round trip works"), loaded.encode("round trip works"));
    }
}
