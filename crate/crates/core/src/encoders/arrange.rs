//! Token arrangement builders.
//!
//! Four arrangements feed the two encoder pipelines:
//!   bot-context:  [CLS] bot-utt [EOU] ... [SEP] response [EOU]
//!   persona+ctx:  [CLS] persona.. [EOP] utt [EOU] ... [SEP] response [EOU]
//!   emotion:      as persona+ctx, each utterance prefixed by its [Emo_*]
//!   entailment:   as persona+ctx, every persona sentence and utterance
//!                 prefixed by its [Entail_*] for the current candidate
//!
//! Truncation drops oldest context utterances first, then persona sentences;
//! the response is protected and only head-truncated as a last resort, with
//! the sequence flagged.

use crate::annotate::AnnotationRecord;
use crate::corpus::{Dialogue, ReservedToken, Speaker, Vocab};
use crate::encoders::{
    TokenSequence, SEGMENT_CONTEXT, SEGMENT_RESPONSE, SPEAKER_BOT, SPEAKER_NONE, SPEAKER_USER,
};
use crate::error::{PipelineError, Result};

/// Which tag tokens the fusion-side arrangement carries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TagOptions {
    pub emotion: bool,
    pub entailment: bool,
}

pub struct SequenceBuilder<'a> {
    pub vocab: &'a Vocab,
    pub max_len: usize,
}

type Piece = (u32, u8, u8); // (token id, speaker, segment)

impl<'a> SequenceBuilder<'a> {
    pub fn new(vocab: &'a Vocab, max_len: usize) -> Self {
        SequenceBuilder { vocab, max_len }
    }

    fn speaker_code(speaker: Speaker) -> u8 {
        match speaker {
            Speaker::User => SPEAKER_USER,
            Speaker::Bot => SPEAKER_BOT,
        }
    }

    fn text_pieces(&self, text: &str, speaker: u8, segment: u8) -> Vec<Piece> {
        self.vocab
            .encode(text)
            .into_iter()
            .map(|id| (id, speaker, segment))
            .collect()
    }

    /// Bot-side arrangement: the bot's own past turns plus the candidate.
    pub fn bot_context(&self, dialogue: &Dialogue, turn_idx: usize, candidate: &str) -> TokenSequence {
        let turn = &dialogue.turns[turn_idx];
        let eou = self.vocab.reserved(ReservedToken::Eou);
        let mut blocks: Vec<Vec<Piece>> = Vec::new();
        for utt in &dialogue.utterances[..turn.context_len] {
            if utt.speaker == Speaker::Bot {
                let mut block = self.text_pieces(&utt.text, SPEAKER_BOT, SEGMENT_CONTEXT);
                block.push((eou, SPEAKER_BOT, SEGMENT_CONTEXT));
                blocks.push(block);
            }
        }
        let mut response = self.text_pieces(candidate, SPEAKER_BOT, SEGMENT_RESPONSE);
        response.push((eou, SPEAKER_BOT, SEGMENT_RESPONSE));

        let fixed = 2; // [CLS] and [SEP]
        let mut truncated = false;
        let total = |blocks: &Vec<Vec<Piece>>, response: &Vec<Piece>| {
            fixed + blocks.iter().map(Vec::len).sum::<usize>() + response.len()
        };
        while total(&blocks, &response) > self.max_len && blocks.len() > 1 {
            blocks.remove(0);
            truncated = true;
        }
        if total(&blocks, &response) > self.max_len {
            // Head-truncate the response, keeping its trailing [EOU].
            let budget = self
                .max_len
                .saturating_sub(fixed + blocks.iter().map(Vec::len).sum::<usize>());
            if budget >= 2 {
                let keep = budget;
                let n = response.len();
                response.drain(..n - keep);
                truncated = true;
            } else {
                // A single oversized bot utterance: head-truncate it too so
                // at least one response token survives.
                response.drain(..response.len().saturating_sub(2));
                let budget = self.max_len - fixed - response.len();
                if let Some(block) = blocks.first_mut() {
                    let n = block.len();
                    block.drain(..n.saturating_sub(budget));
                }
                truncated = true;
            }
        }

        self.assemble(None, blocks, response, truncated)
    }

    /// Fusion-side arrangement: persona then context, optionally tagged,
    /// then the candidate. `annotations` is required whenever a tag channel
    /// is enabled.
    pub fn fused(
        &self,
        dialogue: &Dialogue,
        turn_idx: usize,
        cand_idx: usize,
        candidate: &str,
        tags: TagOptions,
        annotations: Option<&AnnotationRecord>,
    ) -> Result<TokenSequence> {
        let turn = &dialogue.turns[turn_idx];
        let eou = self.vocab.reserved(ReservedToken::Eou);

        let record = if tags.emotion || tags.entailment {
            Some(annotations.ok_or_else(|| {
                PipelineError::Config("tagged arrangement requires an annotation record".into())
            })?)
        } else {
            None
        };

        let mut persona_blocks: Vec<Vec<Piece>> = Vec::new();
        for (p_idx, sentence) in dialogue.persona.iter().enumerate() {
            let mut block = Vec::new();
            if tags.entailment {
                let label = record
                    .unwrap()
                    .persona_label(turn_idx, p_idx, cand_idx)
                    .ok_or_else(|| {
                        PipelineError::Integrity(format!(
                            "missing persona entailment for dialogue {} turn {turn_idx} persona {p_idx} candidate {cand_idx}",
                            dialogue.id
                        ))
                    })?;
                block.push((
                    self.entail_id(label.as_str())?,
                    SPEAKER_NONE,
                    SEGMENT_CONTEXT,
                ));
            }
            block.extend(self.text_pieces(sentence, SPEAKER_NONE, SEGMENT_CONTEXT));
            persona_blocks.push(block);
        }

        let mut utt_blocks: Vec<Vec<Piece>> = Vec::new();
        for (utt_idx, utt) in dialogue.utterances[..turn.context_len].iter().enumerate() {
            let speaker = Self::speaker_code(utt.speaker);
            let mut block = Vec::new();
            if tags.entailment {
                let label = record
                    .unwrap()
                    .utterance_label(turn_idx, utt_idx, cand_idx)
                    .ok_or_else(|| {
                        PipelineError::Integrity(format!(
                            "missing utterance entailment for dialogue {} turn {turn_idx} utterance {utt_idx} candidate {cand_idx}",
                            dialogue.id
                        ))
                    })?;
                block.push((self.entail_id(label.as_str())?, speaker, SEGMENT_CONTEXT));
            }
            if tags.emotion {
                let tag = &record.unwrap().emotions[utt_idx];
                block.push((self.emotion_id(&tag.label)?, speaker, SEGMENT_CONTEXT));
            }
            block.extend(self.text_pieces(&utt.text, speaker, SEGMENT_CONTEXT));
            block.push((eou, speaker, SEGMENT_CONTEXT));
            utt_blocks.push(block);
        }

        let mut response = self.text_pieces(candidate, SPEAKER_BOT, SEGMENT_RESPONSE);
        response.push((eou, SPEAKER_BOT, SEGMENT_RESPONSE));

        // [CLS], [SEP], plus [EOP] while any persona sentence remains.
        let mut truncated = false;
        let total = |p: &Vec<Vec<Piece>>, u: &Vec<Vec<Piece>>, r: &Vec<Piece>| {
            let eop = if p.is_empty() { 0 } else { 1 };
            2 + eop
                + p.iter().map(Vec::len).sum::<usize>()
                + u.iter().map(Vec::len).sum::<usize>()
                + r.len()
        };
        while total(&persona_blocks, &utt_blocks, &response) > self.max_len && !utt_blocks.is_empty()
        {
            utt_blocks.remove(0);
            truncated = true;
        }
        while total(&persona_blocks, &utt_blocks, &response) > self.max_len
            && !persona_blocks.is_empty()
        {
            persona_blocks.remove(0);
            truncated = true;
        }
        if total(&persona_blocks, &utt_blocks, &response) > self.max_len {
            let keep = self.max_len.saturating_sub(2).max(2);
            let n = response.len();
            if n > keep {
                response.drain(..n - keep);
            }
            truncated = true;
        }

        let mut persona_flat: Vec<Piece> = persona_blocks.into_iter().flatten().collect();
        if !persona_flat.is_empty() {
            persona_flat.push((
                self.vocab.reserved(ReservedToken::Eop),
                SPEAKER_NONE,
                SEGMENT_CONTEXT,
            ));
        }
        Ok(self.assemble(Some(persona_flat), utt_blocks, response, truncated))
    }

    fn emotion_id(&self, label: &str) -> Result<u32> {
        self.vocab.emotion_tag(label).ok_or_else(|| {
            PipelineError::Integrity(format!("emotion label {label:?} has no reserved token"))
        })
    }

    fn entail_id(&self, label: &str) -> Result<u32> {
        self.vocab.entail_tag(label).ok_or_else(|| {
            PipelineError::Integrity(format!("entailment label {label:?} has no reserved token"))
        })
    }

    fn assemble(
        &self,
        persona: Option<Vec<Piece>>,
        blocks: Vec<Vec<Piece>>,
        response: Vec<Piece>,
        truncated: bool,
    ) -> TokenSequence {
        let cls = self.vocab.reserved(ReservedToken::Cls);
        let sep = self.vocab.reserved(ReservedToken::Sep);
        let mut pieces: Vec<Piece> = vec![(cls, SPEAKER_NONE, SEGMENT_CONTEXT)];
        if let Some(p) = persona {
            pieces.extend(p);
        }
        for block in blocks {
            pieces.extend(block);
        }
        pieces.push((sep, SPEAKER_NONE, SEGMENT_CONTEXT));
        pieces.extend(response);

        let len = pieces.len();
        let mut seq = TokenSequence {
            ids: Vec::with_capacity(len),
            segments: Vec::with_capacity(len),
            speakers: Vec::with_capacity(len),
            len,
            truncated,
        };
        for (id, spk, seg) in pieces {
            seq.ids.push(id);
            seq.speakers.push(spk);
            seq.segments.push(seg);
        }
        seq
    }
}

/// [CLS] bot utterances [SEP] candidate arrangement.
pub fn build_bot_context(
    vocab: &Vocab,
    max_len: usize,
    dialogue: &Dialogue,
    turn_idx: usize,
    candidate: &str,
) -> TokenSequence {
    SequenceBuilder::new(vocab, max_len).bot_context(dialogue, turn_idx, candidate)
}

/// Untagged persona + context arrangement.
pub fn build_cra(
    vocab: &Vocab,
    max_len: usize,
    dialogue: &Dialogue,
    turn_idx: usize,
    candidate: &str,
) -> TokenSequence {
    SequenceBuilder::new(vocab, max_len)
        .fused(dialogue, turn_idx, 0, candidate, TagOptions::default(), None)
        .expect("untagged arrangement cannot fail")
}

/// Emotion-tagged arrangement.
pub fn build_ema(
    vocab: &Vocab,
    max_len: usize,
    dialogue: &Dialogue,
    turn_idx: usize,
    candidate: &str,
    annotations: &AnnotationRecord,
) -> Result<TokenSequence> {
    SequenceBuilder::new(vocab, max_len).fused(
        dialogue,
        turn_idx,
        0,
        candidate,
        TagOptions {
            emotion: true,
            entailment: false,
        },
        Some(annotations),
    )
}

/// Entailment-tagged arrangement; labels depend on the candidate index.
pub fn build_ena_p(
    vocab: &Vocab,
    max_len: usize,
    dialogue: &Dialogue,
    turn_idx: usize,
    cand_idx: usize,
    annotations: &AnnotationRecord,
) -> Result<TokenSequence> {
    let candidate = dialogue.turns[turn_idx].candidates[cand_idx].clone();
    SequenceBuilder::new(vocab, max_len).fused(
        dialogue,
        turn_idx,
        cand_idx,
        &candidate,
        TagOptions {
            emotion: false,
            entailment: true,
        },
        Some(annotations),
    )
}
