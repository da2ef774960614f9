//! Emotion and entailment annotation.
//!
//! Annotators are pluggable: real classifier output can be ingested from
//! JSONL produced offline, while the shipped rule-based stubs keep the
//! pipeline runnable end to end. The thresholding rule (dominant label only
//! above a confidence cutoff, otherwise neutral) and the two-model ensemble
//! (weighted probability average, dialogue-trained model preferred) are
//! applied here in one code path regardless of where the raw scores came
//! from.

mod io;
mod stubs;

pub use io::{load_annotations, save_annotations};
pub use stubs::{LexiconEmotion, OverlapEntailment};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{PipelineError, Result};

/// Default confidence cutoff below which an emotion prediction is discarded.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.9;
/// Default weight of the dialogue-trained entailment model in the ensemble.
pub const DEFAULT_ENSEMBLE_WEIGHT: f64 = 0.8;

const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// The emotion label set: a configurable list with a mandatory neutral entry.
#[derive(Debug, Clone)]
pub struct EmotionLabels {
    labels: Vec<String>,
    neutral: usize,
}

impl EmotionLabels {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let neutral = labels
            .iter()
            .position(|l| l == "neutral")
            .ok_or_else(|| PipelineError::Config("label set must contain \"neutral\"".into()))?;
        if labels.is_empty() {
            return Err(PipelineError::Config("label set is empty".into()));
        }
        Ok(EmotionLabels { labels, neutral })
    }

    /// The default 27-category-plus-neutral set.
    pub fn default_set() -> Self {
        let labels = include_str!("../../data/emotions.txt")
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        EmotionLabels::new(labels).expect("embedded label set is valid")
    }

    /// Load a label file: one label per line, "neutral" mandatory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let labels = text
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        EmotionLabels::new(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn neutral_index(&self) -> usize {
        self.neutral
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionTag {
    pub label: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntailLabel {
    Entailment,
    Neutral,
    Contradiction,
}

impl EntailLabel {
    pub const ALL: [EntailLabel; 3] = [
        EntailLabel::Entailment,
        EntailLabel::Neutral,
        EntailLabel::Contradiction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntailLabel::Entailment => "entailment",
            EntailLabel::Neutral => "neutral",
            EntailLabel::Contradiction => "contradiction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

/// Keep the dominant label only when its probability clears the threshold;
/// otherwise fall back to neutral, recording the dominant probability as the
/// confidence either way. Ties in the argmax resolve to the first label.
pub fn apply_confidence_rule(
    distribution: &[f64],
    threshold: f64,
    labels: &EmotionLabels,
) -> Result<EmotionTag> {
    if distribution.len() != labels.len() {
        return Err(PipelineError::Annotation(format!(
            "distribution has {} entries, label set has {}",
            distribution.len(),
            labels.len()
        )));
    }
    check_prob_vector(distribution)?;
    let (argmax, p_max) = argmax_first(distribution);
    let label = if p_max > threshold {
        labels.label(argmax)
    } else {
        labels.label(labels.neutral_index())
    };
    Ok(EmotionTag {
        label: label.to_string(),
        confidence: p_max,
    })
}

/// Weighted average of the two model distributions, argmax of the blend.
/// `w_dialogue` weights the dialogue-trained model. Ties resolve in label
/// order (entailment, neutral, contradiction).
pub fn ensemble_entailment(
    p_general: &[f64; 3],
    p_dialogue: &[f64; 3],
    w_dialogue: f64,
) -> Result<EntailLabel> {
    let blended = blend_entailment(p_general, p_dialogue, w_dialogue)?;
    Ok(argmax_label(&blended))
}

/// The blended distribution behind [`ensemble_entailment`].
pub fn blend_entailment(
    p_general: &[f64; 3],
    p_dialogue: &[f64; 3],
    w_dialogue: f64,
) -> Result<[f64; 3]> {
    if !(0.0..=1.0).contains(&w_dialogue) {
        return Err(PipelineError::Annotation(format!(
            "ensemble weight {w_dialogue} outside [0, 1]"
        )));
    }
    check_prob_vector(p_general)?;
    check_prob_vector(p_dialogue)?;
    let mut blended = [0.0; 3];
    for i in 0..3 {
        blended[i] = w_dialogue * p_dialogue[i] + (1.0 - w_dialogue) * p_general[i];
    }
    Ok(blended)
}

fn argmax_label(v: &[f64; 3]) -> EntailLabel {
    EntailLabel::ALL[argmax_first(v).0]
}

fn argmax_first(v: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    (best, v[best])
}

fn check_prob_vector(v: &[f64]) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE || v.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(PipelineError::Annotation(format!(
            "not a probability vector (sum {sum})"
        )));
    }
    Ok(())
}

/// Raw entailment scores an annotator may produce: either the two-model pair
/// (ensembled here) or a single pre-blended distribution.
#[derive(Debug, Clone)]
pub enum EntailmentScores {
    Pair {
        general: [f64; 3],
        dialogue: [f64; 3],
    },
    Blended([f64; 3]),
}

pub trait EmotionAnnotator {
    /// Probability distribution over the configured label set.
    fn emotion(&self, text: &str) -> Result<Vec<f64>>;
}

pub trait EntailmentAnnotator {
    fn entailment(&self, premise: &str, hypothesis: &str) -> Result<EntailmentScores>;
}

/// Per-dialogue annotation store. Entailment entries are keyed by
/// `(turn, source index, candidate index)` because every candidate of every
/// turn gets its own label against each preceding utterance and each persona
/// sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub dialogue_id: String,
    /// One tag per utterance, by utterance index.
    pub emotions: Vec<EmotionTag>,
    pub utterance_entailment: BTreeMap<(usize, usize, usize), EntailLabel>,
    pub persona_entailment: BTreeMap<(usize, usize, usize), EntailLabel>,
}

impl AnnotationRecord {
    pub fn utterance_label(&self, turn: usize, utt: usize, cand: usize) -> Option<EntailLabel> {
        self.utterance_entailment.get(&(turn, utt, cand)).copied()
    }

    pub fn persona_label(&self, turn: usize, persona: usize, cand: usize) -> Option<EntailLabel> {
        self.persona_entailment.get(&(turn, persona, cand)).copied()
    }

    /// Completeness: every utterance/persona has an entry for every candidate
    /// of every turn it precedes, and every utterance has an emotion tag.
    pub fn validate_against(&self, dialogue: &Dialogue) -> Result<()> {
        if self.emotions.len() != dialogue.utterances.len() {
            return Err(PipelineError::Integrity(format!(
                "dialogue {}: {} emotion tags for {} utterances",
                dialogue.id,
                self.emotions.len(),
                dialogue.utterances.len()
            )));
        }
        for (t, turn) in dialogue.turns.iter().enumerate() {
            for cand in 0..turn.candidates.len() {
                for utt in 0..turn.context_len {
                    if self.utterance_label(t, utt, cand).is_none() {
                        return Err(PipelineError::Integrity(format!(
                            "dialogue {}: missing entailment for turn {t} utterance {utt} candidate {cand}",
                            dialogue.id
                        )));
                    }
                }
                for p in 0..dialogue.persona.len() {
                    if self.persona_label(t, p, cand).is_none() {
                        return Err(PipelineError::Integrity(format!(
                            "dialogue {}: missing entailment for turn {t} persona {p} candidate {cand}",
                            dialogue.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct AnnotationOutcome {
    pub records: Vec<AnnotationRecord>,
    /// Items where an annotator failed and a neutral default was substituted.
    pub warnings: usize,
}

#[derive(Debug, Clone)]
pub struct AnnotateOptions {
    pub threshold: f64,
    pub ensemble_weight: f64,
}

impl Default for AnnotateOptions {
    fn default() -> Self {
        AnnotateOptions {
            threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            ensemble_weight: DEFAULT_ENSEMBLE_WEIGHT,
        }
    }
}

/// Annotate every dialogue: an emotion tag per utterance plus an entailment
/// label per (premise, candidate) pair. Annotator failures downgrade the
/// affected item to neutral and bump the warning counter instead of aborting
/// the run. Output order follows dialogue order, so results do not depend on
/// any processing order.
pub fn annotate_dataset(
    dialogues: &[Dialogue],
    emotion: &dyn EmotionAnnotator,
    entailment: &dyn EntailmentAnnotator,
    labels: &EmotionLabels,
    opts: &AnnotateOptions,
) -> Result<AnnotationOutcome> {
    let mut records = Vec::with_capacity(dialogues.len());
    let mut warnings = 0usize;
    let neutral = labels.label(labels.neutral_index()).to_string();

    for dialogue in dialogues {
        let mut emotions = Vec::with_capacity(dialogue.utterances.len());
        for utt in &dialogue.utterances {
            let tag = match emotion.emotion(&utt.text) {
                Ok(dist) => apply_confidence_rule(&dist, opts.threshold, labels)?,
                Err(e) => {
                    log::warn!("emotion annotator failed on {:?}: {e}", utt.text);
                    warnings += 1;
                    EmotionTag {
                        label: neutral.clone(),
                        confidence: 0.0,
                    }
                }
            };
            emotions.push(tag);
        }

        let mut utterance_entailment = BTreeMap::new();
        let mut persona_entailment = BTreeMap::new();
        for (t, turn) in dialogue.turns.iter().enumerate() {
            for (c, candidate) in turn.candidates.iter().enumerate() {
                for utt in 0..turn.context_len {
                    let label = judge(
                        entailment,
                        &dialogue.utterances[utt].text,
                        candidate,
                        opts.ensemble_weight,
                        &mut warnings,
                    )?;
                    utterance_entailment.insert((t, utt, c), label);
                }
                for (p, persona) in dialogue.persona.iter().enumerate() {
                    let label =
                        judge(entailment, persona, candidate, opts.ensemble_weight, &mut warnings)?;
                    persona_entailment.insert((t, p, c), label);
                }
            }
        }

        records.push(AnnotationRecord {
            dialogue_id: dialogue.id.clone(),
            emotions,
            utterance_entailment,
            persona_entailment,
        });
    }
    Ok(AnnotationOutcome { records, warnings })
}

fn judge(
    annotator: &dyn EntailmentAnnotator,
    premise: &str,
    hypothesis: &str,
    weight: f64,
    warnings: &mut usize,
) -> Result<EntailLabel> {
    match annotator.entailment(premise, hypothesis) {
        Ok(EntailmentScores::Pair { general, dialogue }) => {
            ensemble_entailment(&general, &dialogue, weight)
        }
        Ok(EntailmentScores::Blended(v)) => {
            check_prob_vector(&v)?;
            Ok(argmax_label(&v))
        }
        Err(e) => {
            log::warn!("entailment annotator failed: {e}");
            *warnings += 1;
            Ok(EntailLabel::Neutral)
        }
    }
}
