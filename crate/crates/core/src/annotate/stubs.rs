//! Rule-based stand-in annotators.
//!
//! These exist so the pipeline runs end to end without any pretrained
//! classifier. Real annotations are expected to be produced offline and
//! replayed through [`crate::annotate::load_annotations`].

use std::collections::HashMap;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::annotate::{EmotionAnnotator, EmotionLabels, EntailmentAnnotator, EntailmentScores};
use crate::concepts::stopwords::Stopwords;
use crate::corpus::tokenizer::tokenize;
use crate::error::{PipelineError, Result};

const DOMINANT_MASS: f64 = 0.95;
const ENTAIL_MASS: f64 = 0.9;
const OVERLAP_CUTOFF: f64 = 0.6;

/// Keyword-lexicon emotion scorer: 0.95 of the mass goes to the label with
/// the most lexicon hits (neutral when nothing matches), the remainder is
/// spread uniformly over the other labels.
pub struct LexiconEmotion {
    labels: EmotionLabels,
    word_to_label: HashMap<String, usize>,
}

impl LexiconEmotion {
    pub fn with_default_lexicon(labels: EmotionLabels) -> Self {
        Self::from_entries(labels, include_str!("../../data/emotion_lexicon.txt"))
    }

    /// Lexicon file format: `word label`, one pair per line.
    pub fn from_file(labels: EmotionLabels, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Ok(Self::from_entries(labels, &text))
    }

    fn from_entries(labels: EmotionLabels, entries: &str) -> Self {
        let mut word_to_label = HashMap::new();
        for line in entries.lines() {
            let mut parts = line.split_whitespace();
            if let (Some(word), Some(label)) = (parts.next(), parts.next()) {
                if let Some(idx) = labels.index_of(label) {
                    word_to_label.insert(word.to_string(), idx);
                } else {
                    log::warn!("lexicon label {label:?} not in label set, skipping {word:?}");
                }
            }
        }
        LexiconEmotion {
            labels,
            word_to_label,
        }
    }
}

impl EmotionAnnotator for LexiconEmotion {
    fn emotion(&self, text: &str) -> Result<Vec<f64>> {
        let mut hits = vec![0usize; self.labels.len()];
        let mut any = false;
        for tok in tokenize(text) {
            if let Some(&idx) = self.word_to_label.get(&tok) {
                hits[idx] += 1;
                any = true;
            }
        }
        let dominant = if any {
            let mut best = 0;
            for i in 1..hits.len() {
                if hits[i] > hits[best] {
                    best = i;
                }
            }
            best
        } else {
            self.labels.neutral_index()
        };
        let n = self.labels.len();
        let rest = (1.0 - DOMINANT_MASS) / (n - 1) as f64;
        let mut dist = vec![rest; n];
        dist[dominant] = DOMINANT_MASS;
        Ok(dist)
    }
}

/// Negation-parity heuristic: high content-token overlap with matching
/// negation parity reads as entailment, with flipped parity as
/// contradiction, anything else as neutral. Overlap is measured as the
/// fraction of the premise's content tokens found in the hypothesis.
pub struct OverlapEntailment {
    stopwords: Stopwords,
    negations: HashSet<&'static str>,
}

impl OverlapEntailment {
    pub fn new(stopwords: Stopwords) -> Self {
        let negations = [
            "not", "no", "never", "none", "nothing", "nobody", "neither", "nor", "cannot",
        ]
        .into_iter()
        .collect();
        OverlapEntailment {
            stopwords,
            negations,
        }
    }

    fn content_tokens(&self, text: &str) -> HashSet<String> {
        tokenize(text)
            .into_iter()
            .filter(|t| t.chars().any(|c| c.is_alphanumeric()))
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }

    fn negation_parity(&self, text: &str) -> usize {
        tokenize(text)
            .into_iter()
            .filter(|t| self.negations.contains(t.as_str()) || t.ends_with("n't"))
            .count()
            % 2
    }
}

impl Default for OverlapEntailment {
    fn default() -> Self {
        OverlapEntailment::new(Stopwords::default_set())
    }
}

impl EntailmentAnnotator for OverlapEntailment {
    fn entailment(&self, premise: &str, hypothesis: &str) -> Result<EntailmentScores> {
        let p = self.content_tokens(premise);
        let h = self.content_tokens(hypothesis);
        let rest = (1.0 - ENTAIL_MASS) / 2.0;
        let dominated = |idx: usize| {
            let mut v = [rest; 3];
            v[idx] = ENTAIL_MASS;
            v
        };
        if p.is_empty() || h.is_empty() {
            return Ok(EntailmentScores::Blended(dominated(1)));
        }
        let overlap = p.intersection(&h).count() as f64 / p.len() as f64;
        let v = if overlap >= OVERLAP_CUTOFF {
            if self.negation_parity(premise) == self.negation_parity(hypothesis) {
                dominated(0)
            } else {
                dominated(2)
            }
        } else {
            dominated(1)
        };
        Ok(EntailmentScores::Blended(v))
    }
}
