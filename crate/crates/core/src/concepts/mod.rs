//! Concept mining: first-level keywords, RAKE key phrases, PMI statistics,
//! persona-conditioned pruning, top-N selection, and the per-turn merge that
//! produces context and response concept sets.
//!
//! Keywords are pruned against the persona keywords by average PMI; phrases
//! skip PMI and are capped per text unit by top-N instead. Persona keywords
//! are merged into the context keywords unpruned, since they are the
//! pruning reference.

mod io;
mod keywords;
mod rake;
pub mod stats;
pub mod stopwords;

pub use io::{load_concepts, save_concepts, ConceptStore, MinedTurn};
pub use keywords::extract_keywords;
pub use rake::rake_phrases;
pub use stats::CooccurrenceStats;
pub use stopwords::Stopwords;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenizer::tokenize;
use crate::corpus::Dialogue;

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_TOP_N: usize = 3;
pub const DEFAULT_TOP_M: usize = 5;
pub const DEFAULT_NUM_TURNS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptSource {
    Persona,
    Context,
    Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub surface: String,
    pub score: f64,
    pub source: ConceptSource,
}

impl Concept {
    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.surface)
    }
}

/// Concepts mined for one turn: merged persona+context concepts, and one
/// concept list per candidate response. Lists are deduplicated by surface
/// and ordered by first appearance in the conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSet {
    pub context_concepts: Vec<Concept>,
    pub response_concepts: Vec<Vec<Concept>>,
}

#[derive(Debug, Clone, Copy)]
pub struct MineConfig {
    /// Keywords kept per text unit.
    pub top_m: usize,
    /// RAKE phrases kept per text unit.
    pub top_n: usize,
    /// Minimum mean PMI against the persona keywords.
    pub lambda: f64,
    /// Context window (utterances) for concept mining.
    pub num_turns: usize,
}

impl Default for MineConfig {
    fn default() -> Self {
        MineConfig {
            top_m: DEFAULT_TOP_M,
            top_n: DEFAULT_TOP_N,
            lambda: DEFAULT_LAMBDA,
            num_turns: DEFAULT_NUM_TURNS,
        }
    }
}

/// Keep the first `n` phrases after ordering by descending score with
/// lexicographic tie-breaking.
pub fn top_n(phrases: &[Concept], n: usize) -> Vec<Concept> {
    let mut sorted = phrases.to_vec();
    sorted.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.surface.cmp(&b.surface))
    });
    sorted.truncate(n);
    sorted
}

/// Mean PMI of `surface` against a persona keyword set.
fn mean_pmi(stats: &CooccurrenceStats, persona: &[Concept], surface: &str) -> f64 {
    let total: f64 = persona.iter().map(|p| stats.pmi(&p.surface, surface)).sum();
    total / persona.len() as f64
}

/// Keep candidates whose mean PMI against the persona keywords reaches
/// `lambda`; relative order is preserved. An empty persona keyword set
/// disables pruning (degenerate case, logged).
pub fn prune_by_pmi(
    persona_concepts: &[Concept],
    candidates: &[Concept],
    stats: &CooccurrenceStats,
    lambda: f64,
) -> Vec<Concept> {
    if persona_concepts.is_empty() {
        log::warn!("prune_by_pmi: empty persona keyword set, keeping all candidates");
        return candidates.to_vec();
    }
    candidates
        .iter()
        .filter(|c| mean_pmi(stats, persona_concepts, &c.surface) >= lambda)
        .cloned()
        .collect()
}

/// Position of a concept's first occurrence in a token sequence (for
/// conversation ordering); falls back past the end when not found.
fn first_position(tokens: &[String], surface: &str) -> usize {
    let needle = tokenize(surface);
    if needle.is_empty() || needle.len() > tokens.len() {
        return tokens.len();
    }
    tokens
        .windows(needle.len())
        .position(|w| w.iter().zip(&needle).all(|(a, b)| a == b))
        .unwrap_or(tokens.len())
}

/// Mines concept sets with fixed statistics, stopwords, and configuration.
pub struct Miner<'a> {
    pub stats: &'a CooccurrenceStats,
    pub stopwords: &'a Stopwords,
    pub config: MineConfig,
}

/// Ordering key: (persona-vs-dialogue, unit index, token position).
type OrderKey = (u8, usize, usize);

impl<'a> Miner<'a> {
    pub fn new(stats: &'a CooccurrenceStats, stopwords: &'a Stopwords, config: MineConfig) -> Self {
        Miner {
            stats,
            stopwords,
            config,
        }
    }

    /// Mine the concept set for one turn of a dialogue.
    pub fn mine_concepts(&self, dialogue: &Dialogue, turn_idx: usize) -> ConceptSet {
        let turn = &dialogue.turns[turn_idx];
        let persona_keywords = self.persona_keywords(dialogue);

        // Context side: last `num_turns` utterances of the prefix.
        let window = self.config.num_turns.min(turn.context_len);
        let start = turn.context_len - window;
        let mut keyed: Vec<(Concept, OrderKey)> = persona_keywords
            .iter()
            .map(|(c, sent, pos)| (c.clone(), (0u8, *sent, *pos)))
            .collect();
        for utt_idx in start..turn.context_len {
            let text = &dialogue.utterances[utt_idx].text;
            let tokens = tokenize(text);
            let kws = extract_keywords(
                text,
                self.stats,
                self.config.top_m,
                self.stopwords,
                ConceptSource::Context,
            );
            let reference: Vec<Concept> = persona_keywords.iter().map(|(c, _, _)| c.clone()).collect();
            let kws = prune_by_pmi(&reference, &kws, self.stats, self.config.lambda);
            for kw in kws {
                let pos = first_position(&tokens, &kw.surface);
                keyed.push((kw, (1, utt_idx, pos)));
            }
            let phrases = top_n(
                &rake_phrases(text, self.stopwords, ConceptSource::Context),
                self.config.top_n,
            );
            for ph in phrases {
                let pos = first_position(&tokens, &ph.surface);
                keyed.push((ph, (1, utt_idx, pos)));
            }
        }
        let context_concepts = dedup_ordered(keyed);

        // Response side, identically per candidate.
        let reference: Vec<Concept> = persona_keywords.iter().map(|(c, _, _)| c.clone()).collect();
        let response_concepts = turn
            .candidates
            .iter()
            .map(|cand| {
                let tokens = tokenize(cand);
                let kws = extract_keywords(
                    cand,
                    self.stats,
                    self.config.top_m,
                    self.stopwords,
                    ConceptSource::Response,
                );
                let kws = prune_by_pmi(&reference, &kws, self.stats, self.config.lambda);
                let mut keyed: Vec<(Concept, OrderKey)> = kws
                    .into_iter()
                    .map(|c| {
                        let pos = first_position(&tokens, &c.surface);
                        (c, (0u8, 0, pos))
                    })
                    .collect();
                let phrases = top_n(
                    &rake_phrases(cand, self.stopwords, ConceptSource::Response),
                    self.config.top_n,
                );
                for ph in phrases {
                    let pos = first_position(&tokens, &ph.surface);
                    keyed.push((ph, (0, 0, pos)));
                }
                dedup_ordered(keyed)
            })
            .collect();

        ConceptSet {
            context_concepts,
            response_concepts,
        }
    }

    /// Mine every turn of every dialogue, in corpus order.
    pub fn mine_corpus(&self, dialogues: &[Dialogue]) -> Vec<MinedTurn> {
        dialogues
            .iter()
            .flat_map(|d| {
                (0..d.turns.len()).map(move |t| MinedTurn {
                    dialogue_id: d.id.clone(),
                    turn: t,
                    set: self.mine_concepts(d, t),
                })
            })
            .collect()
    }

    /// Persona keywords with (sentence, position) ordering info, deduplicated
    /// by surface.
    fn persona_keywords(&self, dialogue: &Dialogue) -> Vec<(Concept, usize, usize)> {
        let mut out: Vec<(Concept, usize, usize)> = Vec::new();
        for (sent, text) in dialogue.persona.iter().enumerate() {
            let tokens = tokenize(text);
            for kw in extract_keywords(
                text,
                self.stats,
                self.config.top_m,
                self.stopwords,
                ConceptSource::Persona,
            ) {
                if out.iter().any(|(c, _, _)| c.surface == kw.surface) {
                    continue;
                }
                let pos = first_position(&tokens, &kw.surface);
                out.push((kw, sent, pos));
            }
        }
        out
    }
}

/// Stable sort by conversation-order key, then drop repeated surfaces,
/// keeping the earliest occurrence (and with it the earliest source tag).
fn dedup_ordered(mut keyed: Vec<(Concept, OrderKey)>) -> Vec<Concept> {
    keyed.sort_by_key(|(_, ka)| *ka);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(keyed.len());
    for (concept, _) in keyed {
        if seen.insert(concept.surface.clone()) {
            out.push(concept);
        }
    }
    out
}
