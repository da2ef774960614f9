//! Ranking and metrics: score all candidates of a turn, rank with a
//! deterministic tie-break, and reduce to hits@1 / MRR reports.

mod harness;

pub use harness::{run_ablation, sweep_csv, sweep_turns, AblationReport, SweepRow};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotate::AnnotationRecord;
use crate::corpus::Vocab;
use crate::error::{PipelineError, Result};
use crate::neural::{seeded_rng, Mode};
use crate::training::{DataBundle, ModelBundle};

/// Candidate indices sorted by descending score; ties resolve to the lower
/// candidate index so rankings are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
    pub gold_index: usize,
}

impl RankedList {
    pub fn from_scores(scores: Vec<f64>, gold_index: usize) -> RankedList {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        RankedList {
            order,
            scores,
            gold_index,
        }
    }

    /// 1-based rank of the gold candidate.
    pub fn gold_rank(&self) -> usize {
        self.order
            .iter()
            .position(|&c| c == self.gold_index)
            .expect("gold index is a candidate")
            + 1
    }
}

/// Fraction of lists whose gold candidate ranks within the top `k`.
pub fn hits_at_k(lists: &[RankedList], k: usize) -> f64 {
    if lists.is_empty() {
        return 0.0;
    }
    let hits = lists.iter().filter(|l| l.gold_rank() <= k).count();
    hits as f64 / lists.len() as f64
}

/// Mean reciprocal rank of the gold candidates.
pub fn mrr(lists: &[RankedList]) -> f64 {
    if lists.is_empty() {
        return 0.0;
    }
    let total: f64 = lists.iter().map(|l| 1.0 / l.gold_rank() as f64).sum();
    total / lists.len() as f64
}

/// Score every candidate of one turn with the same model and configuration.
pub fn rank(
    bundle: &ModelBundle,
    vocab: &Vocab,
    data: &DataBundle<'_>,
    index: &Option<HashMap<&str, &AnnotationRecord>>,
    dialogue_idx: usize,
    turn_idx: usize,
) -> Result<RankedList> {
    let dialogue = &data.dialogues[dialogue_idx];
    let turn = &dialogue.turns[turn_idx];
    let needs_concepts = bundle.cfg.variant.needs_concepts();
    let mut rng = seeded_rng(0); // unused in eval mode
    let mut scores = Vec::with_capacity(turn.candidates.len());
    for cand_idx in 0..turn.candidates.len() {
        let inputs =
            data.forward_inputs(index, vocab, dialogue_idx, turn_idx, cand_idx, needs_concepts)?;
        scores.push(bundle.score(&inputs, Mode::Eval, &mut rng)?);
    }
    Ok(RankedList::from_scores(scores, turn.gold_index))
}

/// Rank every turn of the bundle's dialogues.
pub fn rank_all(
    bundle: &ModelBundle,
    vocab: &Vocab,
    data: &DataBundle<'_>,
    index: &Option<HashMap<&str, &AnnotationRecord>>,
) -> Result<Vec<RankedList>> {
    let mut lists = Vec::new();
    for d_idx in 0..data.dialogues.len() {
        for t_idx in 0..data.dialogues[d_idx].turns.len() {
            lists.push(rank(bundle, vocab, data, index, d_idx, t_idx)?);
        }
    }
    Ok(lists)
}

/// Train-loop helper: hits@1 over a whole data bundle.
pub fn hits_at_1(
    bundle: &ModelBundle,
    vocab: &Vocab,
    data: &DataBundle<'_>,
    index: &Option<HashMap<&str, &AnnotationRecord>>,
) -> Result<f64> {
    Ok(hits_at_k(&rank_all(bundle, vocab, data, index)?, 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub variant: String,
    pub hits1: f64,
    pub mrr: f64,
    pub per_turn_ranks: Vec<usize>,
    pub config_fingerprint: String,
    pub seed: u64,
}

impl MetricsReport {
    pub fn new(
        split: impl Into<String>,
        variant: impl Into<String>,
        lists: &[RankedList],
        config_fingerprint: impl Into<String>,
        seed: u64,
    ) -> Result<MetricsReport> {
        let report = MetricsReport {
            split: split.into(),
            variant: variant.into(),
            hits1: hits_at_k(lists, 1),
            mrr: mrr(lists),
            per_turn_ranks: lists.iter().map(|l| l.gold_rank()).collect(),
            config_fingerprint: config_fingerprint.into(),
            seed,
        };
        report.validate()?;
        Ok(report)
    }

    /// hits@1 and MRR are probabilities and MRR dominates hits@1.
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.hits1)
            && (0.0..=1.0).contains(&self.mrr)
            && self.mrr >= self.hits1 - 1e-12;
        if !ok {
            return Err(PipelineError::Integrity(format!(
                "metrics out of range: hits@1 {} mrr {}",
                self.hits1, self.mrr
            )));
        }
        Ok(())
    }
}

/// Full evaluation of a bundle on a data bundle.
pub fn evaluate(
    bundle: &ModelBundle,
    vocab: &Vocab,
    data: &DataBundle<'_>,
    split: &str,
    config_fingerprint: &str,
    seed: u64,
) -> Result<MetricsReport> {
    let index = data.annotation_index()?;
    let lists = rank_all(bundle, vocab, data, &index)?;
    MetricsReport::new(split, bundle.cfg.variant.as_str(), &lists, config_fingerprint, seed)
}
