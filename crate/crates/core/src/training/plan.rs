//! Per-epoch negative assignment: the positive stays fixed, the negative
//! rotates through a per-context seeded permutation, so a full cycle uses
//! every negative exactly once and every epoch is 1:1 balanced.

use crate::corpus::Dialogue;
use crate::error::{PipelineError, Result};
use crate::neural::seeded_rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanItem {
    pub dialogue_idx: usize,
    pub turn_idx: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone)]
pub struct EpochPlan {
    pub epoch: usize,
    pub items: Vec<PlanItem>,
}

/// FNV-1a, for a stable per-context permutation seed across platforms and
/// releases (the std hasher is not guaranteed stable).
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn context_seed(seed: u64, dialogue_id: &str, turn_idx: usize) -> u64 {
    let mut bytes = dialogue_id.as_bytes().to_vec();
    bytes.extend_from_slice(&(turn_idx as u64).to_le_bytes());
    seed ^ fnv1a(&bytes)
}

/// Assignment for one epoch. `total_epochs` is the intended cycle length:
/// without `allow_reuse`, every candidate set must hold at least that many
/// negatives so rotation never repeats.
pub fn plan_epoch(
    dialogues: &[Dialogue],
    epoch: usize,
    seed: u64,
    total_epochs: usize,
    allow_reuse: bool,
) -> Result<EpochPlan> {
    let mut items = Vec::new();
    for (dialogue_idx, dialogue) in dialogues.iter().enumerate() {
        for (turn_idx, turn) in dialogue.turns.iter().enumerate() {
            let mut negatives: Vec<usize> = turn.negatives().collect();
            if negatives.is_empty() {
                return Err(PipelineError::Integrity(format!(
                    "dialogue {} turn {turn_idx} has no negatives",
                    dialogue.id
                )));
            }
            if negatives.len() < total_epochs && !allow_reuse {
                return Err(PipelineError::Config(format!(
                    "dialogue {} turn {turn_idx} has {} negatives for {total_epochs} epochs; \
                     set train.allow_negative_reuse=true to rotate modulo the negative count",
                    dialogue.id,
                    negatives.len()
                )));
            }
            let mut rng = seeded_rng(context_seed(seed, &dialogue.id, turn_idx));
            rand::seq::SliceRandom::shuffle(negatives.as_mut_slice(), &mut rng);
            let negative = negatives[epoch % negatives.len()];
            items.push(PlanItem {
                dialogue_idx,
                turn_idx,
                positive: turn.gold_index,
                negative,
            });
        }
    }
    Ok(EpochPlan { epoch, items })
}
