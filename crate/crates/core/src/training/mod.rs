//! Training: dynamic 1:1 negative sampling, the optimization loop with
//! linear learning-rate decay, per-epoch checkpointing, and metrics logging.

mod plan;
mod variant;

pub use plan::{plan_epoch, EpochPlan, PlanItem};
pub use variant::{forward_variant, head_input_dim, BundleConfig, ForwardInputs, ModelBundle, Variant};

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::annotate::AnnotationRecord;
use crate::concepts::ConceptStore;
use crate::corpus::{Dialogue, Vocab};
use crate::error::{PipelineError, Result};
use crate::evaluation;
use crate::neural::{
    adamw_step, save_checkpoint, seeded_rng, sigmoid_bce, AdamW, Mode, ParamCollection, Precision,
};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub variant: Variant,
    /// Allow the negative rotation to reuse negatives modulo their count
    /// when a run has more epochs than negatives.
    pub allow_negative_reuse: bool,
    pub precision: Precision,
    pub loss: LossKind,
}

/// Training objective. `Bce` treats the positive and the sampled negative as
/// independent binary examples; `PairwiseSoftmax` normalizes the two logits
/// against each other and pushes probability mass onto the positive. The
/// softmax form carries no acceptance claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Bce,
    PairwiseSoftmax,
}

impl LossKind {
    pub fn from_name(name: &str) -> Result<LossKind> {
        match name {
            "bce" => Ok(LossKind::Bce),
            "pairwise_softmax" => Ok(LossKind::PairwiseSoftmax),
            other => Err(PipelineError::Config(format!(
                "unknown loss {other:?} (expected bce or pairwise_softmax)"
            ))),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 19,
            batch_size: 12,
            lr: 2e-5,
            weight_decay: 0.01,
            seed: 0,
            variant: Variant::All,
            allow_negative_reuse: false,
            precision: Precision::F64,
            loss: LossKind::Bce,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(PipelineError::Config("train.epochs must be positive".into()));
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(PipelineError::Config(
                "train.batch_size must be even (batches hold positive/negative pairs)".into(),
            ));
        }
        if self.lr < 0.0 {
            return Err(PipelineError::Config("train.lr must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One split's artifacts, bundled for training or evaluation.
pub struct DataBundle<'a> {
    pub dialogues: &'a [Dialogue],
    pub annotations: Option<&'a [AnnotationRecord]>,
    pub concepts: Option<&'a ConceptStore>,
}

impl<'a> DataBundle<'a> {
    /// Index annotations by dialogue id; errors if a dialogue lacks one.
    pub fn annotation_index(&self) -> Result<Option<HashMap<&'a str, &'a AnnotationRecord>>> {
        let Some(records) = self.annotations else {
            return Ok(None);
        };
        let map: HashMap<&str, &AnnotationRecord> = records
            .iter()
            .map(|r| (r.dialogue_id.as_str(), r))
            .collect();
        for d in self.dialogues {
            if !map.contains_key(d.id.as_str()) {
                return Err(PipelineError::MissingArtifact {
                    artifact: format!("annotations for dialogue {}", d.id),
                    producer: "annotate".into(),
                });
            }
        }
        Ok(Some(map))
    }

    pub fn forward_inputs(
        &self,
        index: &Option<HashMap<&'a str, &'a AnnotationRecord>>,
        vocab: &'a Vocab,
        dialogue_idx: usize,
        turn_idx: usize,
        cand_idx: usize,
        needs_concepts: bool,
    ) -> Result<ForwardInputs<'_>> {
        let dialogue = &self.dialogues[dialogue_idx];
        let concepts = if needs_concepts {
            let store = self.concepts.ok_or_else(|| PipelineError::MissingArtifact {
                artifact: "mined concepts".into(),
                producer: "mine".into(),
            })?;
            Some(store.get(&dialogue.id, turn_idx).ok_or_else(|| {
                PipelineError::MissingArtifact {
                    artifact: format!("concepts for dialogue {} turn {turn_idx}", dialogue.id),
                    producer: "mine".into(),
                }
            })?)
        } else {
            None
        };
        Ok(ForwardInputs {
            dialogue,
            turn_idx,
            cand_idx,
            annotations: index.as_ref().map(|m| m[dialogue.id.as_str()]),
            concepts,
            vocab,
        })
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_hits1: f64,
    pub lr: f64,
    pub wall_s: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub best_hits1: f64,
    pub best_epoch: usize,
    pub latest_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
}

/// Train a fresh model bundle. Writes `latest.ckpt` after every epoch,
/// `best.ckpt` whenever the selection metric improves (validation hits@1
/// when a validation bundle is supplied, train hits@1 otherwise), and
/// `metrics.csv` incrementally. A non-finite loss aborts the run and leaves
/// the last finished epoch's checkpoint in place.
pub fn train(
    bundle_cfg: BundleConfig,
    vocab: &Vocab,
    data: &DataBundle<'_>,
    valid: Option<&DataBundle<'_>>,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let mut rng = seeded_rng(config.seed);
    let mut bundle = ModelBundle::new(&mut rng, bundle_cfg)?;
    train_existing(&mut bundle, vocab, data, valid, config, out_dir)
}

/// As [`train`], reusing an existing bundle (shared by the ablation runner).
pub fn train_existing(
    bundle: &mut ModelBundle,
    vocab: &Vocab,
    data: &DataBundle<'_>,
    valid: Option<&DataBundle<'_>>,
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let annotation_index = data.annotation_index()?;
    let needs_concepts = bundle.cfg.variant.needs_concepts();

    let latest = out_dir.join("latest.ckpt");
    let best = out_dir.join("best.ckpt");
    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics_file =
        fs::File::create(&metrics_path).map_err(|e| PipelineError::io(&metrics_path, e))?;
    writeln!(metrics_file, "epoch,loss,train_hits1,lr,wall_s")
        .map_err(|e| PipelineError::io(&metrics_path, e))?;

    let pairs_per_epoch: usize = data.dialogues.iter().map(|d| d.turns.len()).sum();
    let steps_per_epoch = pairs_per_epoch.div_ceil(config.batch_size / 2).max(1);
    let total_steps = (steps_per_epoch * config.epochs) as f64;

    let hp_base = AdamW {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamW::default()
    };

    let mut metrics = Vec::with_capacity(config.epochs);
    let mut best_hits1 = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut step = 0usize;
    let mut last_lr = hp_base.lr;
    let mut dropout_rng = seeded_rng(config.seed ^ 0x9e3779b97f4a7c15);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut plan = plan_epoch(
            data.dialogues,
            epoch,
            config.seed,
            config.epochs,
            config.allow_negative_reuse,
        )?;
        // Shuffle pairs, then batch them whole so every batch stays 1:1.
        let mut epoch_rng = seeded_rng(config.seed.wrapping_add(epoch as u64).wrapping_mul(0x100000001b3));
        rand::seq::SliceRandom::shuffle(plan.items.as_mut_slice(), &mut epoch_rng);

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for chunk in plan.items.chunks(config.batch_size / 2) {
            bundle.zero_grads();
            let losses_in_batch = match config.loss {
                LossKind::Bce => (chunk.len() * 2) as f64,
                LossKind::PairwiseSoftmax => chunk.len() as f64,
            };
            let check = |loss: f64| {
                if loss.is_finite() {
                    Ok(loss)
                } else {
                    Err(PipelineError::Numerical(format!(
                        "non-finite loss at epoch {epoch}; last good checkpoint: {}",
                        latest.display()
                    )))
                }
            };
            for item in chunk {
                match config.loss {
                    LossKind::Bce => {
                        for (c_idx, label) in [(item.positive, 1.0), (item.negative, 0.0)] {
                            let inputs = data.forward_inputs(
                                &annotation_index,
                                vocab,
                                item.dialogue_idx,
                                item.turn_idx,
                                c_idx,
                                needs_concepts,
                            )?;
                            let (logit, cache) =
                                bundle.forward(&inputs, Mode::Train, &mut dropout_rng)?;
                            let (loss, d_logit) = sigmoid_bce(logit, label);
                            loss_sum += check(loss)?;
                            loss_count += 1;
                            bundle.backward(&cache, d_logit / losses_in_batch);
                        }
                    }
                    LossKind::PairwiseSoftmax => {
                        let forward = |c_idx: usize, rng: &mut _| {
                            let inputs = data.forward_inputs(
                                &annotation_index,
                                vocab,
                                item.dialogue_idx,
                                item.turn_idx,
                                c_idx,
                                needs_concepts,
                            )?;
                            bundle.forward(&inputs, Mode::Train, rng)
                        };
                        let (pos_logit, pos_cache) = forward(item.positive, &mut dropout_rng)?;
                        let (neg_logit, neg_cache) = forward(item.negative, &mut dropout_rng)?;
                        let m = pos_logit.max(neg_logit);
                        let log_z = m + ((pos_logit - m).exp() + (neg_logit - m).exp()).ln();
                        loss_sum += check(log_z - pos_logit)?;
                        loss_count += 1;
                        let p_pos = (pos_logit - log_z).exp();
                        let p_neg = (neg_logit - log_z).exp();
                        bundle.backward(&pos_cache, (p_pos - 1.0) / losses_in_batch);
                        bundle.backward(&neg_cache, p_neg / losses_in_batch);
                    }
                }
            }
            let decay = 1.0 - step as f64 / total_steps;
            let hp = AdamW {
                lr: hp_base.lr * decay.max(0.0),
                ..hp_base
            };
            adamw_step(bundle, &hp, config.precision);
            last_lr = hp.lr;
            step += 1;
        }

        let epoch_loss = loss_sum / loss_count.max(1) as f64;
        let train_hits1 = evaluation::hits_at_1(bundle, vocab, data, &annotation_index)?;
        let selection_hits = match valid {
            Some(v) => {
                let v_index = v.annotation_index()?;
                evaluation::hits_at_1(bundle, vocab, v, &v_index)?
            }
            None => train_hits1,
        };

        save_checkpoint(bundle, &latest, config.precision)?;
        if selection_hits > best_hits1 {
            best_hits1 = selection_hits;
            best_epoch = epoch;
            save_checkpoint(bundle, &best, config.precision)?;
        }

        let row = EpochMetrics {
            epoch,
            loss: epoch_loss,
            train_hits1,
            lr: last_lr,
            wall_s: started.elapsed().as_secs_f64(),
        };
        writeln!(
            metrics_file,
            "{},{},{},{},{}",
            row.epoch, row.loss, row.train_hits1, row.lr, row.wall_s
        )
        .map_err(|e| PipelineError::io(&metrics_path, e))?;
        log::info!(
            "epoch {epoch}: loss {:.6} train_hits1 {:.4}",
            row.loss,
            row.train_hits1
        );
        metrics.push(row);
    }

    Ok(TrainReport {
        metrics,
        best_hits1,
        best_epoch,
        latest_checkpoint: latest,
        best_checkpoint: best,
    })
}

#[cfg(test)]
mod tests;
