//! Report emitters: the context-turn sweep and the variant ablation grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptStore, CooccurrenceStats, MineConfig, Miner, Stopwords};
use crate::corpus::Vocab;
use crate::error::Result;
use crate::evaluation::{evaluate, MetricsReport};
use crate::training::{train, BundleConfig, DataBundle, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub num_turns: usize,
    pub hits1: f64,
    pub mrr: f64,
}

/// One full mine+eval per context-window setting, model held fixed.
#[allow(clippy::too_many_arguments)]
pub fn sweep_turns(
    bundle: &crate::training::ModelBundle,
    vocab: &Vocab,
    data: &DataBundle<'_>,
    stats: &CooccurrenceStats,
    stopwords: &Stopwords,
    base_mine: MineConfig,
    range: std::ops::RangeInclusive<usize>,
    config_fingerprint: &str,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for num_turns in range {
        let mine_cfg = MineConfig {
            num_turns,
            ..base_mine
        };
        let miner = Miner::new(stats, stopwords, mine_cfg);
        let mined = miner.mine_corpus(data.dialogues);
        let store = ConceptStore::from_mined(mined);
        let rebundled = DataBundle {
            dialogues: data.dialogues,
            annotations: data.annotations,
            concepts: Some(&store),
        };
        let report = evaluate(
            bundle,
            vocab,
            &rebundled,
            &format!("sweep-num-turns-{num_turns}"),
            config_fingerprint,
            seed,
        )?;
        rows.push(SweepRow {
            num_turns,
            hits1: report.hits1,
            mrr: report.mrr,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("num_turns,hits1,mrr\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.num_turns, r.hits1, r.mrr));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<MetricsReport>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,hits1,mrr\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.variant, r.hits1, r.mrr));
        }
        out
    }
}

/// Train and evaluate each variant on identical data and seeds; rows share
/// one config fingerprint so reruns are comparable.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    variants: &[crate::training::Variant],
    bundle_cfg: BundleConfig,
    vocab: &Vocab,
    data: &DataBundle<'_>,
    eval_data: &DataBundle<'_>,
    train_cfg: &TrainConfig,
    config_fingerprint: &str,
    out_dir: &Path,
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let cfg = BundleConfig {
            variant,
            ..bundle_cfg
        };
        let tcfg = TrainConfig {
            variant,
            ..train_cfg.clone()
        };
        let run_dir = out_dir.join(format!("ablation-{}", variant.as_str().replace('+', "_")));
        train(cfg, vocab, data, None, &tcfg, &run_dir)?;
        // Evaluate the final state of the trained model.
        let mut rng = crate::neural::seeded_rng(tcfg.seed);
        let mut bundle = crate::training::ModelBundle::new(&mut rng, cfg)?;
        crate::neural::load_checkpoint(&mut bundle, run_dir.join("latest.ckpt"))?;
        rows.push(evaluate(
            &bundle,
            vocab,
            eval_data,
            "ablation",
            config_fingerprint,
            tcfg.seed,
        )?);
    }
    Ok(AblationReport { rows })
}
