//! Flat key=value run configuration with a validated key registry.
//!
//! Settings merge in order: registry defaults, then a config file, then
//! explicit overrides (CLI flags). Unknown keys are rejected so typos fail
//! loudly. The effective configuration has a stable fingerprint that
//! reports and manifests embed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::conceptflow::ConceptFlowConfig;
use crate::concepts::MineConfig;
use crate::encoders::EncoderConfig;
use crate::error::{PipelineError, Result};
use crate::neural::Precision;
use crate::training::{LossKind, TrainConfig, Variant};

/// (key, default, help)
const REGISTRY: &[(&str, &str, &str)] = &[
    ("seed", "0", "global RNG seed"),
    ("encoder.depth", "2", "transformer layers per encoder"),
    ("encoder.dim", "64", "hidden width"),
    ("encoder.heads", "4", "attention heads"),
    ("encoder.k_layers", "2", "layers fed to the interaction"),
    ("encoder.max_len", "320", "maximum sequence length"),
    ("concept.dim", "32", "concept embedding / GRU width"),
    ("concept.gru_layers", "2", "BiGRU layers in the concept encoder"),
    ("concept.dropout", "0.7", "dropout on concept hidden representations"),
    ("concept.enabled", "true", "build the concept-flow network"),
    ("concepts.lambda", "0.5", "mean-PMI pruning threshold"),
    ("concepts.top_n", "3", "key phrases kept per text unit"),
    ("concepts.top_m", "5", "keywords kept per text unit"),
    ("concepts.num_turns", "4", "context window for concept mining"),
    ("train.epochs", "19", "training epochs (negative rotation cycle)"),
    ("train.batch_size", "12", "examples per batch (even: pos/neg pairs)"),
    ("train.lr", "2e-5", "initial learning rate, linearly decayed"),
    ("train.weight_decay", "0.01", "decoupled AdamW weight decay"),
    ("train.variant", "all", "model variant"),
    ("train.allow_negative_reuse", "false", "rotate negatives modulo their count"),
    ("train.precision", "f64", "parameter state width (f32 or f64)"),
    ("train.loss", "bce", "objective: bce or pairwise_softmax"),
    ("annotate.threshold", "0.9", "emotion confidence cutoff"),
    ("annotate.labels", "default", "emotion label file (or \"default\")"),
    ("annotate.lexicon", "default", "stub emotion lexicon file (or \"default\")"),
    ("concepts.stopwords", "default", "stopword list file (or \"default\")"),
    ("annotate.ensemble_weight", "0.8", "dialogue-model weight in the entailment ensemble"),
    ("vocab.min_count", "1", "minimum token frequency for a vocab id"),
    ("data.candidates", "20", "candidates per turn (0 disables the check)"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: REGISTRY
                .iter()
                .map(|(k, v, _)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    pub fn registry() -> impl Iterator<Item = (&'static str, &'static str, &'static str)> {
        REGISTRY.iter().copied()
    }

    /// Defaults plus a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.merge_text(&text)?;
        Ok(cfg)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| PipelineError::Config(
                format!("line {}: expected key=value, got {raw:?}", idx + 1),
            ))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set one key: unknown keys are rejected against the registry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.values.contains_key(key) {
            return Err(PipelineError::Config(format!(
                "unknown config key {key:?}"
            )));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| PipelineError::Config(format!("unknown config key {key:?}")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.get(key)?
            .parse()
            .map_err(|_| PipelineError::Config(format!("{key} is not an integer: {:?}", self.get(key).unwrap())))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        self.get(key)?
            .parse()
            .map_err(|_| PipelineError::Config(format!("{key} is not an integer: {:?}", self.get(key).unwrap())))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        self.get(key)?
            .parse()
            .map_err(|_| PipelineError::Config(format!("{key} is not a number: {:?}", self.get(key).unwrap())))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.get(key)? {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(PipelineError::Config(format!(
                "{key} is not a boolean: {other:?}"
            ))),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.get_u64("seed")
    }

    /// Candidate-count check: `Some(n)` to enforce, `None` when disabled.
    pub fn expected_candidates(&self) -> Result<Option<usize>> {
        let n = self.get_usize("data.candidates")?;
        Ok((n > 0).then_some(n))
    }

    pub fn encoder(&self, vocab_size: usize) -> Result<EncoderConfig> {
        let cfg = EncoderConfig {
            depth: self.get_usize("encoder.depth")?,
            dim: self.get_usize("encoder.dim")?,
            heads: self.get_usize("encoder.heads")?,
            k_layers: self.get_usize("encoder.k_layers")?,
            max_len: self.get_usize("encoder.max_len")?,
            vocab_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn concept_flow(&self, vocab_size: usize) -> Result<ConceptFlowConfig> {
        let dim = self.get_usize("concept.dim")?;
        let heads = self.get_usize("encoder.heads")?;
        if (2 * dim) % heads != 0 {
            return Err(PipelineError::Config(format!(
                "concept interaction width {} not divisible by {heads} heads",
                2 * dim
            )));
        }
        Ok(ConceptFlowConfig {
            dim,
            gru_layers: self.get_usize("concept.gru_layers")?,
            dropout: self.get_f64("concept.dropout")?,
            heads,
            ffn_hidden: 4 * dim,
            vocab_size,
        })
    }

    pub fn mine(&self) -> Result<MineConfig> {
        Ok(MineConfig {
            top_m: self.get_usize("concepts.top_m")?,
            top_n: self.get_usize("concepts.top_n")?,
            lambda: self.get_f64("concepts.lambda")?,
            num_turns: self.get_usize("concepts.num_turns")?,
        })
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.get_usize("train.epochs")?,
            batch_size: self.get_usize("train.batch_size")?,
            lr: self.get_f64("train.lr")?,
            weight_decay: self.get_f64("train.weight_decay")?,
            seed: self.seed()?,
            variant: Variant::from_name(self.get("train.variant")?)?,
            allow_negative_reuse: self.get_bool("train.allow_negative_reuse")?,
            precision: Precision::from_name(self.get("train.precision")?)?,
            loss: LossKind::from_name(self.get("train.loss")?)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Effective settings, one `key=value` per line, sorted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the rendered effective configuration.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.render().as_bytes());
        hex::encode(hasher.finalize())
    }
}
