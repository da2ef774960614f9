//! Differentiable-operator kernel: embeddings, attention, feed-forward,
//! BiGRU, pooling, dropout, the sigmoid/BCE head, AdamW, a finite-difference
//! gradient checker, and the checkpoint container. No autodiff graph: every
//! composite operator ships a hand-derived backward, and the
//! finite-difference suite is the arbiter of correctness.

pub mod attention;
pub mod checkpoint;
pub mod gradcheck;
pub mod gru;
pub mod ops;
pub mod param;
pub mod tensor;

pub use attention::{MhaCache, MultiHeadAttention};
pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, ManifestEntry};
pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
pub use gru::{BiGru, BiGruCache, BiGruOutput, GruCell};
pub use ops::{
    mean_pool, mean_pool_backward, mean_rows, mean_rows_backward, sigmoid, sigmoid_bce,
    softmax_rows, softmax_rows_backward, Activation, Dropout, Embedding, FeedForward, LayerNorm,
    Linear,
};
pub use param::{adamw_step, AdamW, ParamCollection, Parameter};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Forward-pass mode: dropout samples masks in `Train` and is the identity
/// in `Eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Numeric width of persisted parameter state. Arithmetic always runs in
/// f64; `F32` quantizes parameter values and optimizer moments after each
/// update and stores checkpoints as f32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn from_name(name: &str) -> crate::Result<Precision> {
        match name {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(crate::PipelineError::Config(format!(
                "unknown precision {other:?}"
            ))),
        }
    }
}

/// The crate-wide deterministic RNG.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
