//! Cross-attention interaction between two layer stacks, and the scoring
//! head.
//!
//! Per layer: each side attends to the other, the two attended sequences are
//! concatenated along the token axis, a two-layer feed-forward runs per
//! position, and real positions are mean-pooled; the per-layer vectors are
//! averaged into the matching vector. Token-axis concatenation keeps the two
//! sides' differing lengths well-defined, and because mean pooling ignores
//! position order the fusion is symmetric under operand swap when the two
//! attention directions share weights.

use rand_chacha::ChaCha8Rng;

use crate::encoders::LayerStack;
use crate::error::{PipelineError, Result};
use crate::neural::attention::MhaCache;
use crate::neural::ops::FeedForwardCache;
use crate::neural::tensor::Tensor;
use crate::neural::{
    mean_pool_backward, sigmoid, Activation, FeedForward, Linear, MultiHeadAttention,
    ParamCollection, Parameter,
};
use crate::neural::ops::LinearCache;

pub struct InteractionLayer {
    /// Attention with queries from side a, keys/values from side b.
    pub ab: MultiHeadAttention,
    /// Attention with queries from side b, keys/values from side a.
    pub ba: MultiHeadAttention,
    pub ffn: FeedForward,
    pub dim: usize,
}

pub struct InteractCache {
    per_layer: Vec<LayerInteraction>,
    a_rows: usize,
    b_rows: usize,
    a_real: usize,
    b_real: usize,
}

struct LayerInteraction {
    ab: MhaCache,
    ba: MhaCache,
    ffn: FeedForwardCache,
}

impl InteractionLayer {
    pub fn new(rng: &mut ChaCha8Rng, name: &str, dim: usize, heads: usize, hidden: usize) -> Result<Self> {
        Ok(InteractionLayer {
            ab: MultiHeadAttention::new(rng, &format!("{name}.ab"), dim, heads)?,
            ba: MultiHeadAttention::new(rng, &format!("{name}.ba"), dim, heads)?,
            ffn: FeedForward::new(rng, &format!("{name}.ffn"), dim, hidden, dim, Activation::Gelu),
            dim,
        })
    }

    /// Fuse two stacks into one [dim] vector.
    pub fn forward(&self, a: &LayerStack, b: &LayerStack) -> Result<(Tensor, InteractCache)> {
        if a.k() != b.k() {
            return Err(PipelineError::Shape(format!(
                "layer stacks differ in k: {} vs {}",
                a.k(),
                b.k()
            )));
        }
        if a.dim() != self.dim || b.dim() != self.dim {
            return Err(PipelineError::Shape(format!(
                "stack width {} / {} does not match interaction width {}",
                a.dim(),
                b.dim(),
                self.dim
            )));
        }
        let (a_rows, b_rows) = (a.layers[0].rows(), b.layers[0].rows());
        let pooled_count = a.real_len + b.real_len;
        let mut per_layer = Vec::with_capacity(a.k());
        let mut pooled = Vec::with_capacity(a.k());
        for l in 0..a.k() {
            let (a_tilde, ab) = self.ab.forward(&a.layers[l], &b.layers[l], b.real_len)?;
            let (b_tilde, ba) = self.ba.forward(&b.layers[l], &a.layers[l], a.real_len)?;
            let concat = Tensor::vcat(&[&a_tilde, &b_tilde]);
            let (f, ffn) = self.ffn.forward(&concat);
            // Mean over real positions of both sides.
            let mut vec = Tensor::zeros(&[self.dim]);
            for i in 0..a.real_len {
                add_into(&mut vec, f.row(i));
            }
            for i in 0..b.real_len {
                add_into(&mut vec, f.row(a_rows + i));
            }
            vec.scale(1.0 / pooled_count as f64);
            pooled.push(vec);
            per_layer.push(LayerInteraction { ab, ba, ffn });
        }
        let h_d = crate::neural::mean_pool(&pooled)?;
        Ok((
            h_d,
            InteractCache {
                per_layer,
                a_rows,
                b_rows,
                a_real: a.real_len,
                b_real: b.real_len,
            },
        ))
    }

    /// Returns per-layer gradients for both stacks.
    pub fn backward(
        &mut self,
        cache: &InteractCache,
        grad_hd: &Tensor,
    ) -> (Vec<Tensor>, Vec<Tensor>) {
        let k = cache.per_layer.len();
        let d_layer_vec = mean_pool_backward(grad_hd, k);
        let pooled_count = (cache.a_real + cache.b_real) as f64;
        let mut d_a = Vec::with_capacity(k);
        let mut d_b = Vec::with_capacity(k);
        for layer in &cache.per_layer {
            // Spread the pooled gradient over real positions.
            let total_rows = cache.a_rows + cache.b_rows;
            let mut d_f = Tensor::zeros(&[total_rows, self.dim]);
            for i in 0..cache.a_real {
                scaled_copy(d_f.row_mut(i), d_layer_vec.data(), 1.0 / pooled_count);
            }
            for i in 0..cache.b_real {
                scaled_copy(
                    d_f.row_mut(cache.a_rows + i),
                    d_layer_vec.data(),
                    1.0 / pooled_count,
                );
            }
            let d_concat = self.ffn.backward(&layer.ffn, &d_f);
            let mut d_a_tilde = Tensor::zeros(&[cache.a_rows, self.dim]);
            let mut d_b_tilde = Tensor::zeros(&[cache.b_rows, self.dim]);
            for i in 0..cache.a_rows {
                d_a_tilde.row_mut(i).copy_from_slice(d_concat.row(i));
            }
            for i in 0..cache.b_rows {
                d_b_tilde.row_mut(i).copy_from_slice(d_concat.row(cache.a_rows + i));
            }
            let (d_a_q, d_b_kv) = self.ab.backward(&layer.ab, &d_a_tilde);
            let (d_b_q, d_a_kv) = self.ba.backward(&layer.ba, &d_b_tilde);
            let mut da = d_a_q;
            da.add_assign(&d_a_kv);
            let mut db = d_b_q;
            db.add_assign(&d_b_kv);
            d_a.push(da);
            d_b.push(db);
        }
        (d_a, d_b)
    }
}

impl ParamCollection for InteractionLayer {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.ab.visit(f);
        self.ba.visit(f);
        self.ffn.visit(f);
    }
}

fn add_into(acc: &mut Tensor, row: &[f64]) {
    for (a, &v) in acc.data_mut().iter_mut().zip(row) {
        *a += v;
    }
}

fn scaled_copy(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = s * scale;
    }
}

/// Single linear layer over the (optionally concept-augmented) matching
/// vector, squashed through a sigmoid.
pub struct ScoreHead {
    pub lin: Linear,
    pub input_dim: usize,
}

pub struct ScoreCache {
    lin: LinearCache,
    with_concept: bool,
    hd_dim: usize,
}

impl ScoreHead {
    pub fn new(rng: &mut ChaCha8Rng, name: &str, input_dim: usize) -> ScoreHead {
        ScoreHead {
            lin: Linear::new(rng, name, input_dim, 1),
            input_dim,
        }
    }

    /// Returns the raw logit; apply [`sigmoid`] for the probability.
    pub fn forward(&self, h_d: &Tensor, h_concept: Option<&Tensor>) -> Result<(f64, ScoreCache)> {
        let mut features: Vec<f64> = h_d.data().to_vec();
        if let Some(c) = h_concept {
            features.extend_from_slice(c.data());
        }
        if features.len() != self.input_dim {
            return Err(PipelineError::Shape(format!(
                "score head expects {} features, got {}",
                self.input_dim,
                features.len()
            )));
        }
        let x = Tensor::from_vec(&[1, self.input_dim], features);
        let (y, lin) = self.lin.forward(&x);
        Ok((
            y.data()[0],
            ScoreCache {
                lin,
                with_concept: h_concept.is_some(),
                hd_dim: h_d.len(),
            },
        ))
    }

    pub fn probability(&self, h_d: &Tensor, h_concept: Option<&Tensor>) -> Result<f64> {
        Ok(sigmoid(self.forward(h_d, h_concept)?.0))
    }

    /// Returns (grad h_d, grad h_concept when present).
    pub fn backward(&mut self, cache: &ScoreCache, d_logit: f64) -> (Tensor, Option<Tensor>) {
        let grad_out = Tensor::from_vec(&[1, 1], vec![d_logit]);
        let dx = self.lin.backward(&cache.lin, &grad_out);
        let data = dx.data();
        let d_hd = Tensor::from_vec(&[cache.hd_dim], data[..cache.hd_dim].to_vec());
        let d_hc = cache
            .with_concept
            .then(|| Tensor::from_vec(&[data.len() - cache.hd_dim], data[cache.hd_dim..].to_vec()));
        (d_hd, d_hc)
    }
}

impl ParamCollection for ScoreHead {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.lin.visit(f);
    }
}
