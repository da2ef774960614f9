//! Concept-flow encoding: embed mined concepts, run a BiGRU over each
//! concept sequence in conversation order, pool the final direction-layer
//! states through learned projections under tanh, and cross-interact the two
//! step-output sequences into the feature vector the score head consumes.

use rand_chacha::ChaCha8Rng;

use crate::concepts::Concept;
use crate::corpus::{ReservedToken, Vocab};
use crate::encoders::interact::{InteractCache, InteractionLayer};
use crate::encoders::LayerStack;
use crate::error::Result;
use crate::neural::gru::{BiGru, BiGruCache};
use crate::neural::ops::DropoutCache;
use crate::neural::param::{init_projection, Parameter};
use crate::neural::tensor::Tensor;
use crate::neural::{Dropout, Embedding, Mode, ParamCollection};

#[derive(Debug, Clone, Copy)]
pub struct ConceptFlowConfig {
    /// Concept embedding / GRU hidden width.
    pub dim: usize,
    pub gru_layers: usize,
    pub dropout: f64,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub vocab_size: usize,
}

/// The concept-flow network. The interaction sub-layer owns fresh weights
/// (not shared with the encoder-side interaction) and operates on the
/// direction-concatenated step outputs, so its width is `2 * dim`.
pub struct ConceptFlow {
    pub cfg: ConceptFlowConfig,
    pub embedding: Embedding,
    pub gru: BiGru,
    /// Pooling projections, one per (layer, direction) final state,
    /// each mapping dim -> 2*dim.
    pub pool: Vec<Parameter>,
    pub interaction: InteractionLayer,
    pub dropout: Dropout,
}

pub struct FlowCache {
    ids_per_concept: Vec<Vec<u32>>,
    gru: BiGruCache,
    finals: Vec<Tensor>,
    pooled_pre: Tensor,
}

pub struct ConceptInteractCache {
    context_drop: DropoutCache,
    response_drop: DropoutCache,
    interact: InteractCache,
    context_rows: usize,
    response_rows: usize,
}

impl ConceptFlow {
    pub fn new(rng: &mut ChaCha8Rng, name: &str, cfg: ConceptFlowConfig) -> Result<ConceptFlow> {
        let embedding = Embedding::new(crate::neural::param::init_embedding(
            rng,
            format!("{name}.emb"),
            cfg.vocab_size,
            cfg.dim,
        ));
        let gru = BiGru::new(rng, &format!("{name}.gru"), cfg.dim, cfg.dim, cfg.gru_layers);
        let pool = (0..2 * cfg.gru_layers)
            .map(|j| init_projection(rng, format!("{name}.pool{j}"), cfg.dim, 2 * cfg.dim))
            .collect();
        let interaction = InteractionLayer::new(
            rng,
            &format!("{name}.interact"),
            2 * cfg.dim,
            cfg.heads,
            cfg.ffn_hidden,
        )?;
        Ok(ConceptFlow {
            cfg,
            embedding,
            gru,
            pool,
            interaction,
            dropout: Dropout::new(cfg.dropout),
        })
    }

    /// One embedding row per concept: the mean of its tokens' embeddings.
    /// An empty concept list maps to the single learned [NOC] row so the
    /// downstream shape contract never degenerates.
    pub fn embed_concepts(&self, concepts: &[Concept], vocab: &Vocab) -> (Tensor, Vec<Vec<u32>>) {
        let mut ids_per_concept: Vec<Vec<u32>> = concepts
            .iter()
            .map(|c| vocab.encode(&c.surface))
            .filter(|ids| !ids.is_empty())
            .collect();
        if ids_per_concept.is_empty() {
            ids_per_concept.push(vec![vocab.reserved(ReservedToken::Noc)]);
        }
        let d = self.cfg.dim;
        let mut out = Tensor::zeros(&[ids_per_concept.len(), d]);
        for (i, ids) in ids_per_concept.iter().enumerate() {
            let rows = self.embedding.forward(ids).expect("vocab ids are in range");
            let row = out.row_mut(i);
            for t in 0..ids.len() {
                for (o, &v) in row.iter_mut().zip(rows.row(t)) {
                    *o += v;
                }
            }
            let scale = 1.0 / ids.len() as f64;
            for o in row.iter_mut() {
                *o *= scale;
            }
        }
        (out, ids_per_concept)
    }

    /// BiGRU over the concept embeddings. Returns the per-step outputs
    /// (the sequences the interaction consumes) and the pooled vector
    /// tanh(sum_j W_j h_j) over the 2*layers final direction states.
    pub fn flow_encode(&self, concepts: &[Concept], vocab: &Vocab) -> Result<(Tensor, Tensor, FlowCache)> {
        let (emb, ids_per_concept) = self.embed_concepts(concepts, vocab);
        let (out, gru_cache) = self.gru.forward(&emb)?;

        let mut pooled_pre = Tensor::zeros(&[2 * self.cfg.dim]);
        for (w, h) in self.pool.iter().zip(&out.finals) {
            // h [dim] x W [dim, 2*dim]
            let h2 = Tensor::from_vec(&[1, self.cfg.dim], h.data().to_vec());
            let proj = h2.matmul(&w.value);
            for (acc, &v) in pooled_pre.data_mut().iter_mut().zip(proj.data()) {
                *acc += v;
            }
        }
        let mut pooled = pooled_pre.clone();
        for v in pooled.data_mut() {
            *v = v.tanh();
        }
        Ok((
            out.outputs,
            pooled,
            FlowCache {
                ids_per_concept,
                gru: gru_cache,
                finals: out.finals,
                pooled_pre,
            },
        ))
    }

    /// Backward through [`flow_encode`]. `d_outputs` is the gradient on the
    /// step outputs, `d_pooled` on the tanh-pooled vector.
    pub fn flow_backward(&mut self, cache: &FlowCache, d_outputs: &Tensor, d_pooled: Option<&Tensor>) {
        let mut d_finals: Vec<Tensor> = (0..2 * self.gru.layers.len())
            .map(|_| Tensor::zeros(&[self.cfg.dim]))
            .collect();
        if let Some(dp) = d_pooled {
            // d(pre) = dp * (1 - tanh(pre)^2)
            let mut d_pre = dp.clone();
            for (g, &pre) in d_pre.data_mut().iter_mut().zip(cache.pooled_pre.data()) {
                let t = pre.tanh();
                *g *= 1.0 - t * t;
            }
            let d_pre_row = Tensor::from_vec(&[1, 2 * self.cfg.dim], d_pre.data().to_vec());
            for (j, w) in self.pool.iter_mut().enumerate() {
                let h = &cache.finals[j];
                let h_row = Tensor::from_vec(&[1, self.cfg.dim], h.data().to_vec());
                w.grad.add_assign(&h_row.matmul_tn(&d_pre_row));
                let dh = d_pre_row.matmul_nt(&w.value);
                for (acc, &v) in d_finals[j].data_mut().iter_mut().zip(dh.data()) {
                    *acc += v;
                }
            }
        }
        let d_emb = self.gru.backward(&cache.gru, d_outputs, Some(&d_finals));
        // Mean-of-token-embeddings backward: each token row receives
        // grad / token_count.
        for (i, ids) in cache.ids_per_concept.iter().enumerate() {
            let scale = 1.0 / ids.len() as f64;
            let mut g = Tensor::zeros(&[ids.len(), self.cfg.dim]);
            for t in 0..ids.len() {
                for (o, &v) in g.row_mut(t).iter_mut().zip(d_emb.row(i)) {
                    *o = v * scale;
                }
            }
            self.embedding.backward(ids, &g);
        }
    }

    /// Cross-interaction between the two step-output sequences (single-layer
    /// stacks), with dropout on the hidden representations in train mode.
    pub fn concept_interact(
        &self,
        context_states: &Tensor,
        response_states: &Tensor,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, ConceptInteractCache)> {
        let (cd, context_drop) = self.dropout.forward(context_states, mode, rng);
        let (rd, response_drop) = self.dropout.forward(response_states, mode, rng);
        let a = LayerStack {
            real_len: cd.rows(),
            layers: vec![cd],
        };
        let b = LayerStack {
            real_len: rd.rows(),
            layers: vec![rd],
        };
        let (h_concept, interact) = self.interaction.forward(&a, &b)?;
        Ok((
            h_concept,
            ConceptInteractCache {
                context_drop,
                response_drop,
                interact,
                context_rows: context_states.rows(),
                response_rows: response_states.rows(),
            },
        ))
    }

    /// Returns (grad on context states, grad on response states).
    pub fn concept_interact_backward(
        &mut self,
        cache: &ConceptInteractCache,
        grad_h: &Tensor,
    ) -> (Tensor, Tensor) {
        let (d_a, d_b) = self.interaction.backward(&cache.interact, grad_h);
        debug_assert_eq!(d_a.len(), 1);
        debug_assert_eq!(d_a[0].rows(), cache.context_rows);
        debug_assert_eq!(d_b[0].rows(), cache.response_rows);
        let d_context = self.dropout.backward(&cache.context_drop, &d_a[0]);
        let d_response = self.dropout.backward(&cache.response_drop, &d_b[0]);
        (d_context, d_response)
    }

    /// Output width of [`concept_interact`] (and of the pooled flow vector).
    pub fn feature_dim(&self) -> usize {
        2 * self.cfg.dim
    }
}

impl ParamCollection for ConceptFlow {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.embedding.table);
        self.gru.visit(f);
        for p in &mut self.pool {
            f(p);
        }
        self.interaction.visit_params(f);
    }
}
