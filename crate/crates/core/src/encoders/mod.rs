//! Token arrangements, the trainable transformer encoder, and the
//! cross-attention interaction layer that fuses two encoders' layer stacks
//! into a single matching vector.

pub mod arrange;
pub mod interact;

pub use arrange::{
    build_bot_context, build_cra, build_ema, build_ena_p, SequenceBuilder, TagOptions,
};
pub use interact::{InteractionLayer, ScoreHead};

use rand_chacha::ChaCha8Rng;

use crate::corpus::{ReservedToken, Vocab};
use crate::error::{PipelineError, Result};
use crate::neural::attention::MhaCache;
use crate::neural::ops::{FeedForwardCache, LayerNormCache};
use crate::neural::tensor::Tensor;
use crate::neural::{
    Activation, Embedding, FeedForward, LayerNorm, MultiHeadAttention, ParamCollection, Parameter,
};

/// Speaker channel values.
pub const SPEAKER_USER: u8 = 0;
pub const SPEAKER_BOT: u8 = 1;
pub const SPEAKER_NONE: u8 = 2;

/// Segment channel values.
pub const SEGMENT_CONTEXT: u8 = 0;
pub const SEGMENT_RESPONSE: u8 = 1;

/// One encoder input: token ids with aligned segment and speaker channels.
/// `len` is the true length; any suffix beyond it is [PAD] and is masked out
/// of attention. Positions are implicit (0..total length).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub segments: Vec<u8>,
    pub speakers: Vec<u8>,
    pub len: usize,
    /// Set when the builder had to drop context or truncate the response.
    pub truncated: bool,
}

impl TokenSequence {
    pub fn total_len(&self) -> usize {
        self.ids.len()
    }

    /// Append `n` [PAD] positions (segment 0, speaker non-dialogue).
    pub fn pad_to(&mut self, total: usize, vocab: &Vocab) {
        let pad = vocab.reserved(ReservedToken::Pad);
        while self.ids.len() < total {
            self.ids.push(pad);
            self.segments.push(SEGMENT_CONTEXT);
            self.speakers.push(SPEAKER_NONE);
        }
    }

    /// Channel alignment, length bound, [CLS] at 0, [SEP] present.
    pub fn validate(&self, vocab: &Vocab, max_len: usize) -> Result<()> {
        if self.ids.len() != self.segments.len() || self.ids.len() != self.speakers.len() {
            return Err(PipelineError::Shape("sequence channels differ in length".into()));
        }
        if self.len > self.ids.len() || self.ids.len() > max_len {
            return Err(PipelineError::Shape(format!(
                "sequence length {} exceeds maximum {max_len}",
                self.ids.len()
            )));
        }
        let cls = vocab.reserved(ReservedToken::Cls);
        if self.ids.first() != Some(&cls) {
            return Err(PipelineError::Integrity("sequence must start with [CLS]".into()));
        }
        if self.ids[1..].contains(&cls) {
            return Err(PipelineError::Integrity("sequence has more than one [CLS]".into()));
        }
        let sep = vocab.reserved(ReservedToken::Sep);
        if !self.ids[..self.len].contains(&sep) {
            return Err(PipelineError::Integrity("sequence is missing [SEP]".into()));
        }
        Ok(())
    }
}

/// Hidden states of the last `k` encoder layers, all [T, d], plus the number
/// of real (non-pad) positions.
#[derive(Debug, Clone)]
pub struct LayerStack {
    pub layers: Vec<Tensor>,
    pub real_len: usize,
}

impl LayerStack {
    pub fn k(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].cols()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderConfig {
    pub depth: usize,
    pub dim: usize,
    pub heads: usize,
    pub k_layers: usize,
    pub max_len: usize,
    pub vocab_size: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.dim.is_multiple_of(self.heads) {
            return Err(PipelineError::Config(format!(
                "encoder.dim {} not divisible by encoder.heads {}",
                self.dim, self.heads
            )));
        }
        if self.k_layers == 0 || self.k_layers > self.depth {
            return Err(PipelineError::Config(format!(
                "encoder.k_layers {} out of range for depth {}",
                self.k_layers, self.depth
            )));
        }
        if self.max_len < 8 {
            return Err(PipelineError::Config("encoder.max_len must be at least 8".into()));
        }
        Ok(())
    }
}

pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub ln1: LayerNorm,
    pub ffn: FeedForward,
    pub ln2: LayerNorm,
}

struct LayerCache {
    attn: MhaCache,
    ln1: LayerNormCache,
    ffn: FeedForwardCache,
    ln2: LayerNormCache,
}

impl EncoderLayer {
    fn forward(&self, x: &Tensor, key_len: usize) -> Result<(Tensor, LayerCache)> {
        let (a, attn) = self.attn.forward(x, x, key_len)?;
        let mut sum1 = x.clone();
        sum1.add_assign(&a);
        let (h, ln1) = self.ln1.forward(&sum1);
        let (f, ffn) = self.ffn.forward(&h);
        let mut sum2 = h.clone();
        sum2.add_assign(&f);
        let (y, ln2) = self.ln2.forward(&sum2);
        Ok((y, LayerCache { attn, ln1, ffn, ln2 }))
    }

    fn backward(&mut self, cache: &LayerCache, grad_out: &Tensor) -> Tensor {
        let d_sum2 = self.ln2.backward(&cache.ln2, grad_out);
        let mut d_h = self.ffn.backward(&cache.ffn, &d_sum2);
        d_h.add_assign(&d_sum2);
        let d_sum1 = self.ln1.backward(&cache.ln1, &d_h);
        let (dq, dkv) = self.attn.backward(&cache.attn, &d_sum1);
        let mut d_x = d_sum1;
        d_x.add_assign(&dq);
        d_x.add_assign(&dkv);
        d_x
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.attn.visit(f);
        self.ln1.visit(f);
        self.ffn.visit(f);
        self.ln2.visit(f);
    }
}

/// Transformer encoder over token + position + segment + speaker embeddings,
/// with post-layer-norm residual blocks.
pub struct EncoderModel {
    pub cfg: EncoderConfig,
    pub tok: Embedding,
    pub pos: Embedding,
    pub seg: Embedding,
    pub spk: Embedding,
    pub layers: Vec<EncoderLayer>,
}

pub struct EncodeCache {
    ids: Vec<u32>,
    pos_ids: Vec<u32>,
    seg_ids: Vec<u32>,
    spk_ids: Vec<u32>,
    layer_caches: Vec<LayerCache>,
}

impl EncoderModel {
    pub fn new(rng: &mut ChaCha8Rng, name: &str, cfg: EncoderConfig) -> Result<EncoderModel> {
        cfg.validate()?;
        let tok = Embedding::new(crate::neural::param::init_embedding(
            rng,
            format!("{name}.tok"),
            cfg.vocab_size,
            cfg.dim,
        ));
        let pos = Embedding::new(crate::neural::param::init_embedding(
            rng,
            format!("{name}.pos"),
            cfg.max_len,
            cfg.dim,
        ));
        let seg = Embedding::new(crate::neural::param::init_embedding(
            rng,
            format!("{name}.seg"),
            2,
            cfg.dim,
        ));
        let spk = Embedding::new(crate::neural::param::init_embedding(
            rng,
            format!("{name}.spk"),
            3,
            cfg.dim,
        ));
        let layers = (0..cfg.depth)
            .map(|l| {
                Ok(EncoderLayer {
                    attn: MultiHeadAttention::new(
                        rng,
                        &format!("{name}.layer{l}.attn"),
                        cfg.dim,
                        cfg.heads,
                    )?,
                    ln1: LayerNorm::new(&format!("{name}.layer{l}.ln1"), cfg.dim),
                    ffn: FeedForward::new(
                        rng,
                        &format!("{name}.layer{l}.ffn"),
                        cfg.dim,
                        4 * cfg.dim,
                        cfg.dim,
                        Activation::Gelu,
                    ),
                    ln2: LayerNorm::new(&format!("{name}.layer{l}.ln2"), cfg.dim),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EncoderModel {
            cfg,
            tok,
            pos,
            seg,
            spk,
            layers,
        })
    }

    /// Hidden states of the last `k` layers. Padding never enters attention,
    /// so outputs at real positions are independent of trailing [PAD]s.
    pub fn encode(&self, seq: &TokenSequence, k: usize) -> Result<(LayerStack, EncodeCache)> {
        if k == 0 || k > self.cfg.depth {
            return Err(PipelineError::Config(format!(
                "k = {k} out of range for encoder depth {}",
                self.cfg.depth
            )));
        }
        let t = seq.total_len();
        if t > self.cfg.max_len {
            return Err(PipelineError::Shape(format!(
                "sequence of {t} tokens exceeds encoder.max_len {}",
                self.cfg.max_len
            )));
        }
        if seq.len == 0 {
            return Err(PipelineError::Shape("cannot encode an empty sequence".into()));
        }
        let pos_ids: Vec<u32> = (0..t as u32).collect();
        let seg_ids: Vec<u32> = seq.segments.iter().map(|&s| s as u32).collect();
        let spk_ids: Vec<u32> = seq.speakers.iter().map(|&s| s as u32).collect();

        let mut x = self.tok.forward(&seq.ids)?;
        x.add_assign(&self.pos.forward(&pos_ids)?);
        x.add_assign(&self.seg.forward(&seg_ids)?);
        x.add_assign(&self.spk.forward(&spk_ids)?);

        let mut layer_outputs = Vec::with_capacity(self.cfg.depth);
        let mut layer_caches = Vec::with_capacity(self.cfg.depth);
        let mut h = x;
        for layer in &self.layers {
            let (y, cache) = layer.forward(&h, seq.len)?;
            layer_caches.push(cache);
            layer_outputs.push(y.clone());
            h = y;
        }
        let layers = layer_outputs.split_off(self.cfg.depth - k);
        Ok((
            LayerStack {
                layers,
                real_len: seq.len,
            },
            EncodeCache {
                ids: seq.ids.clone(),
                pos_ids,
                seg_ids,
                spk_ids,
                layer_caches,
            },
        ))
    }

    /// Backward from gradients on the last `k` layers' hidden states.
    pub fn backward(&mut self, cache: &EncodeCache, d_stack: &[Tensor]) {
        let depth = self.cfg.depth;
        let k = d_stack.len();
        let t = cache.ids.len();
        let mut d = Tensor::zeros(&[t, self.cfg.dim]);
        for l in (0..depth).rev() {
            if l >= depth - k {
                d.add_assign(&d_stack[l - (depth - k)]);
            }
            d = self.layers[l].backward(&cache.layer_caches[l], &d);
        }
        self.tok.backward(&cache.ids, &d);
        self.pos.backward(&cache.pos_ids, &d);
        self.seg.backward(&cache.seg_ids, &d);
        self.spk.backward(&cache.spk_ids, &d);
    }
}

impl ParamCollection for EncoderModel {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.tok.table);
        f(&mut self.pos.table);
        f(&mut self.seg.table);
        f(&mut self.spk.table);
        for layer in &mut self.layers {
            layer.visit(f);
        }
    }
}
