//! Multi-head scaled dot-product attention between two sequences, with key
//! padding masked out so padded positions cannot leak into real outputs.

use rand_chacha::ChaCha8Rng;

use crate::error::{PipelineError, Result};
use crate::neural::ops::{softmax_rows, softmax_rows_backward, Linear, LinearCache};
use crate::neural::param::Parameter;
use crate::neural::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub dim: usize,
}

pub struct MhaCache {
    cq: LinearCache,
    ck: LinearCache,
    cv: LinearCache,
    co: LinearCache,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Attention probabilities per head, each [Tq, Tk].
    pub(crate) probs: Vec<Tensor>,
    key_len: usize,
}

impl MhaCache {
    /// Row sums of every head's attention matrix over the real keys.
    pub fn attention_row_sums(&self) -> Vec<f64> {
        self.probs
            .iter()
            .flat_map(|p| {
                (0..p.rows()).map(|i| p.row(i)[..self.key_len].iter().sum::<f64>())
            })
            .collect()
    }
}

impl MultiHeadAttention {
    pub fn new(rng: &mut ChaCha8Rng, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if !dim.is_multiple_of(heads) {
            return Err(PipelineError::Config(format!(
                "attention width {dim} not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            wq: Linear::new(rng, &format!("{name}.wq"), dim, dim),
            wk: Linear::new(rng, &format!("{name}.wk"), dim, dim),
            wv: Linear::new(rng, &format!("{name}.wv"), dim, dim),
            wo: Linear::new(rng, &format!("{name}.wo"), dim, dim),
            heads,
            dim,
        })
    }

    /// Queries come from `q_src` [Tq, d], keys/values from `kv_src` [Tk, d].
    /// Only the first `key_len` key positions participate; the attention
    /// rows are a distribution over exactly those positions.
    pub fn forward(&self, q_src: &Tensor, kv_src: &Tensor, key_len: usize) -> Result<(Tensor, MhaCache)> {
        if q_src.cols() != self.dim || kv_src.cols() != self.dim {
            return Err(PipelineError::Shape(format!(
                "attention expects width {}, got {} and {}",
                self.dim,
                q_src.cols(),
                kv_src.cols()
            )));
        }
        if key_len == 0 || key_len > kv_src.rows() {
            return Err(PipelineError::Shape(format!(
                "key_len {key_len} out of range for {} keys",
                kv_src.rows()
            )));
        }
        let (tq, tk) = (q_src.rows(), kv_src.rows());
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let (q, cq) = self.wq.forward(q_src);
        let (k, ck) = self.wk.forward(kv_src);
        let (v, cv) = self.wv.forward(kv_src);

        let mut concat = Tensor::zeros(&[tq, self.dim]);
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let off = h * dh;
            let mut logits = Tensor::zeros(&[tq, tk]);
            for i in 0..tq {
                let qi = &q.row(i)[off..off + dh];
                for j in 0..key_len {
                    let kj = &k.row(j)[off..off + dh];
                    let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                    logits.set(i, j, dot * scale);
                }
            }
            let p = softmax_rows(&logits, key_len);
            for i in 0..tq {
                let out_row = &mut concat.row_mut(i)[off..off + dh];
                for j in 0..key_len {
                    let w = p.at(i, j);
                    if w == 0.0 {
                        continue;
                    }
                    let vj = &v.row(j)[off..off + dh];
                    for (o, &val) in out_row.iter_mut().zip(vj) {
                        *o += w * val;
                    }
                }
            }
            probs.push(p);
        }

        let (out, co) = self.wo.forward(&concat);
        out.debug_assert_finite();
        Ok((
            out,
            MhaCache {
                cq,
                ck,
                cv,
                co,
                q,
                k,
                v,
                probs,
                key_len,
            },
        ))
    }

    /// Returns (grad wrt q_src, grad wrt kv_src).
    pub fn backward(&mut self, cache: &MhaCache, grad_out: &Tensor) -> (Tensor, Tensor) {
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let tq = grad_out.rows();
        let tk = cache.k.rows();
        let key_len = cache.key_len;

        let d_concat = self.wo.backward(&cache.co, grad_out);

        let mut dq = Tensor::zeros(&[tq, self.dim]);
        let mut dk = Tensor::zeros(&[tk, self.dim]);
        let mut dv = Tensor::zeros(&[tk, self.dim]);

        for h in 0..self.heads {
            let off = h * dh;
            let p = &cache.probs[h];

            // dP and dV from the weighted sum out_h = P V_h.
            let mut dp = Tensor::zeros(&[tq, tk]);
            for i in 0..tq {
                let dout = &d_concat.row(i)[off..off + dh];
                for j in 0..key_len {
                    let vj = &cache.v.row(j)[off..off + dh];
                    let mut acc = 0.0;
                    for (a, b) in dout.iter().zip(vj) {
                        acc += a * b;
                    }
                    dp.set(i, j, acc);
                    let w = p.at(i, j);
                    if w != 0.0 {
                        let dvj = &mut dv.row_mut(j)[off..off + dh];
                        for (o, &g) in dvj.iter_mut().zip(dout) {
                            *o += w * g;
                        }
                    }
                }
            }

            let dlogits = softmax_rows_backward(p, &dp, key_len);

            for i in 0..tq {
                let dqi = &mut dq.row_mut(i)[off..off + dh];
                for j in 0..key_len {
                    let dl = dlogits.at(i, j) * scale;
                    if dl == 0.0 {
                        continue;
                    }
                    let kj = &cache.k.row(j)[off..off + dh];
                    for (o, &kv) in dqi.iter_mut().zip(kj) {
                        *o += dl * kv;
                    }
                }
            }
            for j in 0..key_len {
                let dkj = &mut dk.row_mut(j)[off..off + dh];
                for i in 0..tq {
                    let dl = dlogits.at(i, j) * scale;
                    if dl == 0.0 {
                        continue;
                    }
                    let qi = &cache.q.row(i)[off..off + dh];
                    for (o, &qv) in dkj.iter_mut().zip(qi) {
                        *o += dl * qv;
                    }
                }
            }
        }

        let grad_q_src = self.wq.backward(&cache.cq, &dq);
        let mut grad_kv_src = self.wk.backward(&cache.ck, &dk);
        grad_kv_src.add_assign(&self.wv.backward(&cache.cv, &dv));
        (grad_q_src, grad_kv_src)
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.wq.visit(f);
        self.wk.visit(f);
        self.wv.visit(f);
        self.wo.visit(f);
    }
}
