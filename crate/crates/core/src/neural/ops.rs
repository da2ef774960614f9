//! Elementary differentiable operators. Every forward returns the cache its
//! hand-derived backward needs; backwards accumulate into parameter
//! gradients and return the gradient with respect to their inputs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PipelineError, Result};
use crate::neural::param::{init_projection, init_zeros, Parameter};
use crate::neural::tensor::Tensor;
use crate::neural::Mode;

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: Parameter, // [V, d]
}

impl Embedding {
    pub fn new(table: Parameter) -> Embedding {
        Embedding { table }
    }

    /// Row gather: ids -> [T, d]. Out-of-range ids are an error.
    pub fn forward(&self, ids: &[u32]) -> Result<Tensor> {
        let v = self.table.value.rows();
        let d = self.table.value.cols();
        let mut out = Tensor::zeros(&[ids.len(), d]);
        for (i, &id) in ids.iter().enumerate() {
            if id as usize >= v {
                return Err(PipelineError::Shape(format!(
                    "embedding id {id} out of range for table of {v}"
                )));
            }
            out.row_mut(i).copy_from_slice(self.table.value.row(id as usize));
        }
        Ok(out)
    }

    /// Scatter-add: duplicate ids accumulate.
    pub fn backward(&mut self, ids: &[u32], grad_out: &Tensor) {
        for (i, &id) in ids.iter().enumerate() {
            let g = grad_out.row(i);
            let row = self.table.grad.row_mut(id as usize);
            for (r, &v) in row.iter_mut().zip(g) {
                *r += v;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Parameter, // [din, dout]
    pub b: Parameter, // [dout]
}

pub struct LinearCache {
    x: Tensor,
}

impl Linear {
    pub fn new(rng: &mut ChaCha8Rng, name: &str, din: usize, dout: usize) -> Linear {
        Linear {
            w: init_projection(rng, format!("{name}.w"), din, dout),
            b: init_zeros(format!("{name}.b"), &[dout]),
        }
    }

    /// y = x W + b, x: [T, din] -> [T, dout]
    pub fn forward(&self, x: &Tensor) -> (Tensor, LinearCache) {
        let mut y = x.matmul(&self.w.value);
        let b = self.b.value.data();
        for i in 0..y.rows() {
            let row = y.row_mut(i);
            for (v, &bias) in row.iter_mut().zip(b) {
                *v += bias;
            }
        }
        y.debug_assert_finite();
        (y, LinearCache { x: x.clone() })
    }

    pub fn backward(&mut self, cache: &LinearCache, grad_out: &Tensor) -> Tensor {
        self.w.grad.add_assign(&cache.x.matmul_tn(grad_out));
        for i in 0..grad_out.rows() {
            let g = grad_out.row(i);
            for (bg, &v) in self.b.grad.data_mut().iter_mut().zip(g) {
                *bg += v;
            }
        }
        grad_out.matmul_nt(&self.w.value)
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Relu,
    Identity,
}

impl Activation {
    pub fn from_name(name: &str) -> Result<Activation> {
        match name {
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(PipelineError::Config(format!("unknown activation {other:?}"))),
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                // tanh approximation
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
            }
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                let u = c * (x + 0.044715 * x * x * x);
                let t = u.tanh();
                let du = c * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Feed-forward (two-layer MLP, applied per position)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
    pub activation: Activation,
}

pub struct FeedForwardCache {
    c1: LinearCache,
    pre: Tensor,
    c2: LinearCache,
}

impl FeedForward {
    pub fn new(
        rng: &mut ChaCha8Rng,
        name: &str,
        din: usize,
        hidden: usize,
        dout: usize,
        activation: Activation,
    ) -> FeedForward {
        FeedForward {
            lin1: Linear::new(rng, &format!("{name}.l1"), din, hidden),
            lin2: Linear::new(rng, &format!("{name}.l2"), hidden, dout),
            activation,
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, FeedForwardCache) {
        let (pre, c1) = self.lin1.forward(x);
        let mut act = pre.clone();
        for v in act.data_mut() {
            *v = self.activation.apply(*v);
        }
        let (y, c2) = self.lin2.forward(&act);
        (y, FeedForwardCache { c1, pre, c2 })
    }

    pub fn backward(&mut self, cache: &FeedForwardCache, grad_out: &Tensor) -> Tensor {
        let mut grad_act = self.lin2.backward(&cache.c2, grad_out);
        for (g, &x) in grad_act.data_mut().iter_mut().zip(cache.pre.data()) {
            *g *= self.activation.derivative(x);
        }
        self.lin1.backward(&cache.c1, &grad_act)
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.lin1.visit(f);
        self.lin2.visit(f);
    }
}

// ---------------------------------------------------------------------------
// Layer norm (over the feature axis, per position)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Parameter, // [d]
    pub beta: Parameter,  // [d]
    pub eps: f64,
}

pub struct LayerNormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(name: &str, d: usize) -> LayerNorm {
        LayerNorm {
            gamma: crate::neural::param::init_ones(format!("{name}.gamma"), &[d]),
            beta: init_zeros(format!("{name}.beta"), &[d]),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, LayerNormCache) {
        let (t, d) = (x.rows(), x.cols());
        let mut out = Tensor::zeros(&[t, d]);
        let mut normalized = Tensor::zeros(&[t, d]);
        let mut inv_std = Vec::with_capacity(t);
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        for i in 0..t {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std.push(is);
            for j in 0..d {
                let n = (row[j] - mean) * is;
                normalized.set(i, j, n);
                out.set(i, j, gamma[j] * n + beta[j]);
            }
        }
        (out, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, grad_out: &Tensor) -> Tensor {
        let (t, d) = (grad_out.rows(), grad_out.cols());
        let mut grad_x = Tensor::zeros(&[t, d]);
        let gamma = self.gamma.value.data();
        for i in 0..t {
            let g = grad_out.row(i);
            let n = cache.normalized.row(i);
            for j in 0..d {
                self.gamma.grad.data_mut()[j] += g[j] * n[j];
                self.beta.grad.data_mut()[j] += g[j];
            }
            // dx = inv_std * (dn - mean(dn) - n * mean(dn .* n))
            let dn: Vec<f64> = (0..d).map(|j| g[j] * gamma[j]).collect();
            let mean_dn = dn.iter().sum::<f64>() / d as f64;
            let mean_dn_n = dn.iter().zip(n).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            let is = cache.inv_std[i];
            let row = grad_x.row_mut(i);
            for j in 0..d {
                row[j] = is * (dn[j] - mean_dn - n[j] * mean_dn_n);
            }
        }
        grad_x
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

// ---------------------------------------------------------------------------
// Softmax rows
// ---------------------------------------------------------------------------

/// Softmax over the first `cols` entries of each row; the rest stay zero
/// (masked key positions).
pub fn softmax_rows(x: &Tensor, cols: usize) -> Tensor {
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.rows() {
        let row = x.row(i);
        let max = row[..cols].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let out_row = out.row_mut(i);
        for (o, &v) in out_row.iter_mut().zip(row).take(cols) {
            let e = (v - max).exp();
            *o = e;
            sum += e;
        }
        for o in out_row.iter_mut().take(cols) {
            *o /= sum;
        }
    }
    out
}

/// Backward through a row softmax: ds = (dp - sum(dp .* p)) .* p.
pub fn softmax_rows_backward(probs: &Tensor, grad_probs: &Tensor, cols: usize) -> Tensor {
    let mut out = Tensor::zeros(probs.shape());
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let dp = grad_probs.row(i);
        let dot: f64 = (0..cols).map(|j| dp[j] * p[j]).sum();
        let row = out.row_mut(i);
        for (j, r) in row.iter_mut().enumerate().take(cols) {
            *r = (dp[j] - dot) * p[j];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Dropout (inverted scaling)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f64,
}

pub struct DropoutCache {
    mask: Option<Tensor>,
}

impl Dropout {
    pub fn new(rate: f64) -> Dropout {
        assert!((0.0..1.0).contains(&rate), "dropout rate {rate} out of range");
        Dropout { rate }
    }

    /// Train mode samples an inverted-scaled mask; eval mode is the identity.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> (Tensor, DropoutCache) {
        match mode {
            Mode::Eval => (x.clone(), DropoutCache { mask: None }),
            Mode::Train => {
                let keep = 1.0 - self.rate;
                let mut mask = Tensor::zeros(x.shape());
                for v in mask.data_mut() {
                    *v = if rng.random::<f64>() < self.rate {
                        0.0
                    } else {
                        1.0 / keep
                    };
                }
                let mut y = x.clone();
                for (a, &m) in y.data_mut().iter_mut().zip(mask.data()) {
                    *a *= m;
                }
                (y, DropoutCache { mask: Some(mask) })
            }
        }
    }

    pub fn backward(&self, cache: &DropoutCache, grad_out: &Tensor) -> Tensor {
        match &cache.mask {
            None => grad_out.clone(),
            Some(mask) => {
                let mut g = grad_out.clone();
                for (a, &m) in g.data_mut().iter_mut().zip(mask.data()) {
                    *a *= m;
                }
                g
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

/// Elementwise mean of equally shaped tensors.
pub fn mean_pool(stack: &[Tensor]) -> Result<Tensor> {
    let first = stack
        .first()
        .ok_or_else(|| PipelineError::Shape("mean_pool of empty stack".into()))?;
    let mut out = first.clone();
    for t in &stack[1..] {
        if t.shape() != first.shape() {
            return Err(PipelineError::Shape(format!(
                "mean_pool shapes differ: {:?} vs {:?}",
                t.shape(),
                first.shape()
            )));
        }
        out.add_assign(t);
    }
    out.scale(1.0 / stack.len() as f64);
    Ok(out)
}

/// Backward of [`mean_pool`]: each input receives grad / k.
pub fn mean_pool_backward(grad_out: &Tensor, k: usize) -> Tensor {
    let mut g = grad_out.clone();
    g.scale(1.0 / k as f64);
    g
}

/// Mean over the first `rows` rows of a [T, d] tensor -> [d].
pub fn mean_rows(x: &Tensor, rows: usize) -> Tensor {
    let d = x.cols();
    let mut out = Tensor::zeros(&[d]);
    for i in 0..rows {
        let r = x.row(i);
        for (o, &v) in out.data_mut().iter_mut().zip(r) {
            *o += v;
        }
    }
    out.scale(1.0 / rows as f64);
    out
}

/// Backward of [`mean_rows`]: grad / rows spread over the pooled rows,
/// zeros elsewhere.
pub fn mean_rows_backward(grad_out: &Tensor, total_rows: usize, pooled_rows: usize) -> Tensor {
    let d = grad_out.cols();
    let mut g = Tensor::zeros(&[total_rows, d]);
    let scale = 1.0 / pooled_rows as f64;
    for i in 0..pooled_rows {
        let row = g.row_mut(i);
        for (o, &v) in row.iter_mut().zip(grad_out.data()) {
            *o = v * scale;
        }
    }
    g
}

// ---------------------------------------------------------------------------
// Sigmoid + binary cross-entropy
// ---------------------------------------------------------------------------

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable BCE on a logit: returns (loss, dloss/dlogit).
/// loss = -(y ln s + (1-y) ln(1-s)) with s = sigmoid(z); gradient s - y.
pub fn sigmoid_bce(logit: f64, y: f64) -> (f64, f64) {
    debug_assert!(y == 0.0 || y == 1.0, "target must be 0 or 1");
    let loss = logit.max(0.0) - logit * y + (1.0 + (-logit.abs()).exp()).ln();
    let grad = sigmoid(logit) - y;
    (loss, grad)
}
