//! Trainable parameters, initialization, and the AdamW update.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::neural::tensor::Tensor;
use crate::neural::Precision;

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// AdamW first moment.
    pub m: Tensor,
    /// AdamW second moment.
    pub v: Tensor,
    pub step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Parameter {
        let shape = value.shape().to_vec();
        Parameter {
            name: name.into(),
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            step: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Projection matrices: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn init_projection(
    rng: &mut ChaCha8Rng,
    name: impl Into<String>,
    fan_in: usize,
    fan_out: usize,
) -> Parameter {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random::<f64>() * 2.0 * bound - bound)
        .collect();
    Parameter::new(name, Tensor::from_vec(&[fan_in, fan_out], data))
}

/// Embedding tables: normal(0, 0.02).
pub fn init_embedding(
    rng: &mut ChaCha8Rng,
    name: impl Into<String>,
    rows: usize,
    cols: usize,
) -> Parameter {
    let normal = Normal::new(0.0, 0.02).expect("valid stddev");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Parameter::new(name, Tensor::from_vec(&[rows, cols], data))
}

pub fn init_zeros(name: impl Into<String>, shape: &[usize]) -> Parameter {
    Parameter::new(name, Tensor::zeros(shape))
}

pub fn init_ones(name: impl Into<String>, shape: &[usize]) -> Parameter {
    let mut t = Tensor::zeros(shape);
    t.fill(1.0);
    Parameter::new(name, t)
}

/// Anything holding trainable parameters. Visit order must be stable: it
/// defines checkpoint layout and gradient-check coordinates.
pub trait ParamCollection {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Parameter));

    fn zero_grads(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_| n += 1);
        n
    }

    fn scalar_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }

    /// Run `f` on the `idx`-th parameter in visit order.
    fn with_param<R>(&mut self, idx: usize, f: impl FnOnce(&mut Parameter) -> R) -> Option<R>
    where
        Self: Sized,
    {
        let mut at = 0usize;
        let mut f = Some(f);
        let mut out = None;
        self.visit_params(&mut |p| {
            if at == idx {
                if let Some(f) = f.take() {
                    out = Some(f(p));
                }
            }
            at += 1;
        });
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// One AdamW step over every parameter: bias-corrected moments, decoupled
/// weight decay applied to the pre-update value. With `Precision::F32` the
/// parameter state (value and moments) is quantized to f32 after the update.
pub fn adamw_step(params: &mut impl ParamCollection, hp: &AdamW, precision: Precision) {
    params.visit_params(&mut |p| {
        p.step += 1;
        let t = p.step as i32;
        let bc1 = 1.0 - hp.beta1.powi(t);
        let bc2 = 1.0 - hp.beta2.powi(t);
        let n = p.value.len();
        for i in 0..n {
            let g = p.grad.data()[i];
            let m = hp.beta1 * p.m.data()[i] + (1.0 - hp.beta1) * g;
            let v = hp.beta2 * p.v.data()[i] + (1.0 - hp.beta2) * g * g;
            p.m.data_mut()[i] = m;
            p.v.data_mut()[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let prev = p.value.data()[i];
            let update = hp.lr * m_hat / (v_hat.sqrt() + hp.eps) + hp.lr * hp.weight_decay * prev;
            p.value.data_mut()[i] = prev - update;
        }
        if precision == Precision::F32 {
            for t in [&mut p.value, &mut p.m, &mut p.v] {
                for v in t.data_mut() {
                    *v = *v as f32 as f64;
                }
            }
        }
    });
}
