//! Gated recurrent units with full backpropagation through time, stacked
//! into a bidirectional encoder.
//!
//! Gating follows the common formulation with the reset gate applied to the
//! hidden-to-candidate affine term:
//!   r = sigmoid(x Wir + b_ir + h Whr + b_hr)
//!   z = sigmoid(x Wiz + b_iz + h Whz + b_hz)
//!   n = tanh(x Win + b_in + r .* (h Whn + b_hn))
//!   h' = (1 - z) .* n + z .* h

use rand_chacha::ChaCha8Rng;

use crate::error::{PipelineError, Result};
use crate::neural::param::{init_projection, init_zeros, Parameter};
use crate::neural::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_ir: Parameter,
    pub w_iz: Parameter,
    pub w_in: Parameter,
    pub w_hr: Parameter,
    pub w_hz: Parameter,
    pub w_hn: Parameter,
    pub b_ir: Parameter,
    pub b_iz: Parameter,
    pub b_in: Parameter,
    pub b_hr: Parameter,
    pub b_hz: Parameter,
    pub b_hn: Parameter,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

pub struct GruStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// h_prev Whn + b_hn, the term the reset gate multiplies.
    hn_aff: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// out[k] += x · W[:,k] for W [din, dh].
fn affine(x: &[f64], w: &Tensor, b: &[f64], out: &mut [f64]) {
    out.copy_from_slice(b);
    for (j, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = w.row(j);
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xv * wv;
        }
    }
}

/// dW += outer(x, d); dx[j] += W[j,:] · d.
fn affine_backward(x: &[f64], w: &mut Parameter, d: &[f64], dx: &mut [f64]) {
    let dh = d.len();
    let Parameter { value, grad, .. } = w;
    for (j, &xv) in x.iter().enumerate() {
        let grow = &mut grad.data_mut()[j * dh..(j + 1) * dh];
        for (g, &dv) in grow.iter_mut().zip(d) {
            *g += xv * dv;
        }
        let wrow = value.row(j);
        let mut acc = 0.0;
        for (&wv, &dv) in wrow.iter().zip(d) {
            acc += wv * dv;
        }
        dx[j] += acc;
    }
}

impl GruCell {
    pub fn new(rng: &mut ChaCha8Rng, name: &str, input_dim: usize, hidden_dim: usize) -> GruCell {
        let p = |rng: &mut ChaCha8Rng, suffix: &str, din: usize| {
            init_projection(rng, format!("{name}.{suffix}"), din, hidden_dim)
        };
        let b = |suffix: &str| init_zeros(format!("{name}.{suffix}"), &[hidden_dim]);
        GruCell {
            w_ir: p(rng, "w_ir", input_dim),
            w_iz: p(rng, "w_iz", input_dim),
            w_in: p(rng, "w_in", input_dim),
            w_hr: p(rng, "w_hr", hidden_dim),
            w_hz: p(rng, "w_hz", hidden_dim),
            w_hn: p(rng, "w_hn", hidden_dim),
            b_ir: b("b_ir"),
            b_iz: b("b_iz"),
            b_in: b("b_in"),
            b_hr: b("b_hr"),
            b_hz: b("b_hz"),
            b_hn: b("b_hn"),
            input_dim,
            hidden_dim,
        }
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruStepCache) {
        let dh = self.hidden_dim;
        let mut r = vec![0.0; dh];
        let mut z = vec![0.0; dh];
        let mut n = vec![0.0; dh];
        let mut hn_aff = vec![0.0; dh];
        let mut tmp = vec![0.0; dh];

        affine(x, &self.w_ir.value, self.b_ir.value.data(), &mut r);
        affine(h_prev, &self.w_hr.value, self.b_hr.value.data(), &mut tmp);
        for (rv, &t) in r.iter_mut().zip(&tmp) {
            *rv = sigmoid(*rv + t);
        }

        affine(x, &self.w_iz.value, self.b_iz.value.data(), &mut z);
        affine(h_prev, &self.w_hz.value, self.b_hz.value.data(), &mut tmp);
        for (zv, &t) in z.iter_mut().zip(&tmp) {
            *zv = sigmoid(*zv + t);
        }

        affine(h_prev, &self.w_hn.value, self.b_hn.value.data(), &mut hn_aff);
        affine(x, &self.w_in.value, self.b_in.value.data(), &mut n);
        for k in 0..dh {
            n[k] = (n[k] + r[k] * hn_aff[k]).tanh();
        }

        let h_new: Vec<f64> = (0..dh).map(|k| (1.0 - z[k]) * n[k] + z[k] * h_prev[k]).collect();
        (
            h_new,
            GruStepCache {
                x: x.to_vec(),
                h_prev: h_prev.to_vec(),
                r,
                z,
                n,
                hn_aff,
            },
        )
    }

    /// Accumulates parameter gradients; returns (dx, dh_prev).
    pub fn backward_step(&mut self, cache: &GruStepCache, dh_new: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dh = self.hidden_dim;
        let mut dx = vec![0.0; self.input_dim];
        let mut dh_prev = vec![0.0; dh];

        let mut dn_pre = vec![0.0; dh];
        let mut dr_pre = vec![0.0; dh];
        let mut dz_pre = vec![0.0; dh];
        let mut d_hn_aff = vec![0.0; dh];
        for k in 0..dh {
            let (r, z, n) = (cache.r[k], cache.z[k], cache.n[k]);
            let dn = dh_new[k] * (1.0 - z);
            let dz = dh_new[k] * (cache.h_prev[k] - n);
            dh_prev[k] += dh_new[k] * z;
            dn_pre[k] = dn * (1.0 - n * n);
            let dr = dn_pre[k] * cache.hn_aff[k];
            d_hn_aff[k] = dn_pre[k] * r;
            dr_pre[k] = dr * r * (1.0 - r);
            dz_pre[k] = dz * z * (1.0 - z);
        }

        affine_backward(&cache.x, &mut self.w_in, &dn_pre, &mut dx);
        affine_backward(&cache.h_prev, &mut self.w_hn, &d_hn_aff, &mut dh_prev);
        affine_backward(&cache.x, &mut self.w_ir, &dr_pre, &mut dx);
        affine_backward(&cache.h_prev, &mut self.w_hr, &dr_pre, &mut dh_prev);
        affine_backward(&cache.x, &mut self.w_iz, &dz_pre, &mut dx);
        affine_backward(&cache.h_prev, &mut self.w_hz, &dz_pre, &mut dh_prev);
        for (b, d) in [
            (&mut self.b_in, &dn_pre),
            (&mut self.b_hn, &d_hn_aff),
            (&mut self.b_ir, &dr_pre),
            (&mut self.b_hr, &dr_pre),
            (&mut self.b_iz, &dz_pre),
            (&mut self.b_hz, &dz_pre),
        ] {
            for (g, &dv) in b.grad.data_mut().iter_mut().zip(d.iter()) {
                *g += dv;
            }
        }
        (dx, dh_prev)
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        for p in [
            &mut self.w_ir,
            &mut self.w_iz,
            &mut self.w_in,
            &mut self.w_hr,
            &mut self.w_hz,
            &mut self.w_hn,
            &mut self.b_ir,
            &mut self.b_iz,
            &mut self.b_in,
            &mut self.b_hr,
            &mut self.b_hz,
            &mut self.b_hn,
        ] {
            f(p);
        }
    }
}

/// Stacked bidirectional GRU. Layer 0 consumes the raw input; deeper layers
/// consume the direction-concatenated outputs of the layer below.
#[derive(Debug, Clone)]
pub struct BiGru {
    /// Per layer: [forward cell, backward cell].
    pub layers: Vec<[GruCell; 2]>,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

pub struct BiGruOutput {
    /// [T, 2 * hidden]: per-step outputs, direction-concatenated.
    pub outputs: Tensor,
    /// Final hidden state per (layer, direction), 2 * layers entries of
    /// [hidden] each, ordered layer0-fwd, layer0-bwd, layer1-fwd, ...
    pub finals: Vec<Tensor>,
}

pub struct BiGruCache {
    /// Per layer: (forward step caches, backward step caches in processing
    /// order T-1..0).
    layer_caches: Vec<(Vec<GruStepCache>, Vec<GruStepCache>)>,
    len: usize,
}

impl BiGru {
    pub fn new(
        rng: &mut ChaCha8Rng,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        layers: usize,
    ) -> BiGru {
        assert!(layers >= 1);
        let cells = (0..layers)
            .map(|l| {
                let din = if l == 0 { input_dim } else { 2 * hidden_dim };
                [
                    GruCell::new(rng, &format!("{name}.l{l}.fwd"), din, hidden_dim),
                    GruCell::new(rng, &format!("{name}.l{l}.bwd"), din, hidden_dim),
                ]
            })
            .collect();
        BiGru {
            layers: cells,
            input_dim,
            hidden_dim,
        }
    }

    pub fn forward(&self, inputs: &Tensor) -> Result<(BiGruOutput, BiGruCache)> {
        let t_len = inputs.rows();
        if t_len == 0 {
            return Err(PipelineError::Shape("BiGRU input has zero steps".into()));
        }
        if inputs.cols() != self.input_dim {
            return Err(PipelineError::Shape(format!(
                "BiGRU expects input width {}, got {}",
                self.input_dim,
                inputs.cols()
            )));
        }
        let dh = self.hidden_dim;
        let mut layer_input = inputs.clone();
        let mut finals = Vec::with_capacity(2 * self.layers.len());
        let mut layer_caches = Vec::with_capacity(self.layers.len());

        for cells in &self.layers {
            let mut fwd_states = Vec::with_capacity(t_len);
            let mut fwd_caches = Vec::with_capacity(t_len);
            let mut h = vec![0.0; dh];
            for t in 0..t_len {
                let (h_new, cache) = cells[0].step(layer_input.row(t), &h);
                h = h_new;
                fwd_states.push(h.clone());
                fwd_caches.push(cache);
            }
            let fwd_final = h;

            let mut bwd_states = vec![Vec::new(); t_len];
            let mut bwd_caches = Vec::with_capacity(t_len);
            let mut h = vec![0.0; dh];
            for t in (0..t_len).rev() {
                let (h_new, cache) = cells[1].step(layer_input.row(t), &h);
                h = h_new;
                bwd_states[t] = h.clone();
                bwd_caches.push(cache);
            }
            let bwd_final = h;

            let mut out = Tensor::zeros(&[t_len, 2 * dh]);
            for t in 0..t_len {
                out.row_mut(t)[..dh].copy_from_slice(&fwd_states[t]);
                out.row_mut(t)[dh..].copy_from_slice(&bwd_states[t]);
            }
            finals.push(Tensor::from_vec(&[dh], fwd_final));
            finals.push(Tensor::from_vec(&[dh], bwd_final));
            layer_caches.push((fwd_caches, bwd_caches));
            layer_input = out;
        }

        Ok((
            BiGruOutput {
                outputs: layer_input,
                finals,
            },
            BiGruCache {
                layer_caches,
                len: t_len,
            },
        ))
    }

    /// Backward through time. `d_outputs` is the gradient on the top layer's
    /// per-step outputs; `d_finals`, when present, adds gradient on each
    /// (layer, direction) final state. Returns the gradient on the inputs.
    pub fn backward(
        &mut self,
        cache: &BiGruCache,
        d_outputs: &Tensor,
        d_finals: Option<&[Tensor]>,
    ) -> Tensor {
        let t_len = cache.len;
        let dh = self.hidden_dim;
        let mut d_layer_out = d_outputs.clone();

        for (l, cells) in self.layers.iter_mut().enumerate().rev() {
            let (fwd_caches, bwd_caches) = &cache.layer_caches[l];
            let din = cells[0].input_dim;
            let mut d_input = Tensor::zeros(&[t_len, din]);

            // Forward direction: walk time backwards.
            let mut dh_carry = vec![0.0; dh];
            if let Some(extra) = d_finals {
                for (c, &e) in dh_carry.iter_mut().zip(extra[2 * l].data()) {
                    *c += e;
                }
            }
            for t in (0..t_len).rev() {
                for (c, &g) in dh_carry.iter_mut().zip(&d_layer_out.row(t)[..dh]) {
                    *c += g;
                }
                let (dx, dh_prev) = cells[0].backward_step(&fwd_caches[t], &dh_carry);
                for (o, &v) in d_input.row_mut(t).iter_mut().zip(&dx) {
                    *o += v;
                }
                dh_carry = dh_prev;
            }

            // Backward direction processed T-1..0, so BPTT walks 0..T-1.
            let mut dh_carry = vec![0.0; dh];
            if let Some(extra) = d_finals {
                for (c, &e) in dh_carry.iter_mut().zip(extra[2 * l + 1].data()) {
                    *c += e;
                }
            }
            for t in 0..t_len {
                for (c, &g) in dh_carry.iter_mut().zip(&d_layer_out.row(t)[dh..]) {
                    *c += g;
                }
                // bwd_caches[i] corresponds to position T-1-i.
                let cache_idx = t_len - 1 - t;
                let (dx, dh_prev) = cells[1].backward_step(&bwd_caches[cache_idx], &dh_carry);
                for (o, &v) in d_input.row_mut(t).iter_mut().zip(&dx) {
                    *o += v;
                }
                dh_carry = dh_prev;
            }

            d_layer_out = d_input;
        }
        d_layer_out
    }

    pub fn visit(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        for cells in &mut self.layers {
            cells[0].visit(f);
            cells[1].visit(f);
        }
    }
}
