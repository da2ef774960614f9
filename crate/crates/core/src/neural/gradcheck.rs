//! Central finite-difference gradient checking.
//!
//! The loss closure must run forward and backward, accumulating analytic
//! gradients, and return the scalar loss. The checker verifies the closure
//! is deterministic (two runs must agree bit-for-bit), snapshots the
//! analytic gradients, then perturbs coordinates one at a time.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PipelineError, Result};
use crate::neural::param::ParamCollection;
use crate::neural::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates sampled per parameter tensor (all when smaller).
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            max_coords_per_param: 24,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub worst: Option<(String, usize)>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Check the analytic gradients of every parameter in the collection
/// against central finite differences of the loss.
pub fn check_gradients<M, F>(model: &mut M, mut loss_fn: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    M: ParamCollection,
    F: FnMut(&mut M) -> f64,
{
    model.zero_grads();
    let l1 = loss_fn(model);
    let analytic = snapshot_grads(model);
    model.zero_grads();
    let l2 = loss_fn(model);
    if l1.to_bits() != l2.to_bits() {
        return Err(PipelineError::Numerical(format!(
            "loss is not deterministic across forward passes ({l1} vs {l2})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        worst: None,
        tolerance: cfg.tolerance,
    };

    for (pi, (name, grad)) in analytic.iter().enumerate() {
        let len = grad.len();
        let coords: Vec<usize> = if len <= cfg.max_coords_per_param {
            (0..len).collect()
        } else {
            let mut picked = sample(&mut rng, len, cfg.max_coords_per_param).into_vec();
            picked.sort_unstable();
            picked
        };
        for ci in coords {
            let nudge = |m: &mut M, delta: f64| {
                m.with_param(pi, |p| p.value.data_mut()[ci] += delta)
                    .expect("parameter index in range");
            };
            nudge(model, cfg.step);
            let plus = loss_fn(model);
            nudge(model, -2.0 * cfg.step);
            let minus = loss_fn(model);
            nudge(model, cfg.step);

            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = grad.data()[ci];
            // Gradients below the finite-difference noise floor count as
            // zero: the quotient would otherwise amplify rounding noise on
            // coordinates whose true derivative is exactly zero.
            let scale = a.abs().max(numeric.abs());
            let rel = if scale < 1e-7 {
                0.0
            } else {
                (a - numeric).abs() / scale
            };
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), ci));
            }
        }
    }
    Ok(report)
}

fn snapshot_grads(model: &mut impl ParamCollection) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    model.visit_params(&mut |p| out.push((p.name.clone(), p.grad.clone())));
    out
}
