use ndarray::{Array2, NdFloat};

use crate::error::{Error, Result};
use crate::model::{Grads, ParamStore};
use crate::model::ops::cst;

/// Linear warm-up from 0 to `base_lr` over `warmup_steps`, then linear
/// decay to 0 at `total_steps`.
pub fn lr_at(step: usize, warmup_steps: usize, total_steps: usize, base_lr: f64) -> f64 {
    if step < warmup_steps {
        return base_lr * step as f64 / warmup_steps as f64;
    }
    if total_steps <= warmup_steps {
        return if step >= total_steps { 0.0 } else { base_lr };
    }
    let left = total_steps.saturating_sub(step) as f64;
    base_lr * left / (total_steps - warmup_steps) as f64
}

/// AdamW with bias correction and decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<F> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub step: u64,
    moments: Vec<Option<(Array2<F>, Array2<F>)>>,
}

impl<F: NdFloat> AdamW<F> {
    pub fn new(beta1: f64, beta2: f64, epsilon: f64, weight_decay: f64) -> Self {
        Self { beta1, beta2, epsilon, weight_decay, step: 0, moments: Vec::new() }
    }

    /// First and second moments of tensor `i`, if it has been updated.
    pub fn moments(&self, i: usize) -> Option<&(Array2<F>, Array2<F>)> {
        self.moments.get(i).and_then(|m| m.as_ref())
    }

    pub fn step(&mut self, params: &mut ParamStore<F>, grads: &Grads<F>, lr: f64) -> Result<()> {
        for (id, g) in grads.iter() {
            if id.0 >= params.len() || params.get(id).raw_dim() != g.raw_dim() {
                return Err(Error::arg(format!("gradient {} does not match its parameter shape", id.0)));
            }
        }
        if self.moments.len() < params.len() {
            self.moments.resize(params.len(), None);
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cst::<F>(self.beta1), cst::<F>(self.beta2));
        let c1 = cst::<F>(1.0 - self.beta1.powi(t));
        let c2 = cst::<F>(1.0 - self.beta2.powi(t));
        let eps = cst::<F>(self.epsilon);
        let lr_f = cst::<F>(lr);
        let decay = cst::<F>(lr * self.weight_decay);
        for (id, g) in grads.iter() {
            let (m, v) = self.moments[id.0]
                .get_or_insert_with(|| (Array2::zeros(g.raw_dim()), Array2::zeros(g.raw_dim())));
            let w = params.get_mut(id);
            ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = b1 * *m + (F::one() - b1) * g;
                *v = b2 * *v + (F::one() - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *w = *w - decay * *w - lr_f * mhat / (vhat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
