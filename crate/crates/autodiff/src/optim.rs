use crate::error::{Result, TensorError};
use crate::nn::ParamStore;
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(store: &ParamStore<T>, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<T>> = store.iter().map(|p| vec![T::zero(); p.values.len()]).collect();
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Decoupled decay `p -= lr * wd * p`, then a bias-corrected Adam update.
    /// Non-finite gradients leave parameters and state untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Vec<T>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(TensorError::InvalidArgument {
                op: "adamw_step",
                reason: format!("{} gradients for {} parameters", grads.len(), store.len()),
            });
        }
        for (p, g) in store.iter().zip(grads) {
            if g.len() != p.values.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "adamw_step",
                    left: (p.rows, p.cols),
                    right: (g.len(), 1),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite { op: "adamw_step" });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(t));
        let c2 = T::lit(1.0 - self.beta2.powi(t));
        let lr = T::lit(self.lr);
        let decay = T::one() - T::lit(self.lr * self.weight_decay);
        let eps = T::lit(self.eps);
        for (k, (p, g)) in store.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for j in 0..g.len() {
                m[j] = b1 * m[j] + (T::one() - b1) * g[j];
                v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                p.values[j] = p.values[j] * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn cosine_lr(step: usize, total_steps: usize, lr_start: f64, lr_end: f64) -> f64 {
    if total_steps == 0 {
        return lr_start;
    }
    let x = step.min(total_steps) as f64 / total_steps as f64;
    lr_end + 0.5 * (lr_start - lr_end) * (1.0 + (std::f64::consts::PI * x).cos())
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(|g| {
            let x = g.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::lit(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}
