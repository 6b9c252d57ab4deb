//! Adam with bias-corrected moments.

use crate::error::{bail, Result};
use crate::nn::ParamStore;
use crate::numerics::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Moment buffers for one parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        Self {
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update. Parameters without a gradient are left untouched, moments
    /// included.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>], lr: f64) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            bail!(
                Dimension,
                "optimizer holds {} buffers, store {} tensors, {} gradients",
                self.m.len(),
                store.len(),
                grads.len()
            );
        }
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        let ids: Vec<_> = store.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let Some(g) = &grads[i] else { continue };
            let p = store.get_mut(id);
            if g.shape() != p.shape() {
                bail!(Dimension, "gradient {} for parameter {}", g.shape(), p.shape());
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let gi = gi as f64;
                let m1 = BETA1 * *mi as f64 + (1.0 - BETA1) * gi;
                let v1 = BETA2 * *vi as f64 + (1.0 - BETA2) * gi * gi;
                *mi = m1 as f32;
                *vi = v1 as f32;
                let update = lr * (m1 / c1) / ((v1 / c2).sqrt() + EPS);
                *w = (*w as f64 - update) as f32;
            }
        }
        Ok(())
    }
}
