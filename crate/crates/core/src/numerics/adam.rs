//! Adam with bias correction.
//!
//! Moment buffers are stored in f32 alongside the parameters they track; the
//! per-element update arithmetic runs in f64 so a scalar f64 reference
//! implementation can be matched to tight tolerance.

use crate::error::{MftError, Result};
use crate::numerics::params::{Gradients, ParamStore};
use crate::numerics::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// First/second moment per store entry (None for frozen entries).
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 1e-3;

    /// Fresh optimizer state for the trainable entries of `params`.
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for (_, p) in params.iter() {
            if p.trainable {
                m.push(Some(Tensor::zeros(p.value.shape())));
                v.push(Some(Tensor::zeros(p.value.shape())));
            } else {
                m.push(None);
                v.push(None);
            }
        }
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m, v }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    /// One update over all trainable parameters.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(MftError::config("adam: state does not match parameter store"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for idx in 0..params.len() {
            let id = crate::numerics::params::ParamId(idx);
            if !params.is_trainable(id) {
                continue;
            }
            let g = grads.expect(id)?;
            if g.shape() != params.get(id).shape() {
                return Err(MftError::config(format!(
                    "adam: gradient shape {:?} != parameter shape {:?} for {}",
                    g.shape(),
                    params.get(id).shape(),
                    params.name(id)
                )));
            }
            let m = self.m[idx].as_mut().expect("trainable entry has moment state");
            let v = self.v[idx].as_mut().expect("trainable entry has moment state");
            let p = params.get_mut(id);
            for ((pv, gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                let gd = *gv as f64;
                let md = self.beta1 * *mv as f64 + (1.0 - self.beta1) * gd;
                let vd = self.beta2 * *vv as f64 + (1.0 - self.beta2) * gd * gd;
                *mv = md as f32;
                *vv = vd as f32;
                let mhat = md / bc1;
                let vhat = vd / bc2;
                *pv = (*pv as f64 - self.lr * mhat / (vhat.sqrt() + self.eps)) as f32;
            }
        }
        Ok(())
    }
}
