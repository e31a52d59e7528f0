use alloc::format;

use crate::autodiff::Tensor;
use crate::model::{ModelParams, ParamKind, Weights};
use crate::{Error, Result};

/// AdamW hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

impl AdamW {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid AdamW settings {self:?}")));
        }
        Ok(())
    }
}

/// Updates one parameter slice in place. `t` is the step number after
/// incrementing (so the first step passes 1). Decay, when enabled, shrinks
/// `θ` by `lr·wd·θ` before the adaptive step and never touches the moments.
pub fn adamw_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    h: &AdamW,
    decay: bool,
) {
    let c1 = 1.0 - libm::pow(h.beta1, t as f64);
    let c2 = 1.0 - libm::pow(h.beta2, t as f64);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
        if decay {
            theta[i] -= h.lr * h.weight_decay * theta[i];
        }
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        theta[i] -= h.lr * mhat / (libm::sqrt(vhat) + h.eps);
    }
}

/// Moments and step counter, laid out exactly like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub m: Weights<Tensor>,
    pub v: Weights<Tensor>,
    pub t: u64,
    pub hyper: AdamW,
}

impl OptimState {
    pub fn new(params: &ModelParams, hyper: AdamW) -> Self {
        let zeros = params.map(|_, _, p| Tensor::zeros(p.shape().to_vec()));
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            hyper,
        }
    }

    /// Checks that the moments are shaped like `params` and `v ≥ 0`.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let p = params.entries();
        let (m, v) = (self.m.entries(), self.v.entries());
        if p.len() != m.len() || p.len() != v.len() {
            return Err(Error::Config(
                "optimizer state layout does not match the parameters".into(),
            ));
        }
        for (((name, _, p), (_, _, m)), (_, _, v)) in p.iter().zip(&m).zip(&v) {
            if p.shape() != m.shape() || p.shape() != v.shape() {
                return Err(Error::Config(format!(
                    "{name}: optimizer moments shaped {:?}, parameter {:?}",
                    m.shape(),
                    p.shape()
                )));
            }
            if v.data().iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::Contract(format!(
                    "{name}: negative or NaN second moment"
                )));
            }
        }
        Ok(())
    }

    /// One AdamW step over every parameter. `grads` follow the canonical
    /// parameter order. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[&[f64]]) -> Result<()> {
        let names = params.entries();
        if grads.len() != names.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                names.len()
            )));
        }
        for ((name, _, p), g) in names.iter().zip(grads) {
            if g.len() != p.len() {
                return Err(Error::Dimension(format!(
                    "{name}: gradient has {} values, parameter {}",
                    g.len(),
                    p.len()
                )));
            }
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {name} at flat index {i} is {}",
                    g[i]
                )));
            }
        }
        drop(names);
        self.t += 1;
        let (t, h) = (self.t, self.hyper);
        let params = params.entries_mut();
        let ms = self.m.entries_mut();
        let vs = self.v.entries_mut();
        for ((((kind, p), (_, m)), (_, v)), g) in params.into_iter().zip(ms).zip(vs).zip(grads) {
            adamw_update(
                p.data_mut(),
                g,
                m.data_mut(),
                v.data_mut(),
                t,
                &h,
                kind == ParamKind::Weight,
            );
        }
        Ok(())
    }
}
