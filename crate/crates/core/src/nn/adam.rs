use crate::error::{Error, Result};
use crate::numerics::{Float, Tensor};

use super::mlp::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Float> AdamState<T> {
    pub fn zeros_like(params: &ParamSet<T>) -> Self {
        let z: Vec<Tensor<T>> = params
            .tensors()
            .iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect();
        Self {
            t: 0,
            m: z.clone(),
            v: z,
        }
    }
}

/// One bias-corrected Adam update applied in place.
///
/// The step is rejected before anything is touched if a gradient is
/// non-finite or shapes disagree.
pub fn adam_step<T: Float>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    hp: AdamHyper,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Dimension(format!(
                "adam: param {i} has shape {:?} but gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if !g.all_finite() {
            return Err(Error::Numeric(format!(
                "adam: non-finite gradient for param {i}; step aborted"
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let b1 = T::lit(hp.beta1);
    let b2 = T::lit(hp.beta2);
    let one = T::one();
    let c1 = T::lit(1.0 - hp.beta1.powi(t));
    let c2 = T::lit(1.0 - hp.beta2.powi(t));
    let lr = T::lit(hp.lr);
    let eps = T::lit(hp.eps);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = p.data_mut();
        let md = m.data_mut();
        let vd = v.data_mut();
        for (k, &gk) in g.data().iter().enumerate() {
            md[k] = b1 * md[k] + (one - b1) * gk;
            vd[k] = b2 * vd[k] + (one - b2) * gk * gk;
            let mhat = md[k] / c1;
            let vhat = vd[k] / c2;
            pd[k] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Adam bound to a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub hyper: AdamHyper,
    pub state: AdamState<T>,
}

impl<T: Float> Adam<T> {
    pub fn new(params: &ParamSet<T>, hyper: AdamHyper) -> Self {
        Self {
            hyper,
            state: AdamState::zeros_like(params),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Tensor<T>]) -> Result<()> {
        adam_step(params.tensors_mut(), grads, &mut self.state, self.hyper)
    }
}
