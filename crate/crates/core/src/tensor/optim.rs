use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Plain gradient descent, no state.
    Gd,
    Adam,
    /// Adam with decoupled weight decay.
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn gd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Gd,
            ..Self::adam(lr)
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            weight_decay,
            ..Self::adam(lr)
        }
    }
}

/// First and second moment estimates; empty until the first Adam step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }
}

pub fn optimizer_update(
    state: &mut OptimizerState,
    params: &mut [Tensor],
    grads: &[Tensor],
    config: &OptimizerConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::invalid(format!(
            "optimizer: {} params but {} grads",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "optimizer_update",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }

    if config.kind == OptimizerKind::Gd {
        for (p, g) in params.iter_mut().zip(grads) {
            for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                *x -= config.lr * d;
            }
        }
        return Ok(());
    }

    if state.m.is_empty() {
        state.m = params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len()
        || state.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape())
    {
        return Err(Error::invalid("optimizer state does not match parameter shapes"));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = p.data_mut();
        let (md, vd) = (m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = g.data()[i];
            md[i] = config.beta1 * md[i] + (1.0 - config.beta1) * gi;
            vd[i] = config.beta2 * vd[i] + (1.0 - config.beta2) * gi * gi;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            if config.kind == OptimizerKind::AdamW && config.weight_decay > 0.0 {
                pd[i] -= config.lr * config.weight_decay * pd[i];
            }
            pd[i] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}
