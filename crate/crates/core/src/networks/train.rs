use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};
use crate::tensor::{optimizer_update, Graph, OptimizerConfig, OptimizerState, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn adam(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            optimizer: OptimizerConfig::adam(lr),
            seed,
        }
    }
}

/// Minibatch loop over `n` samples. `loss_fn` receives the bound
/// parameters and the sample indices of one batch and returns the batch
/// loss; the series holds the sample-weighted mean loss of each epoch.
pub(crate) fn fit<F>(params: &mut [Tensor], n: usize, cfg: &TrainConfig, tag: &str, mut loss_fn: F) -> Result<Vec<f64>>
where
    F: for<'g> FnMut(&'g Graph, &[Var<'g>], &[usize], &mut Rng) -> Result<Var<'g>>,
{
    if n == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut rng = rng_for(cfg.seed, tag);
    let mut state = OptimizerState::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut series = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let g = Graph::new();
            let vars: Vec<Var<'_>> = params.iter().map(|p| g.leaf(p.clone())).collect();
            let loss = loss_fn(&g, &vars, batch, &mut rng)?;
            let value = loss.item()?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss(epoch));
            }
            total += value * batch.len() as f64;
            let grads = g.backward(loss)?;
            let grads: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();
            optimizer_update(&mut state, params, &grads, &cfg.optimizer)?;
        }
        series.push(total / n as f64);
    }
    Ok(series)
}

/// Stacks rows `idx` of equally shaped 1-D samples into `[len, d]`.
pub(crate) fn stack_rows(samples: &[Tensor], idx: &[usize]) -> Result<Tensor> {
    let d = samples[idx[0]].len();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        if samples[i].len() != d {
            return Err(Error::Shape {
                op: "stack",
                lhs: vec![d],
                rhs: samples[i].shape().to_vec(),
            });
        }
        data.extend_from_slice(samples[i].data());
    }
    Tensor::new([idx.len(), d], data)
}
