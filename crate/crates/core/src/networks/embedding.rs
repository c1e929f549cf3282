use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sinusoidal timestep features `[sin(t ω_k)…, cos(t ω_k)…]` with
/// `ω_k = 10000^{−k/(dim/2)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeEmbedding {
    pub dim: usize,
}

impl TimeEmbedding {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::invalid(format!("time embedding dim must be even and positive, got {dim}")));
        }
        Ok(Self { dim })
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let half = self.dim / 2;
        (0..half)
            .map(|k| 10000f64.powf(-(k as f64) / half as f64))
            .collect()
    }

    pub fn embed(&self, t: f64) -> Vec<f64> {
        let freqs = self.frequencies();
        let mut out: Vec<f64> = freqs.iter().map(|w| (t * w).sin()).collect();
        out.extend(freqs.iter().map(|w| (t * w).cos()));
        out
    }

    /// `[batch, dim]` features for integer timesteps.
    pub fn embed_batch(&self, ts: &[usize]) -> Tensor {
        let data = ts.iter().flat_map(|&t| self.embed(t as f64)).collect();
        Tensor::new([ts.len(), self.dim], data).expect("embedding shape")
    }
}
