use crate::error::{Error, Result};
use crate::rng::{normal_tensor, Rng};
use crate::tensor::Tensor;

/// Population standard deviation over all entries.
pub fn population_std(y: &Tensor) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let n = y.len() as f64;
    let mean = y.sum_all() / n;
    (y.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// `y + γ·std(y)·ε` with `ε` drawn elementwise from the standard normal.
pub fn inject_noise(y: &Tensor, gamma: f64, rng: &mut Rng) -> Result<Tensor> {
    let eps = normal_tensor(rng, y.shape());
    inject_noise_with(y, gamma, &eps)
}

/// Noise injection with a caller-supplied `ε`.
pub fn inject_noise_with(y: &Tensor, gamma: f64, eps: &Tensor) -> Result<Tensor> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("noise level must be >= 0, got {gamma}")));
    }
    if eps.shape() != y.shape() {
        return Err(Error::Shape {
            op: "inject_noise",
            lhs: y.shape().to_vec(),
            rhs: eps.shape().to_vec(),
        });
    }
    if gamma == 0.0 {
        return Ok(y.clone());
    }
    y.axpy(gamma * population_std(y), eps)
}
