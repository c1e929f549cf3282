use super::autoencoder::Autoencoder;
use super::score::ScoreNet;
use super::spectral::SpectralSurrogate;
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::tensor::{jacobian_fd, Tensor};

/// Everything trained offline: score network, autoencoder, optional
/// neural surrogate and the diffusion schedule they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub score: ScoreNet,
    pub autoencoder: Autoencoder,
    pub surrogate: Option<SpectralSurrogate>,
    pub schedule: DiffusionSchedule,
}

impl ModelBundle {
    pub fn new(score: ScoreNet, autoencoder: Autoencoder, surrogate: Option<SpectralSurrogate>, schedule: DiffusionSchedule) -> Result<Self> {
        let b = Self {
            score,
            autoencoder,
            surrogate,
            schedule,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.score.latent_dim() != self.autoencoder.latent_dim() {
            return Err(Error::Shape {
                op: "bundle latent dim",
                lhs: vec![self.autoencoder.latent_dim()],
                rhs: vec![self.score.latent_dim()],
            });
        }
        if self.score.t_max != self.schedule.t_train() {
            return Err(Error::invalid(format!(
                "score net trained for {} steps but schedule has {}",
                self.score.t_max,
                self.schedule.t_train()
            )));
        }
        if let Some(s) = &self.surrogate {
            let n2 = s.arch.grid_n * s.arch.grid_n;
            if n2 != self.autoencoder.field_dim() {
                return Err(Error::Shape {
                    op: "bundle surrogate grid",
                    lhs: vec![self.autoencoder.field_dim()],
                    rhs: vec![n2],
                });
            }
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.autoencoder.latent_dim()
    }

    pub fn field_dim(&self) -> usize {
        self.autoencoder.field_dim()
    }

    pub fn encode(&self, a: &Tensor) -> Result<Tensor> {
        self.autoencoder.encode_value(a)
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.autoencoder.decode_value(z)
    }
}

/// Largest `‖∂ε_θ/∂z_t‖₂` over the probe points, each a `([d] latent, t)`
/// pair, from power iteration on `JᵀJ` of the finite-difference Jacobian.
pub fn score_lipschitz_probe(score: &ScoreNet, points: &[(Tensor, usize)], iters: usize) -> Result<f64> {
    let d = score.latent_dim();
    let mut best = 0.0f64;
    for (z, t) in points {
        let jac = jacobian_fd(
            |x| score.eval(&x.clone().reshape([1, d])?, *t)?.reshape([d]),
            z,
            1e-6,
        )?;
        let j = jac.data();
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut sigma2 = 0.0;
        for _ in 0..iters.max(1) {
            let jv: Vec<f64> = (0..d).map(|r| (0..d).map(|c| j[r * d + c] * v[c]).sum()).collect();
            let mut w: Vec<f64> = (0..d).map(|c| (0..d).map(|r| j[r * d + c] * jv[r]).sum()).collect();
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                sigma2 = 0.0;
                break;
            }
            w.iter_mut().for_each(|x| *x /= n);
            sigma2 = n;
            v = w;
        }
        best = best.max(sigma2.sqrt());
    }
    Ok(best)
}
