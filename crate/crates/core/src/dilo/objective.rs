use crate::diffusion::{sample_deterministic, DiffusionSchedule, NoisePredictor};
use crate::error::{Error, Result};
use crate::networks::ModelBundle;
use crate::surrogate::SurrogateHandle;
use crate::tensor::{Graph, Tensor};

/// `ℒ(z_T) = w·‖𝐹̃(𝒟(z₀(z_T))) − y_obs‖²` with `z₀` the deterministic unroll.
#[derive(Debug, Clone)]
pub struct LatentObjective<'a> {
    pub bundle: &'a ModelBundle,
    pub surrogate: &'a SurrogateHandle,
    pub y_obs: Tensor,
    pub schedule: DiffusionSchedule,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    /// `∇_{z_T}ℒ`, present when requested.
    pub grad: Option<Tensor>,
    /// Decoded field `𝒟(z₀(z_T))`.
    pub field: Tensor,
}

impl<'a> LatentObjective<'a> {
    /// `substeps` overrides the bundle schedule's sub-step count.
    pub fn new(
        bundle: &'a ModelBundle,
        surrogate: &'a SurrogateHandle,
        y_obs: &Tensor,
        substeps: Option<usize>,
        weight: f64,
    ) -> Result<Self> {
        if surrogate.input_len() != bundle.field_dim() {
            return Err(Error::Shape {
                op: "objective field",
                lhs: vec![bundle.field_dim()],
                rhs: vec![surrogate.input_len()],
            });
        }
        let out = surrogate.output_shape();
        if y_obs.len() != out.iter().product::<usize>() {
            return Err(Error::Shape {
                op: "objective observation",
                lhs: out,
                rhs: y_obs.shape().to_vec(),
            });
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("loss weight must be positive, got {weight}")));
        }
        let schedule = match substeps {
            Some(n) => bundle.schedule.with_substeps(n)?,
            None => bundle.schedule.clone(),
        };
        Ok(Self {
            bundle,
            surrogate,
            y_obs: y_obs.clone().reshape(out)?,
            schedule,
            weight,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.bundle.latent_dim()
    }

    /// Same objective against a different forward operator.
    pub fn with_surrogate<'b>(&self, surrogate: &'b SurrogateHandle) -> LatentObjective<'b>
    where
        'a: 'b,
    {
        LatentObjective {
            bundle: self.bundle,
            surrogate,
            y_obs: self.y_obs.clone(),
            schedule: self.schedule.clone(),
            weight: self.weight,
        }
    }

    pub fn evaluate(&self, z_t: &Tensor, with_grad: bool) -> Result<Evaluation> {
        let d = self.latent_dim();
        if z_t.shape() != [d] {
            return Err(Error::Shape {
                op: "objective latent",
                lhs: vec![d],
                rhs: z_t.shape().to_vec(),
            });
        }
        let g = Graph::new();
        let score = &self.bundle.score;
        let ae = &self.bundle.autoencoder;
        let score_params = score.bind(&g, false);
        let dec_params = ae.decoder.bind(&g, false);
        let z = if with_grad { g.leaf(z_t.clone()) } else { g.constant(z_t.clone()) };
        let (z0, _) = sample_deterministic(score, &score_params, z.reshape([1, d])?, &self.schedule, false)?;
        let a = ae.decode(&dec_params, z0)?.reshape([self.bundle.field_dim()])?;
        let y = self.surrogate.forward(a)?;
        let loss = y.squared_distance(g.constant(self.y_obs.clone()))?.scale(self.weight)?;
        let value = loss.item()?;
        let grad = if with_grad {
            Some(g.backward(loss)?.wrt(z))
        } else {
            None
        };
        Ok(Evaluation {
            loss: value,
            grad,
            field: a.value(),
        })
    }

    pub fn loss(&self, z_t: &Tensor) -> Result<f64> {
        Ok(self.evaluate(z_t, false)?.loss)
    }

    pub fn gradient(&self, z_t: &Tensor) -> Result<Tensor> {
        Ok(self.evaluate(z_t, true)?.grad.expect("requested"))
    }

    /// `𝒟(z₀(z_T))` only.
    pub fn field(&self, z_t: &Tensor) -> Result<Tensor> {
        Ok(self.evaluate(z_t, false)?.field)
    }
}
