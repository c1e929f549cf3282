use super::embedding::TimeEmbedding;
use super::mlp::{Activation, Mlp, MlpArch};
use super::train::{fit, stack_rows, TrainConfig};
use crate::diffusion::{diffusion_loss, DiffusionSchedule, NoisePredictor};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// `ε_θ(z_t, t)`: an MLP on `[z_t ‖ embedding(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet {
    pub mlp: Mlp,
    pub embedding: TimeEmbedding,
    pub t_max: usize,
}

impl ScoreNet {
    pub fn new(seed: u64, latent_dim: usize, hidden: &[usize], embedding: TimeEmbedding, activation: Activation, t_max: usize) -> Result<Self> {
        let mut widths = vec![latent_dim + embedding.dim];
        widths.extend_from_slice(hidden);
        widths.push(latent_dim);
        Self::from_mlp(Mlp::new(seed, MlpArch::new(widths, activation)?)?, embedding, t_max)
    }

    pub fn from_mlp(mlp: Mlp, embedding: TimeEmbedding, t_max: usize) -> Result<Self> {
        let latent = mlp.arch.output_dim();
        if mlp.arch.input_dim() != latent + embedding.dim {
            return Err(Error::Shape {
                op: "score net",
                lhs: vec![latent + embedding.dim],
                rhs: vec![mlp.arch.input_dim()],
            });
        }
        Ok(Self { mlp, embedding, t_max })
    }

    pub fn latent_dim(&self) -> usize {
        self.mlp.arch.output_dim()
    }

    /// Value-only prediction for a `[batch, d]` latent.
    pub fn eval(&self, z: &Tensor, t: usize) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.bind(&g, false);
        let rows = z.shape().first().copied().unwrap_or(0);
        Ok(self.predict(&p, g.constant(z.clone()), &vec![t; rows])?.value())
    }
}

impl NoisePredictor for ScoreNet {
    fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> Vec<Var<'g>> {
        self.mlp.bind(g, trainable)
    }

    fn predict<'g>(&self, params: &[Var<'g>], z: Var<'g>, t: &[usize]) -> Result<Var<'g>> {
        let shape = z.shape();
        if shape.len() != 2 || shape[1] != self.latent_dim() || shape[0] != t.len() {
            return Err(Error::Shape {
                op: "score input",
                lhs: vec![t.len(), self.latent_dim()],
                rhs: shape,
            });
        }
        if let Some(&bad) = t.iter().find(|&&s| s == 0 || s > self.t_max) {
            return Err(Error::invalid(format!("timestep {bad} outside 1..={}", self.t_max)));
        }
        let emb = z.graph().constant(self.embedding.embed_batch(t));
        let x = z.graph().concat(&[z, emb], 1)?;
        self.mlp.forward(params, x)
    }
}

/// Trains the noise predictor on 1-D latents; returns per-epoch mean loss.
pub fn train_score(score: &mut ScoreNet, latents: &[Tensor], schedule: &DiffusionSchedule, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if latents.is_empty() {
        return Err(Error::invalid("latent dataset is empty"));
    }
    let mut params = score.mlp.params.clone();
    let model = score.clone();
    let series = fit(&mut params, latents.len(), cfg, "train-ldm", |g, vars, idx, rng| {
        let batch = stack_rows(latents, idx)?;
        diffusion_loss(g, &model, vars, &batch, schedule, rng)
    })?;
    score.mlp.params = params;
    Ok(series)
}
