//! The offline training stages and the problem setup they share, driven by
//! a [`RunConfig`].

use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::io::{Problem, RunConfig};
use crate::networks::{
    train_autoencoder, train_score, Autoencoder, ModelBundle, ScoreNet, SpectralArch, SurrogateHead, TimeEmbedding,
    TrainConfig,
};
use crate::physics::{gen_dataset, pair_eit, pair_ns, CurrentPatternSet, Dataset, DatasetKind, EitSolver, Grid, NsConfig};
use crate::surrogate::{train_surrogate, SurrogateHandle, SurrogateTraining};
use crate::tensor::Tensor;

pub fn dataset_kind(cfg: &RunConfig) -> DatasetKind {
    match cfg.physics.problem {
        Problem::Eit => DatasetKind::EitBlobs,
        Problem::NavierStokes => DatasetKind::NsGrf,
    }
}

pub fn eit_solver(cfg: &RunConfig) -> Result<EitSolver> {
    let grid = Grid::new(cfg.physics.grid_n)?;
    let patterns = CurrentPatternSet::trigonometric(&grid, cfg.physics.patterns)?;
    EitSolver::new(grid, patterns, cfg.physics.solver)
}

pub fn ns_config(cfg: &RunConfig) -> NsConfig {
    NsConfig {
        n: cfg.physics.grid_n,
        nu: cfg.physics.ns_nu,
        t_final: cfg.physics.ns_t_final,
        dt: cfg.physics.ns_dt,
        ..NsConfig::default()
    }
}

pub fn generate_dataset(cfg: &RunConfig) -> Result<Dataset> {
    gen_dataset(dataset_kind(cfg), cfg.physics.samples, cfg.seed, cfg.physics.grid_n)
}

/// Exact forward-model outputs for the first `count` fields.
pub fn observations(cfg: &RunConfig, data: &Dataset, count: usize) -> Result<Vec<Tensor>> {
    let head = Dataset {
        kind: data.kind,
        grid_n: data.grid_n,
        fields: data.fields[..count.min(data.len())].to_vec(),
    };
    match cfg.physics.problem {
        Problem::Eit => pair_eit(&head, &eit_solver(cfg)?),
        Problem::NavierStokes => pair_ns(&head, &ns_config(cfg)),
    }
}

/// Exact handle for EIT; the other problem has no differentiable solver.
pub fn exact_handle(cfg: &RunConfig) -> Result<Option<SurrogateHandle>> {
    Ok(match cfg.physics.problem {
        Problem::Eit => Some(SurrogateHandle::Exact(eit_solver(cfg)?)),
        Problem::NavierStokes => None,
    })
}

/// Trains the autoencoder and rescales its latents to unit variance.
pub fn train_ae_stage(cfg: &RunConfig, data: &Dataset) -> Result<(Autoencoder, Vec<f64>)> {
    let a = &cfg.ae;
    let field_dim = data.grid_n * data.grid_n;
    let mut ae = Autoencoder::new(cfg.seed, field_dim, a.latent_dim, &a.hidden, a.activation, cfg.bounds()?)?;
    let tc = TrainConfig::adam(a.epochs, a.batch_size, a.lr, cfg.seed);
    let losses = train_autoencoder(&mut ae, &data.fields, &tc)?;
    ae.normalize_latents(&data.fields)?;
    Ok((ae, losses))
}

pub fn train_ldm_stage(cfg: &RunConfig, ae: &Autoencoder, data: &Dataset) -> Result<(ScoreNet, Vec<f64>)> {
    let l = &cfg.ldm;
    let schedule = cfg.schedule()?;
    let latents: Vec<Tensor> = data.fields.iter().map(|f| ae.encode_value(f)).collect::<Result<_>>()?;
    let mut score = ScoreNet::new(
        cfg.seed,
        ae.latent_dim(),
        &l.hidden,
        TimeEmbedding::new(l.embedding_dim)?,
        l.activation,
        schedule.t_train(),
    )?;
    let tc = TrainConfig::adam(l.epochs, l.batch_size, l.lr, cfg.seed);
    let losses = train_score(&mut score, &latents, &schedule, &tc)?;
    Ok((score, losses))
}

pub fn surrogate_arch(cfg: &RunConfig) -> Result<SpectralArch> {
    let s = &cfg.surrogate;
    let head = match cfg.physics.problem {
        Problem::Eit => SurrogateHead::Boundary {
            patterns: cfg.physics.patterns,
        },
        Problem::NavierStokes => SurrogateHead::Field,
    };
    SpectralArch::new(cfg.physics.grid_n, s.width, s.modes, s.layers, head)
}

/// Trains the neural surrogate on the first `[surrogate] pairs` samples.
pub fn train_surrogate_stage(cfg: &RunConfig, data: &Dataset, ys: &[Tensor]) -> Result<SurrogateTraining> {
    let s = &cfg.surrogate;
    if ys.len() < s.pairs {
        return Err(Error::invalid(format!("need {} observations, have {}", s.pairs, ys.len())));
    }
    let pairs: Vec<(Tensor, Tensor)> = data.fields[..s.pairs].iter().cloned().zip(ys[..s.pairs].iter().cloned()).collect();
    let tc = TrainConfig::adam(s.epochs, s.batch_size, s.lr, cfg.seed);
    train_surrogate(&pairs, surrogate_arch(cfg)?, &tc, s.holdout)
}

/// Everything the online phase needs, trained from scratch.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub observations: Vec<Tensor>,
    pub bundle: ModelBundle,
    pub neural: SurrogateHandle,
    pub exact: Option<SurrogateHandle>,
    pub ae_losses: Vec<f64>,
    pub ldm_losses: Vec<f64>,
    pub surrogate_training: SurrogateTraining,
}

pub fn build_setup(cfg: &RunConfig) -> Result<Setup> {
    cfg.validate()?;
    let dataset = generate_dataset(cfg)?;
    let observations = observations(cfg, &dataset, cfg.surrogate.pairs)?;
    let (ae, ae_losses) = train_ae_stage(cfg, &dataset)?;
    let (score, ldm_losses) = train_ldm_stage(cfg, &ae, &dataset)?;
    let surrogate_training = train_surrogate_stage(cfg, &dataset, &observations)?;
    let schedule: DiffusionSchedule = cfg.schedule()?;
    let bundle = ModelBundle::new(score, ae, Some(surrogate_training.surrogate.clone()), schedule)?;
    Ok(Setup {
        config: cfg.clone(),
        neural: SurrogateHandle::Neural(surrogate_training.surrogate.clone()),
        exact: exact_handle(cfg)?,
        dataset,
        observations,
        bundle,
        ae_losses,
        ldm_losses,
        surrogate_training,
    })
}
