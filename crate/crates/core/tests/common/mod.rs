#![allow(dead_code)]

use dilo::diffusion::DiffusionSchedule;
use dilo::networks::{
    train_autoencoder, train_score, Activation, Autoencoder, Bounds, ModelBundle, ScoreNet, TimeEmbedding, TrainConfig,
};
use dilo::physics::{gen_blobs, BlobParams, CurrentPatternSet, Dataset, EitSolver, Grid, SolverSettings};
use dilo::Tensor;

pub fn eit_solver(n: usize, patterns: usize) -> EitSolver {
    let grid = Grid::new(n).unwrap();
    EitSolver::new(grid, CurrentPatternSet::trigonometric(&grid, patterns).unwrap(), SolverSettings::Direct).unwrap()
}

pub fn blobs(count: usize, seed: u64, n: usize) -> Dataset {
    gen_blobs(count, seed, Grid::new(n).unwrap(), &BlobParams::default()).unwrap()
}

/// A lightly trained bundle on `n × n` blobs; cheap enough for tests.
pub fn small_bundle(n: usize, latent: usize, substeps: usize, seed: u64) -> (ModelBundle, Dataset) {
    let data = blobs(64, seed, n);
    let mut ae = Autoencoder::new(seed, n * n, latent, &[32], Activation::Tanh, Bounds::default()).unwrap();
    train_autoencoder(&mut ae, &data.fields, &TrainConfig::adam(30, 16, 3e-3, seed)).unwrap();
    ae.normalize_latents(&data.fields).unwrap();
    let latents: Vec<Tensor> = data.fields.iter().map(|f| ae.encode_value(f).unwrap()).collect();
    let schedule = DiffusionSchedule::linear(1000, 1e-4, 0.02, substeps).unwrap();
    let mut score = ScoreNet::new(seed, latent, &[32], TimeEmbedding::new(8).unwrap(), Activation::Tanh, 1000).unwrap();
    train_score(&mut score, &latents, &schedule, &TrainConfig::adam(10, 16, 1e-3, seed)).unwrap();
    (ModelBundle::new(score, ae, None, schedule).unwrap(), data)
}
