//! DDPM schedule, forward noising, Tweedie estimates and the DDIM step,
//! including the differentiable deterministic unroll `z_T → z₀`.
//!
//! Networks predict noise: `ẑ₀ = (z_t − √(1−ᾱ_t) ε̂)/√ᾱ_t` and the DDIM
//! direction term adds `+√(1−ᾱ_prev) ε̂`.

mod sampler;
mod schedule;

pub use sampler::{
    coefficients_cd, ddim_sigma, ddim_step, ddim_step_var, diffusion_loss, forward_noise,
    sample_deterministic, sample_deterministic_value, tweedie, tweedie_var, NoisePredictor,
    TrajectoryEntry, TrajectoryRecord,
};
pub use schedule::DiffusionSchedule;
