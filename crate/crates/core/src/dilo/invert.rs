use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::objective::LatentObjective;
use crate::diffusion::{ddim_step_var, forward_noise, tweedie, NoisePredictor};
use crate::error::{Error, Result};
use crate::networks::ModelBundle;
use crate::physics::inject_noise;
use crate::rng::{normal_tensor, rng_for};
use crate::surrogate::SurrogateHandle;
use crate::tensor::{optimizer_update, Graph, OptimizerConfig, OptimizerState, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InversionMode {
    #[serde(rename = "adam")]
    Adam,
    #[serde(rename = "adamw")]
    AdamW,
    /// Plain gradient descent; `lr` is expected to be `1/L̂`.
    #[serde(rename = "gd-1-over-L")]
    GdOneOverL,
}

impl fmt::Display for InversionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InversionMode::Adam => "adam",
            InversionMode::AdamW => "adamw",
            InversionMode::GdOneOverL => "gd-1-over-L",
        })
    }
}

impl FromStr for InversionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(InversionMode::Adam),
            "adamw" => Ok(InversionMode::AdamW),
            "gd-1-over-L" => Ok(InversionMode::GdOneOverL),
            other => Err(Error::invalid(format!("unknown inversion mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionConfig {
    pub iterations: usize,
    pub mode: InversionMode,
    pub lr: f64,
    /// Decoupled weight decay, used in `adamw` mode only.
    pub weight_decay: f64,
    pub seed: u64,
    /// Overrides the bundle's sub-step count when set.
    pub substeps: Option<usize>,
    pub loss_weight: f64,
    /// Relative noise level applied to `y_obs` before inversion.
    pub noise_gamma: f64,
    pub grad_tol: f64,
    pub loss_tol: f64,
    /// Record per-iteration wall-clock time. Off by default so metrics
    /// files stay byte-identical across runs.
    pub record_wallclock: bool,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            mode: InversionMode::Adam,
            lr: 5e-3,
            weight_decay: 1e-4,
            seed: 0,
            substeps: None,
            loss_weight: 0.5,
            noise_gamma: 0.0,
            grad_tol: 1e-8,
            loss_tol: 1e-12,
            record_wallclock: false,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.noise_gamma >= 0.0 && self.noise_gamma.is_finite()) {
            return Err(Error::invalid(format!("noise level must be >= 0, got {}", self.noise_gamma)));
        }
        Ok(())
    }

    fn optimizer(&self) -> OptimizerConfig {
        match self.mode {
            InversionMode::Adam => OptimizerConfig::adam(self.lr),
            InversionMode::AdamW => OptimizerConfig::adamw(self.lr, self.weight_decay),
            InversionMode::GdOneOverL => OptimizerConfig::gd(self.lr),
        }
    }

    /// Observation used by the run: `y_obs` itself, or a seeded noisy copy.
    pub fn observation(&self, y_obs: &Tensor) -> Result<Tensor> {
        if self.noise_gamma == 0.0 {
            return Ok(y_obs.clone());
        }
        inject_noise(y_obs, self.noise_gamma, &mut rng_for(self.seed, "observation-noise"))
    }

    /// `z_T ~ 𝒩(0, I)` from the run seed.
    pub fn initial_latent(&self, dim: usize) -> Tensor {
        normal_tensor(&mut rng_for(self.seed, "invert-init"), &[dim])
    }
}

/// Optional reference quantities tracked per iteration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Tracking<'a> {
    /// Exact forward operator; enables `grad_norm_exact`.
    pub exact: Option<&'a SurrogateHandle>,
    /// Ground-truth field; enables `mae`.
    pub truth: Option<&'a Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDiagnostics {
    pub mode: InversionMode,
    pub lr: f64,
    pub loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub grad_norm_exact: Vec<Option<f64>>,
    pub mae: Vec<Option<f64>>,
    pub wallclock_ms: Vec<Option<f64>>,
    /// `‖z^{(k+1)} − z^{(k)}‖` for every update taken.
    pub step_sizes: Vec<f64>,
    /// `z^{(k)}` for every evaluated iterate.
    pub iterates: Vec<Tensor>,
    pub best_iter: usize,
    /// Iteration at which a tolerance stopped the run.
    pub early_stop: Option<usize>,
    pub l_hat: Option<f64>,
    pub delta_hat: Option<f64>,
}

impl TrajectoryDiagnostics {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn best_loss(&self) -> f64 {
        self.loss[self.best_iter]
    }

    /// Iterates at 0, 25, 50, 75 and 100% of the path.
    pub fn path_points(&self) -> Vec<Tensor> {
        let last = self.iterates.len() - 1;
        let mut idx: Vec<usize> = [0, 1, 2, 3, 4].iter().map(|q| (q * last + 2) / 4).collect();
        idx.dedup();
        idx.into_iter().map(|i| self.iterates[i].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    /// Decoded field of the best-loss iterate.
    pub field: Tensor,
    pub z_t: Tensor,
    pub diagnostics: TrajectoryDiagnostics,
}

fn mean_abs_error(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Gradient descent on the initial noise of the deterministic trajectory.
pub fn dilo_invert(
    y_obs: &Tensor,
    bundle: &ModelBundle,
    surrogate: &SurrogateHandle,
    config: &InversionConfig,
    tracking: Tracking<'_>,
) -> Result<InversionResult> {
    config.validate()?;
    let y = config.observation(y_obs)?;
    let objective = LatentObjective::new(bundle, surrogate, &y, config.substeps, config.loss_weight)?;
    let exact = tracking.exact.map(|e| objective.with_surrogate(e));
    let opt = config.optimizer();
    let mut state = OptimizerState::new();
    let mut z = config.initial_latent(bundle.latent_dim());
    let start = Instant::now();

    let mut diag = TrajectoryDiagnostics {
        mode: config.mode,
        lr: config.lr,
        loss: Vec::new(),
        grad_norm: Vec::new(),
        grad_norm_exact: Vec::new(),
        mae: Vec::new(),
        wallclock_ms: Vec::new(),
        step_sizes: Vec::new(),
        iterates: Vec::new(),
        best_iter: 0,
        early_stop: None,
        l_hat: None,
        delta_hat: None,
    };
    let mut best_field = None;
    for k in 0..config.iterations {
        let eval = objective.evaluate(&z, true)?;
        let grad = eval.grad.expect("requested");
        if !eval.loss.is_finite() || !grad.all_finite() {
            return Err(Error::NonFiniteLoss(k));
        }
        let gnorm = grad.norm();
        diag.loss.push(eval.loss);
        diag.grad_norm.push(gnorm);
        diag.grad_norm_exact.push(match &exact {
            Some(e) => Some(e.gradient(&z)?.norm()),
            None => None,
        });
        diag.mae.push(tracking.truth.map(|t| mean_abs_error(&eval.field, t)));
        diag.wallclock_ms
            .push(config.record_wallclock.then(|| start.elapsed().as_secs_f64() * 1e3));
        diag.iterates.push(z.clone());
        if best_field.is_none() || eval.loss < diag.loss[diag.best_iter] {
            diag.best_iter = k;
            best_field = Some(eval.field);
        }
        if gnorm < config.grad_tol || eval.loss < config.loss_tol {
            diag.early_stop = Some(k);
            break;
        }
        if k + 1 == config.iterations {
            break;
        }
        let mut params = [z.clone()];
        optimizer_update(&mut state, &mut params, &[grad], &opt)?;
        let [next] = params;
        diag.step_sizes.push(next.axpy(-1.0, &z)?.norm());
        z = next;
    }
    Ok(InversionResult {
        field: best_field.expect("at least one iteration"),
        z_t: diag.iterates[diag.best_iter].clone(),
        diagnostics: diag,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpsResult {
    pub field: Tensor,
    pub z0: Tensor,
    /// `w·‖𝐹̃(𝒟(z₀)) − y‖²`, comparable with the inversion loss.
    pub final_loss: f64,
    /// `‖𝐹̃(𝒟(ẑ₀)) − y‖` at each sub-step.
    pub residuals: Vec<f64>,
}

/// One guided reverse pass: each DDIM step is followed by
/// `z ← z − γ_g ∇_{z_t} w‖𝐹̃(𝒟(ẑ₀(z_t))) − y‖²`.
pub fn dps_baseline(
    y_obs: &Tensor,
    bundle: &ModelBundle,
    surrogate: &SurrogateHandle,
    gamma_g: f64,
    config: &InversionConfig,
) -> Result<DpsResult> {
    config.validate()?;
    if !(gamma_g >= 0.0 && gamma_g.is_finite()) {
        return Err(Error::invalid(format!("guidance scale must be >= 0, got {gamma_g}")));
    }
    let y = config.observation(y_obs)?;
    let objective = LatentObjective::new(bundle, surrogate, &y, config.substeps, config.loss_weight)?;
    let d = bundle.latent_dim();
    let ae = &bundle.autoencoder;
    let mut z = config.initial_latent(d).reshape([1, d])?;
    let mut residuals = Vec::new();
    for (k, (t, t_prev)) in objective.schedule.step_pairs().into_iter().enumerate() {
        let g = Graph::new();
        let sp = bundle.score.bind(&g, false);
        let dp = ae.decoder.bind(&g, false);
        let zt = g.leaf(z.clone());
        let eps = bundle.score.predict(&sp, zt, &[t])?;
        let (next, z0_hat) = ddim_step_var(zt, eps, t, t_prev, &objective.schedule)?;
        let a = ae.decode(&dp, z0_hat)?.reshape([bundle.field_dim()])?;
        let pred = surrogate.forward(a)?;
        let r = pred.squared_distance(g.constant(objective.y_obs.clone()))?;
        let rv = r.item()?;
        if !rv.is_finite() {
            return Err(Error::NonFiniteLoss(k));
        }
        residuals.push(rv.sqrt());
        let step = next.value();
        z = if gamma_g == 0.0 {
            step
        } else {
            let grad = g.backward(r.scale(objective.weight)?)?.wrt(zt);
            step.axpy(-gamma_g, &grad)?
        };
    }
    let z0 = z.reshape([d])?;
    let field = bundle.decode(&z0)?;
    let final_loss = objective.weight * surrogate.eval(&field)?.axpy(-1.0, &objective.y_obs)?.norm().powi(2);
    Ok(DpsResult {
        field,
        z0,
        final_loss,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodCurve {
    /// Sub-steps in descending order.
    pub timesteps: Vec<usize>,
    /// `‖𝐹̃(𝒟(ẑ₀(z_t))) − y‖` at each sub-step.
    pub residuals: Vec<f64>,
    /// `‖𝐹̃(σ) − y‖`, the noise-free reference.
    pub clean_residual: f64,
}

impl OodCurve {
    /// `residual(t = T) / residual(t ≈ 0)`.
    pub fn endpoint_ratio(&self) -> f64 {
        self.residuals[0] / self.residuals[self.residuals.len() - 1]
    }
}

/// Surrogate residual on Tweedie estimates of a noised encoding of `sigma`.
pub fn ood_diagnostic(bundle: &ModelBundle, surrogate: &SurrogateHandle, sigma: &Tensor, y: &Tensor, seed: u64) -> Result<OodCurve> {
    let schedule = &bundle.schedule;
    let out = surrogate.output_shape();
    let y = y.clone().reshape(out)?;
    let z = bundle.encode(sigma)?;
    let d = z.len();
    let eps = normal_tensor(&mut rng_for(seed, "ood-noise"), &[d]);
    let residual = |a: &Tensor| -> Result<f64> { Ok(surrogate.eval(a)?.axpy(-1.0, &y)?.norm()) };
    let mut curve = OodCurve {
        timesteps: schedule.substeps().to_vec(),
        residuals: Vec::new(),
        clean_residual: residual(sigma)?,
    };
    for &t in schedule.substeps() {
        let zt = forward_noise(&z, t, &eps, schedule)?.reshape([1, d])?;
        let eps_hat = bundle.score.eval(&zt, t)?;
        let z0 = tweedie(&zt, &eps_hat, t, schedule)?.reshape([d])?;
        curve.residuals.push(residual(&bundle.decode(&z0)?)?);
    }
    Ok(curve)
}
