use rand_distr::{Distribution, StandardNormal, Uniform};

use super::schedule::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Graph, Tensor, Var};

/// A noise-prediction network `ε_θ(z_t, t)`.
pub trait NoisePredictor {
    /// Places the parameters on `g`, as leaves when `trainable`.
    fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> Vec<Var<'g>>;

    /// `z` is `[batch, d]`; `t` holds one timestep per row.
    fn predict<'g>(&self, params: &[Var<'g>], z: Var<'g>, t: &[usize]) -> Result<Var<'g>>;
}

/// `√ᾱ_t z₀ + √(1−ᾱ_t) ε`.
pub fn forward_noise(z0: &Tensor, t: usize, eps: &Tensor, schedule: &DiffusionSchedule) -> Result<Tensor> {
    schedule.check_t(t)?;
    let ab = schedule.alpha_bar(t)?;
    z0.scaled(ab.sqrt()).axpy((1.0 - ab).sqrt(), eps)
}

fn tweedie_coeffs(t: usize, schedule: &DiffusionSchedule) -> Result<(f64, f64)> {
    let ab = schedule.alpha_bar(t)?;
    if ab <= 0.0 {
        return Err(Error::Domain {
            op: "tweedie",
            msg: format!("alpha_bar at t={t} is zero"),
        });
    }
    Ok((1.0 / ab.sqrt(), (1.0 - ab).sqrt() / ab.sqrt()))
}

/// Clean-latent estimate `(z_t − √(1−ᾱ_t) ε̂) / √ᾱ_t`.
pub fn tweedie(z_t: &Tensor, eps_hat: &Tensor, t: usize, schedule: &DiffusionSchedule) -> Result<Tensor> {
    let (a, b) = tweedie_coeffs(t, schedule)?;
    z_t.scaled(a).axpy(-b, eps_hat)
}

pub fn tweedie_var<'g>(z_t: Var<'g>, eps_hat: Var<'g>, t: usize, schedule: &DiffusionSchedule) -> Result<Var<'g>> {
    let (a, b) = tweedie_coeffs(t, schedule)?;
    z_t.scale(a)?.sub(eps_hat.scale(b)?)
}

/// `δ_t = √((1−ᾱ_prev)/(1−ᾱ_t)) · √(1−ᾱ_t/ᾱ_prev)`.
pub fn ddim_sigma(t: usize, t_prev: usize, schedule: &DiffusionSchedule) -> Result<f64> {
    let (ab, ab_prev) = (schedule.alpha_bar(t)?, schedule.alpha_bar(t_prev)?);
    if ab >= 1.0 {
        return Ok(0.0);
    }
    Ok(((1.0 - ab_prev) / (1.0 - ab)).sqrt() * (1.0 - ab / ab_prev).max(0.0).sqrt())
}

/// `(c_t, d_t)` of the deterministic update `z_prev = c_t z_t + d_t ε̂`.
pub fn coefficients_cd(t: usize, t_prev: usize, schedule: &DiffusionSchedule) -> Result<(f64, f64)> {
    if t <= t_prev {
        return Err(Error::invalid(format!("need t > t_prev, got {t} <= {t_prev}")));
    }
    schedule.check_t(t)?;
    let (ab, ab_prev) = (schedule.alpha_bar(t)?, schedule.alpha_bar(t_prev)?);
    let c = (ab_prev / ab).sqrt();
    Ok((c, (1.0 - ab_prev).sqrt() - c * (1.0 - ab).sqrt()))
}

struct StepCoeffs {
    /// `√ᾱ_prev`
    clean: f64,
    /// `√(1−ᾱ_prev−η²δ²)`
    direction: f64,
    /// `ηδ`
    noise: f64,
}

fn step_coeffs(t: usize, t_prev: usize, eta: f64, has_noise: bool, schedule: &DiffusionSchedule) -> Result<StepCoeffs> {
    if t <= t_prev {
        return Err(Error::invalid(format!("need t > t_prev, got {t} <= {t_prev}")));
    }
    if eta < 0.0 {
        return Err(Error::invalid(format!("eta must be >= 0, got {eta}")));
    }
    if (eta > 0.0) != has_noise {
        return Err(Error::invalid("noise must be supplied exactly when eta > 0"));
    }
    schedule.check_t(t)?;
    let ab_prev = schedule.alpha_bar(t_prev)?;
    let noise = eta * ddim_sigma(t, t_prev, schedule)?;
    let rem = 1.0 - ab_prev - noise * noise;
    if rem < 0.0 {
        return Err(Error::Domain {
            op: "ddim_step",
            msg: format!("eta^2 delta^2 = {:e} exceeds 1 - alpha_bar_prev = {:e}", noise * noise, 1.0 - ab_prev),
        });
    }
    Ok(StepCoeffs {
        clean: ab_prev.sqrt(),
        direction: rem.sqrt(),
        noise,
    })
}

/// `z_prev = √ᾱ_prev ẑ₀ + √(1−ᾱ_prev−η²δ_t²) ε̂ + ηδ_t ξ`.
pub fn ddim_step(
    z_t: &Tensor,
    eps_hat: &Tensor,
    t: usize,
    t_prev: usize,
    eta: f64,
    noise: Option<&Tensor>,
    schedule: &DiffusionSchedule,
) -> Result<Tensor> {
    let k = step_coeffs(t, t_prev, eta, noise.is_some(), schedule)?;
    let z0 = tweedie(z_t, eps_hat, t, schedule)?;
    let mut out = z0.scaled(k.clean).axpy(k.direction, eps_hat)?;
    if let Some(xi) = noise {
        out = out.axpy(k.noise, xi)?;
    }
    Ok(out)
}

/// One deterministic step on the graph; returns `(z_prev, ẑ₀)`.
pub fn ddim_step_var<'g>(
    z_t: Var<'g>,
    eps_hat: Var<'g>,
    t: usize,
    t_prev: usize,
    schedule: &DiffusionSchedule,
) -> Result<(Var<'g>, Var<'g>)> {
    let k = step_coeffs(t, t_prev, 0.0, false, schedule)?;
    let z0 = tweedie_var(z_t, eps_hat, t, schedule)?;
    if t_prev == 0 {
        return Ok((z0, z0));
    }
    let z_prev = z0.scale(k.clean)?.add(eps_hat.scale(k.direction)?)?;
    Ok((z_prev, z0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub t: usize,
    pub z_t: Tensor,
    pub eps_hat: Tensor,
    pub z0_hat: Tensor,
}

/// One deterministic unroll. The final entry has `t = 0` and holds `z₀`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub entries: Vec<TrajectoryEntry>,
}

impl TrajectoryRecord {
    pub fn z0(&self) -> Option<&Tensor> {
        self.entries.last().map(|e| &e.z_t)
    }
}

fn check_latent(z: &Var<'_>) -> Result<usize> {
    let shape = z.shape();
    if shape.len() != 2 {
        return Err(Error::Domain {
            op: "sample_deterministic",
            msg: format!("latent must be [batch, d], got {shape:?}"),
        });
    }
    Ok(shape[0])
}

/// Deterministic (η = 0) unroll from `z_T` (`[batch, d]`) to `z₀`, recorded
/// on the graph of `z_T`.
pub fn sample_deterministic<'g>(
    model: &dyn NoisePredictor,
    params: &[Var<'g>],
    z_t: Var<'g>,
    schedule: &DiffusionSchedule,
    record: bool,
) -> Result<(Var<'g>, Option<TrajectoryRecord>)> {
    let batch = check_latent(&z_t)?;
    let mut z = z_t;
    let mut rec = record.then(TrajectoryRecord::default);
    for (t, t_prev) in schedule.step_pairs() {
        let eps = model.predict(params, z, &vec![t; batch])?;
        let (next, z0) = ddim_step_var(z, eps, t, t_prev, schedule)?;
        if let Some(r) = rec.as_mut() {
            r.entries.push(TrajectoryEntry {
                t,
                z_t: z.value(),
                eps_hat: eps.value(),
                z0_hat: z0.value(),
            });
        }
        z = next;
    }
    if let Some(r) = rec.as_mut() {
        let v = z.value();
        r.entries.push(TrajectoryEntry {
            t: 0,
            z_t: v.clone(),
            eps_hat: Tensor::zeros(v.shape().to_vec()),
            z0_hat: v,
        });
    }
    Ok((z, rec))
}

/// Value-only unroll on a scratch graph.
pub fn sample_deterministic_value(
    model: &dyn NoisePredictor,
    z_t: &Tensor,
    schedule: &DiffusionSchedule,
) -> Result<Tensor> {
    let g = Graph::new();
    let params = model.bind(&g, false);
    let z = g.constant(z_t.clone());
    Ok(sample_deterministic(model, &params, z, schedule, false)?.0.value())
}

/// Mean over the batch of `‖ε − ε_θ(z_t, t)‖²`, with `t` uniform in
/// `1..=T_train` and `ε` standard normal.
pub fn diffusion_loss<'g>(
    g: &'g Graph,
    model: &dyn NoisePredictor,
    params: &[Var<'g>],
    z0: &Tensor,
    schedule: &DiffusionSchedule,
    rng: &mut Rng,
) -> Result<Var<'g>> {
    if z0.ndim() != 2 || z0.shape()[0] == 0 {
        return Err(Error::invalid(format!(
            "diffusion loss needs a non-empty [batch, d] tensor, got {:?}",
            z0.shape()
        )));
    }
    let (batch, d) = (z0.shape()[0], z0.shape()[1]);
    let steps = Uniform::new_inclusive(1, schedule.t_train()).expect("non-empty range");
    let ts: Vec<usize> = (0..batch).map(|_| steps.sample(rng)).collect();
    let eps: Vec<f64> = (0..batch * d).map(|_| StandardNormal.sample(rng)).collect();
    let eps = Tensor::new([batch, d], eps)?;
    let mut zt = vec![0.0; batch * d];
    for (r, &t) in ts.iter().enumerate() {
        let ab = schedule.alpha_bar(t)?;
        for c in 0..d {
            let i = r * d + c;
            zt[i] = ab.sqrt() * z0.data()[i] + (1.0 - ab).sqrt() * eps.data()[i];
        }
    }
    let pred = model.predict(params, g.constant(Tensor::new([batch, d], zt)?), &ts)?;
    pred.squared_distance(g.constant(eps))?.scale(1.0 / batch as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plug_in_forward_noise() {
        let s = DiffusionSchedule::from_betas(vec![0.75], 1).unwrap();
        let z = forward_noise(&Tensor::from_vec(vec![1.0, 0.0]), 1, &Tensor::from_vec(vec![0.0, 1.0]), &s).unwrap();
        assert!((z.data()[0] - 0.5).abs() < 1e-15);
        assert!((z.data()[1] - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn forward_noise_limits() {
        let z0 = Tensor::from_vec(vec![0.3, -1.2]);
        let eps = Tensor::from_vec(vec![2.0, 0.5]);
        let clean = DiffusionSchedule::from_betas(vec![0.0], 1).unwrap();
        assert_eq!(forward_noise(&z0, 1, &eps, &clean).unwrap(), z0);
        let pure = DiffusionSchedule::from_betas(vec![1.0], 1).unwrap();
        assert_eq!(forward_noise(&z0, 1, &eps, &pure).unwrap(), eps);
        assert!(forward_noise(&z0, 2, &eps, &pure).is_err());
        assert!(tweedie(&z0, &eps, 1, &pure).is_err());
    }

    #[test]
    fn cd_plug_in() {
        // ᾱ_1 = 0.81, ᾱ_2 = 0.25
        let s = DiffusionSchedule::from_betas(vec![0.19, 1.0 - 0.25 / 0.81], 2).unwrap();
        let (c, d) = coefficients_cd(2, 1, &s).unwrap();
        assert!((c - 1.8).abs() < 1e-14);
        assert!((d - (0.19f64.sqrt() - 1.8 * 0.75f64.sqrt())).abs() < 1e-14);
        assert!((d + 1.122_955_832_4).abs() < 1e-9);
    }

    #[test]
    fn identity_step() {
        let s = DiffusionSchedule::from_betas(vec![0.1, 0.0], 2).unwrap();
        assert_eq!(coefficients_cd(2, 1, &s).unwrap(), (1.0, 0.0));
        let z = Tensor::from_vec(vec![0.4, -0.9]);
        let e = Tensor::from_vec(vec![1.3, 0.2]);
        let out = ddim_step(&z, &e, 2, 1, 0.0, None, &s).unwrap();
        assert!(relative_error_small(&out, &z));
    }

    fn relative_error_small(a: &Tensor, b: &Tensor) -> bool {
        crate::tensor::relative_error(a, b) < 1e-14
    }

    #[test]
    fn noise_flag_must_match_eta() {
        let s = DiffusionSchedule::default();
        let z = Tensor::zeros([2]);
        assert!(ddim_step(&z, &z, 10, 5, 1.0, None, &s).is_err());
        assert!(ddim_step(&z, &z, 10, 5, 0.0, Some(&z), &s).is_err());
        assert!(ddim_step(&z, &z, 5, 10, 0.0, None, &s).is_err());
    }

    #[test]
    fn excessive_eta_rejected() {
        let s = DiffusionSchedule::default();
        let z = Tensor::zeros([2]);
        assert!(ddim_step(&z, &z, 500, 400, 5.0, Some(&z), &s).is_err());
    }
}
