//! Oracle-only self checks: autodiff against finite differences, the EIT
//! adjoint against perturbed solves, DDIM algebra and physics invariants.
//! Nothing here needs trained artifacts.

use std::f64::consts::PI;

use crate::diffusion::{coefficients_cd, ddim_step, forward_noise, sample_deterministic_value, tweedie, DiffusionSchedule};
use crate::error::Result;
use crate::networks::{Activation, ScoreNet, TimeEmbedding};
use crate::physics::{harmonic_extension, ns_forward, CurrentPatternSet, EitSolver, Forcing, Grid, NsConfig, SolverSettings};
use crate::rng::{normal_tensor, normal_vec, rng_for};
use crate::tensor::{finite_difference_gradient, hvp_finite_difference, relative_error, Graph, Tensor};

/// One named check with the measured quantity and its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckOutcome {
    /// Passes when `measured <= threshold`.
    pub fn at_most(name: &'static str, measured: f64, threshold: f64) -> Self {
        Self {
            name,
            measured,
            threshold,
            passed: measured <= threshold,
        }
    }
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

/// Reverse-mode gradient of a small composite expression against central
/// differences.
pub fn autodiff_gradients(seed: u64) -> Result<CheckOutcome> {
    let w = normal_tensor(&mut rng_for(seed, "verify-w"), &[5, 4]);
    let loss = |x: &Tensor, g: &Graph| -> Result<f64> {
        let xv = g.constant(x.clone());
        let h = xv.matmul(g.constant(w.clone()))?.tanh()?;
        h.sin()?.mul(h.square()?)?.add(h.cos()?)?.mean()?.item()
    };
    let mut worst: f64 = 0.0;
    for k in 0..4 {
        let x = normal_tensor(&mut rng_for(seed + k, "verify-x"), &[3, 5]);
        let g = Graph::new();
        let xv = g.leaf(x.clone());
        let h = xv.matmul(g.constant(w.clone()))?.tanh()?;
        let out = h.sin()?.mul(h.square()?)?.add(h.cos()?)?.mean()?;
        let analytic = g.backward(out)?.wrt(xv);
        let fd = finite_difference_gradient(|x| loss(x, &Graph::new()), &x, 1e-6)?;
        worst = worst.max(relative_error(&analytic, &fd));
    }
    Ok(CheckOutcome::at_most("autodiff vs finite differences", worst, 1e-5))
}

fn smooth_sigma(grid: Grid, seed: u64) -> Vec<f64> {
    let r = normal_vec(&mut rng_for(seed, "verify-sigma"), 3 + grid.len());
    (0..grid.len())
        .map(|k| {
            let (x, y) = grid.coords(k);
            0.45 + 0.2 * ((2.0 + r[0]) * x + r[2]).sin() * ((2.0 + r[1]) * y).cos() + 0.02 * r[3 + k].tanh()
        })
        .collect()
}

/// EIT adjoint gradient against directional differences of the misfit, and
/// the Hessian-vector product against differences of the gradient.
pub fn eit_adjoint(instances: usize, n: usize, patterns: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let grid = Grid::new(n)?;
    let solver = EitSolver::new(grid, CurrentPatternSet::trigonometric(&grid, patterns)?, SolverSettings::Direct)?;
    let misfit = |s: &[f64], v_obs: &Tensor| -> Result<f64> {
        let v = solver.solve(s)?.voltages;
        Ok(0.5 * v.axpy(-1.0, v_obs)?.norm().powi(2))
    };
    let (mut grad_err, mut hvp_err, mut asym): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..instances as u64 {
        let sigma = smooth_sigma(grid, seed + 2 * i);
        let v_obs = solver.solve(&smooth_sigma(grid, seed + 2 * i + 1))?.voltages;
        let (grad, _) = solver.adjoint_gradient(&sigma, &v_obs)?;
        let dir = normal_vec(&mut rng_for(seed + i, "verify-dir"), grid.len());
        let h = 1e-5;
        let shifted = |s: f64| -> Vec<f64> { sigma.iter().zip(&dir).map(|(a, d)| a + s * d).collect() };
        let fd = (misfit(&shifted(h), &v_obs)? - misfit(&shifted(-h), &v_obs)?) / (2.0 * h);
        let an: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        grad_err = grad_err.max((fd - an).abs() / an.abs());

        if i < 3 {
            let dir2 = normal_vec(&mut rng_for(seed + i, "verify-dir2"), grid.len());
            let h1 = solver.hvp(&sigma, &v_obs, &dir)?;
            let h2 = solver.hvp(&sigma, &v_obs, &dir2)?;
            let fd_h = hvp_finite_difference(
                |x| Ok(Tensor::from_vec(solver.adjoint_gradient(x.data(), &v_obs)?.0)),
                &Tensor::from_vec(sigma.clone()),
                &Tensor::from_vec(dir.clone()),
                1e-5,
            )?;
            hvp_err = hvp_err.max(relative_error(&Tensor::from_vec(h1.clone()), &fd_h));
            let a: f64 = h1.iter().zip(&dir2).map(|(x, y)| x * y).sum();
            let b: f64 = h2.iter().zip(&dir).map(|(x, y)| x * y).sum();
            asym = asym.max((a - b).abs() / a.abs().max(b.abs()));
        }
    }
    Ok(vec![
        CheckOutcome::at_most("EIT adjoint gradient vs finite differences", grad_err, 1e-4),
        CheckOutcome::at_most("EIT Hessian-vector product vs finite differences", hvp_err, 1e-3),
        CheckOutcome::at_most("EIT Hessian-vector product symmetry", asym, 1e-4),
    ])
}

/// Two forms of the deterministic step, Tweedie inversion, the identity
/// step and bitwise repeatability of the unroll.
pub fn ddim_algebra(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut two_form: f64 = 0.0;
    for s in 0..8 {
        let raw = normal_vec(&mut rng_for(seed + s, "verify-betas"), 120);
        let betas = raw.iter().map(|v| 0.001 + 0.05 * (0.5 + 0.5 * v.tanh())).collect();
        let schedule = DiffusionSchedule::from_betas(betas, 12)?;
        let z = normal_tensor(&mut rng_for(seed + s, "verify-z"), &[6]);
        let e = normal_tensor(&mut rng_for(seed + s, "verify-e"), &[6]);
        for (t, tp) in schedule.step_pairs() {
            let (c, d) = coefficients_cd(t, tp, &schedule)?;
            let direct = ddim_step(&z, &e, t, tp, 0.0, None, &schedule)?;
            two_form = two_form.max(relative_error(&direct, &z.scaled(c).axpy(d, &e)?));
        }
    }

    let schedule = DiffusionSchedule::default();
    let mut round_trip: f64 = 0.0;
    for t in [1, 10, 100, 500, 900] {
        let z0 = normal_tensor(&mut rng_for(seed + t as u64, "verify-z0"), &[8]);
        let eps = normal_tensor(&mut rng_for(seed + t as u64, "verify-eps"), &[8]);
        let back = tweedie(&forward_noise(&z0, t, &eps, &schedule)?, &eps, t, &schedule)?;
        round_trip = round_trip.max(back.axpy(-1.0, &z0)?.max_abs());
    }

    let flat = DiffusionSchedule::from_betas(vec![0.1, 0.0], 2)?;
    let (c, d) = coefficients_cd(2, 1, &flat)?;
    let identity = (c - 1.0).abs().max(d.abs());

    let net = ScoreNet::new(seed, 4, &[16, 16], TimeEmbedding::new(8)?, Activation::Tanh, schedule.t_train())?;
    let z_t = normal_tensor(&mut rng_for(seed, "verify-zT"), &[2, 4]);
    let first = sample_deterministic_value(&net, &z_t, &schedule)?;
    let mut mismatches = 0.0;
    for _ in 0..3 {
        if bits(&sample_deterministic_value(&net, &z_t, &schedule)?) != bits(&first) {
            mismatches += 1.0;
        }
    }

    Ok(vec![
        CheckOutcome::at_most("DDIM two-form equivalence", two_form, 1e-12),
        CheckOutcome::at_most("Tweedie round trip", round_trip, 1e-10),
        CheckOutcome::at_most("identity step coefficients", identity, 0.0),
        CheckOutcome::at_most("deterministic unroll repeats bitwise", mismatches, 0.0),
    ])
}

/// EIT homogeneity, viscous decay of a single mode, conservation of mean
/// vorticity and the discrete maximum principle.
pub fn physics_invariants(boundaries: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let grid = Grid::new(12)?;
    let solver = EitSolver::new(grid, CurrentPatternSet::trigonometric(&grid, 8)?, SolverSettings::Direct)?;
    let mut homogeneity: f64 = 0.0;
    for (i, c) in [0.1, 0.5, 3.0, 17.0].into_iter().enumerate() {
        let sigma = smooth_sigma(grid, seed + i as u64);
        let v1 = solver.solve(&sigma)?.voltages;
        let scaled: Vec<f64> = sigma.iter().map(|s| c * s).collect();
        homogeneity = homogeneity.max(relative_error(&solver.solve(&scaled)?.voltages.scaled(c), &v1));
    }

    let n = 16;
    let k = 3.0;
    let heat = NsConfig {
        n,
        t_final: 1.0,
        dt: 1e-3,
        forcing: Forcing::None,
        advection: false,
        ..NsConfig::default()
    };
    let w0: Vec<f64> = (0..n * n).map(|idx| (k * 2.0 * PI * (idx % n) as f64 / n as f64).cos()).collect();
    let decay = (-heat.nu * k * k * heat.t_final).exp();
    let decay_err = ns_forward(&w0, &heat)?
        .iter()
        .zip(&w0)
        .map(|(a, b)| (a - decay * b).abs())
        .fold(0.0, f64::max);

    let w1 = normal_vec(&mut rng_for(seed, "verify-vorticity"), n * n)
        .iter()
        .enumerate()
        .map(|(idx, r)| 0.7 + (2.0 * PI * (idx % n) as f64 / n as f64).sin() + 0.1 * r)
        .collect::<Vec<_>>();
    let flow = NsConfig {
        n,
        t_final: 0.5,
        dt: 5e-3,
        ..NsConfig::default()
    };
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    let drift = (mean(&ns_forward(&w1, &flow)?) - mean(&w1)).abs();

    let mut violation: f64 = 0.0;
    for b in 0..boundaries as u64 {
        let g = Grid::new(4 + (b as usize % 9))?;
        let values = normal_vec(&mut rng_for(seed + b, "verify-boundary"), g.n_boundary());
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for u in harmonic_extension(&values, g)? {
            violation = violation.max(lo - u).max(u - hi);
        }
    }

    Ok(vec![
        CheckOutcome::at_most("EIT homogeneity", homogeneity, 1e-10),
        CheckOutcome::at_most("single-mode viscous decay", decay_err, 1e-8),
        CheckOutcome::at_most("mean vorticity conservation", drift, 1e-12),
        CheckOutcome::at_most("harmonic extension maximum principle", violation.max(0.0), 1e-12),
    ])
}

/// Every oracle check at its standard size.
pub fn oracle_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = vec![autodiff_gradients(seed)?];
    out.extend(eit_adjoint(20, 16, 8, seed)?);
    out.extend(ddim_algebra(seed)?);
    out.extend(physics_invariants(100, seed)?);
    Ok(out)
}
