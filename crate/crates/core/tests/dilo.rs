mod common;

use common::{eit_solver, small_bundle};
use dilo::diffusion::sample_deterministic_value;
use dilo::dilo::{
    dilo_invert, dps_baseline, estimate_l, ood_diagnostic, verify_convergence, InversionConfig, InversionMode,
    LatentObjective, TrajectoryDiagnostics, Tracking,
};
use dilo::networks::{SpectralArch, SpectralSurrogate, SurrogateHead};
use dilo::rng::{normal_tensor, rng_for};
use dilo::surrogate::SurrogateHandle;
use dilo::tensor::{finite_difference_gradient, relative_error, Graph, Tensor};
use dilo::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn neural(n: usize, patterns: usize) -> SurrogateHandle {
    let mut arch = SpectralArch::new(n, 6, 3, 2, SurrogateHead::Boundary { patterns }).unwrap();
    arch.input_shift = 0.4;
    arch.input_scale = 0.3;
    SurrogateHandle::Neural(SpectralSurrogate::new(3, arch).unwrap())
}

fn config(iterations: usize) -> InversionConfig {
    InversionConfig {
        iterations,
        lr: 2e-2,
        seed: 4,
        ..InversionConfig::default()
    }
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let (bundle, data) = small_bundle(8, 8, 5, 1);
    let exact = SurrogateHandle::Exact(eit_solver(8, 4));
    let y_obs = exact.eval(&data.fields[3]).unwrap();
    for (handle, tol) in [(neural(8, 4), 1e-5), (exact.clone(), 1e-6)] {
        let obj = LatentObjective::new(&bundle, &handle, &y_obs, None, 0.5).unwrap();
        for s in 0..2 {
            let z = normal_tensor(&mut rng_for(s, "z"), &[8]);
            let fd = finite_difference_gradient(|x| obj.loss(x), &z, 1e-6).unwrap();
            let err = relative_error(&obj.gradient(&z).unwrap(), &fd);
            assert!(err < tol, "exact={} err {err:e}", handle.is_exact());
        }
    }
}

#[test]
fn zero_gradient_start_never_moves() {
    let (mut bundle, data) = small_bundle(8, 4, 5, 2);
    // a decoder that ignores its input has ∇ = 0 everywhere
    let w = &mut bundle.autoencoder.decoder.params[0];
    *w = w.map(|_| 0.0);
    let exact = SurrogateHandle::Exact(eit_solver(8, 4));
    let y_obs = exact.eval(&data.fields[0]).unwrap();
    let cfg = InversionConfig {
        grad_tol: 0.0,
        ..config(20)
    };
    let out = dilo_invert(&y_obs, &bundle, &exact, &cfg, Tracking::default()).unwrap();
    let d = &out.diagnostics;
    assert_eq!(d.len(), 20);
    assert!(d.grad_norm.iter().all(|&g| g == 0.0));
    assert!(d.iterates.iter().all(|z| bits(z) == bits(&d.iterates[0])));
    assert_eq!(bits(&out.z_t), bits(&cfg.initial_latent(4)));
}

#[test]
fn inversion_is_repeatable_and_returns_the_best_iterate() {
    let (bundle, data) = small_bundle(8, 4, 5, 3);
    let exact = SurrogateHandle::Exact(eit_solver(8, 4));
    let truth = &data.fields[1];
    let y_obs = exact.eval(truth).unwrap();
    let track = Tracking {
        exact: Some(&exact),
        truth: Some(truth),
    };
    let run = || dilo_invert(&y_obs, &bundle, &exact, &config(40), track).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a, b);

    let d = &a.diagnostics;
    assert_eq!(d.len(), 40);
    assert_eq!(d.step_sizes.len(), 39);
    assert!(d.loss.iter().chain(&d.grad_norm).all(|v| v.is_finite()));
    assert!(d.mae.iter().all(|m| m.is_some()));
    assert!(d.wallclock_ms.iter().all(|w| w.is_none()));
    // exact surrogate and exact tracking agree
    assert!(d.grad_norm.iter().zip(&d.grad_norm_exact).all(|(g, e)| e.unwrap() == *g));
    let min = d.loss.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(d.best_loss(), min);
    assert_eq!(bits(&a.z_t), bits(&d.iterates[d.best_iter]));
    assert_eq!(bits(&a.field), bits(&bundle.decode(&sample_deterministic_value(&bundle.score, &a.z_t.clone().reshape([1, 4]).unwrap(), &bundle.schedule).unwrap().reshape([4]).unwrap()).unwrap()));
    assert!(d.best_loss() < d.loss[0]);
}

#[test]
fn inversion_rejects_bad_inputs() {
    let (bundle, _) = small_bundle(8, 4, 5, 4);
    let exact = SurrogateHandle::Exact(eit_solver(8, 4));
    let nan = Tensor::full(exact.output_shape(), f64::NAN);
    let err = dilo_invert(&nan, &bundle, &exact, &config(5), Tracking::default()).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss(0)), "{err}");

    let y = Tensor::zeros([3]);
    assert!(dilo_invert(&y, &bundle, &exact, &config(5), Tracking::default()).is_err());
    let ok = Tensor::zeros(exact.output_shape());
    for bad in [config(0), InversionConfig { lr: 0.0, ..config(5) }, InversionConfig { noise_gamma: -1.0, ..config(5) }] {
        assert!(dilo_invert(&ok, &bundle, &exact, &bad, Tracking::default()).is_err());
    }
    assert!(dilo_invert(&ok, &bundle, &neural(12, 4), &config(5), Tracking::default()).is_err());
}

#[test]
fn mode_names_round_trip() {
    for m in [InversionMode::Adam, InversionMode::AdamW, InversionMode::GdOneOverL] {
        assert_eq!(m.to_string().parse::<InversionMode>().unwrap(), m);
    }
    assert!("sgd".parse::<InversionMode>().is_err());
    let d = InversionConfig::default();
    assert_eq!((d.iterations, d.lr), (3000, 5e-3));
}

#[test]
fn unguided_baseline_is_the_plain_sampler() {
    let (bundle, data) = small_bundle(8, 4, 6, 5);
    let exact = SurrogateHandle::Exact(eit_solver(8, 4));
    let y_obs = exact.eval(&data.fields[2]).unwrap();
    let cfg = config(1);
    let plain = dps_baseline(&y_obs, &bundle, &exact, 0.0, &cfg).unwrap();
    let z_t = cfg.initial_latent(4).reshape([1, 4]).unwrap();
    let direct = sample_deterministic_value(&bundle.score, &z_t, &bundle.schedule).unwrap();
    assert_eq!(bits(&plain.z0), bits(&direct.reshape([4]).unwrap()));
    assert_eq!(plain.residuals.len(), 6);
    assert!(plain.final_loss.is_finite());

    let guided = dps_baseline(&y_obs, &bundle, &exact, 1e-3, &cfg).unwrap();
    assert_ne!(bits(&guided.z0), bits(&plain.z0));
    assert!(dps_baseline(&y_obs, &bundle, &exact, -1.0, &cfg).is_err());
}

#[test]
fn ood_curve_spans_the_schedule() {
    let (bundle, data) = small_bundle(8, 4, 8, 6);
    let exact = SurrogateHandle::Exact(eit_solver(8, 4));
    let sigma = bundle.decode(&bundle.encode(&data.fields[0]).unwrap()).unwrap();
    let y = exact.eval(&sigma).unwrap();
    let curve = ood_diagnostic(&bundle, &exact, &sigma, &y, 7).unwrap();
    assert_eq!(curve.timesteps, bundle.schedule.substeps().to_vec());
    assert_eq!(curve.residuals.len(), 8);
    assert!(curve.timesteps.windows(2).all(|w| w[0] > w[1]));
    assert_eq!(curve.clean_residual, 0.0);
    assert!(curve.residuals.iter().all(|r| r.is_finite() && *r >= 0.0));
    assert_eq!(curve.endpoint_ratio(), curve.residuals[0] / curve.residuals[7]);
    // same seed, same curve
    assert_eq!(curve, ood_diagnostic(&bundle, &exact, &sigma, &y, 7).unwrap());
}

/// `f(z) = ½‖Az‖²` with its gradient and Hessian `AᵀA`.
struct Quadratic {
    a: Tensor,
    ata: Tensor,
}

impl Quadratic {
    fn new(seed: u64, n: usize) -> Self {
        let a = normal_tensor(&mut rng_for(seed, "quad"), &[n, n]);
        let g = Graph::new();
        let ata = g.constant(a.clone()).transpose().unwrap().matmul(g.constant(a.clone())).unwrap().value();
        Self { a, ata }
    }

    fn loss(&self, z: &Tensor) -> f64 {
        let g = Graph::new();
        let az = g.constant(self.a.clone()).matmul(g.constant(z.clone().reshape([z.len(), 1]).unwrap())).unwrap();
        0.5 * az.value().norm().powi(2)
    }

    fn grad(&self, z: &Tensor) -> Tensor {
        let g = Graph::new();
        let n = z.len();
        let v = g.constant(self.ata.clone()).matmul(g.constant(z.clone().reshape([n, 1]).unwrap())).unwrap();
        v.value().reshape([n]).unwrap()
    }

    fn sigma_max_sq(&self) -> f64 {
        let n = self.a.shape()[0];
        let m = DMatrix::from_row_slice(n, n, self.a.data());
        let s = m.singular_values().max();
        s * s
    }

    /// Plain gradient descent recorded as inversion diagnostics.
    fn descend(&self, z0: Tensor, lr: f64, steps: usize) -> TrajectoryDiagnostics {
        let mut d = TrajectoryDiagnostics {
            mode: InversionMode::GdOneOverL,
            lr,
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
        let mut z = z0;
        for _ in 0..steps {
            let g = self.grad(&z);
            d.loss.push(self.loss(&z));
            d.grad_norm.push(g.norm());
            d.grad_norm_exact.push(Some(g.norm()));
            d.mae.push(None);
            d.wallclock_ms.push(None);
            d.iterates.push(z.clone());
            z = z.axpy(-lr, &g).unwrap();
        }
        d
    }
}

#[test]
fn lipschitz_estimate_matches_the_top_singular_value() {
    for seed in 0..4 {
        let q = Quadratic::new(seed, 6);
        let points: Vec<Tensor> = (0..3).map(|i| normal_tensor(&mut rng_for(i, "pt"), &[6])).collect();
        let est = estimate_l(|z: &Tensor| Ok(q.grad(z)), &points, 500, 1e-4).unwrap();
        let truth = q.sigma_max_sq();
        assert!((est.value - truth).abs() < 0.01 * truth, "{} vs {truth}", est.value);
        assert_eq!(est.per_point.len(), 3);
    }
    let c = Tensor::from_vec(vec![1.0, -2.0, 0.5]);
    let lin = estimate_l(|_: &Tensor| Ok(c.clone()), &[Tensor::zeros([3])], 50, 1e-4).unwrap();
    assert!(lin.value < 1e-8 && lin.converged);
    assert!(estimate_l(|_: &Tensor| Ok(c.clone()), &[], 5, 1e-4).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lipschitz_estimate_is_non_negative(seed in 0u64..1000, n in 1usize..6, shift in -2.0f64..2.0) {
        let q = Quadratic::new(seed, n);
        // flip the sign of the curvature half the time
        let sign = if seed % 2 == 0 { 1.0 } else { -1.0 };
        let x = normal_tensor(&mut rng_for(seed, "x"), &[n]).map(|v| v + shift);
        let est = estimate_l(|z: &Tensor| Ok(q.grad(z).scaled(sign)), &[x], 30, 1e-4).unwrap();
        prop_assert!(est.value >= 0.0);
    }
}

#[test]
fn convergence_checks_pass_on_a_quadratic() {
    let q = Quadratic::new(11, 6);
    let l = q.sigma_max_sq();
    let diag = q.descend(normal_tensor(&mut rng_for(1, "z0"), &[6]), 1.0 / l, 200);
    let r = verify_convergence(&diag, l, 0.0, 1.0, 0.0).unwrap();
    assert_eq!(r.descent_satisfied, 199);
    assert!(r.all_pass(), "{r:?}");
    assert!(r.telescoped_lhs <= r.telescoped_rhs);

    let mut adam = diag.clone();
    adam.mode = InversionMode::Adam;
    assert!(verify_convergence(&adam, l, 0.0, 0.95, 0.1).is_err());
    let mut untracked = diag.clone();
    untracked.grad_norm_exact.iter_mut().for_each(|g| *g = None);
    assert!(verify_convergence(&untracked, l, 0.0, 0.95, 0.1).is_err());
}

#[test]
fn oversized_steps_violate_descent() {
    let q = Quadratic::new(12, 6);
    let l = q.sigma_max_sq();
    let diag = q.descend(normal_tensor(&mut rng_for(2, "z0"), &[6]), 10.0 / l, 50);
    let r = verify_convergence(&diag, l, 0.0, 0.95, 0.1).unwrap();
    assert!(r.descent_fraction < 1.0);
    assert!(!r.descent_pass);
}
