//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The process exits 0 after reporting so that a failing criterion is
//! recorded rather than hidden behind an aborted run. Set
//! `DILO_ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero exit.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::{blobs, eit_solver, small_bundle};
use dilo::diffusion::{coefficients_cd, ddim_step, sample_deterministic_value, tweedie, DiffusionSchedule};
use dilo::dilo::{
    dilo_invert, dps_baseline, estimate_l, ood_diagnostic, verify_convergence, InversionConfig, InversionMode,
    LatentObjective, TrajectoryDiagnostics, Tracking,
};
use dilo::io::{decode_tensor, emit_metrics, encode_tensor, read_tensor, write_tensor, RunConfig};
use dilo::networks::{SpectralArch, SpectralSurrogate, SurrogateHead};
use dilo::physics::{harmonic_extension, ns_forward, Forcing, Grid, NsConfig};
use dilo::pipeline::{build_setup, Setup};
use dilo::rng::{normal_tensor, normal_vec, rng_for};
use dilo::surrogate::{gap_estimate, SurrogateHandle};
use dilo::tensor::{finite_difference_gradient, relative_error, DType, Tensor};
use dilo::verify::oracle_suite;

const INSTANCES: u64 = 10;
const ITERATIONS: usize = 2000;
const LR: f64 = 5e-2;
const NOISE_GAMMA: f64 = 0.5;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn mae(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let (bundle, data) = small_bundle(8, 8, 5, 11);
    let exact = SurrogateHandle::Exact(eit_solver(8, 4));
    let mut arch = SpectralArch::new(8, 6, 3, 2, SurrogateHead::Boundary { patterns: 4 }).unwrap();
    arch.input_shift = 0.4;
    arch.input_scale = 0.3;
    let neural = SurrogateHandle::Neural(SpectralSurrogate::new(12, arch).unwrap());
    let y = exact.eval(&data.fields[5]).unwrap();
    let mut worst = [0.0f64; 2];
    let mut two_point = [0.0f64; 2];
    for (slot, handle) in [&neural, &exact].into_iter().enumerate() {
        let obj = LatentObjective::new(&bundle, handle, &y, None, 0.5).unwrap();
        for s in 0..3 {
            let z = normal_tensor(&mut rng_for(s, "acceptance-z"), &[8]);
            let g = obj.gradient(&z).unwrap();
            worst[slot] = worst[slot].max(relative_error(&g, &five_point(|x| obj.loss(x).unwrap(), &z)));
            let fd = finite_difference_gradient(|x| obj.loss(x), &z, 1e-6).unwrap();
            two_point[slot] = two_point[slot].max(relative_error(&g, &fd));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.iter().all(|&e| e < 1e-5) && secs < 60.0,
        format!(
            "rel err neural {:.2e}, exact {:.2e} (< 1e-5; 2-point stencil {:.2e}, {:.2e}), {secs:.1}s (< 60s)",
            worst[0], worst[1], two_point[0], two_point[1]
        ),
    )
}

/// Fourth-order central differences with step `ε^(1/5) / 2`.
fn five_point(f: impl Fn(&Tensor) -> f64, x: &Tensor) -> Tensor {
    let h = 0.5 * f64::EPSILON.powf(0.2);
    let at = |k: usize, s: f64| {
        let mut v = x.data().to_vec();
        v[k] += s;
        f(&Tensor::new(x.shape().to_vec(), v).unwrap())
    };
    let d = (0..x.len())
        .map(|k| (at(k, -2.0 * h) - 8.0 * at(k, -h) + 8.0 * at(k, h) - at(k, 2.0 * h)) / (12.0 * h))
        .collect();
    Tensor::new(x.shape().to_vec(), d).unwrap()
}

fn adjoint_oracle() -> Outcome {
    let start = Instant::now();
    let n = 16;
    let solver = eit_solver(n, 8);
    let fields = blobs(40, 2024, n).fields;
    let misfit = |s: &[f64], v_obs: &Tensor| 0.5 * solver.solve(s).unwrap().voltages.axpy(-1.0, v_obs).unwrap().norm().powi(2);
    let grad = |s: &[f64], v_obs: &Tensor| solver.adjoint_gradient(s, v_obs).unwrap().0;
    let (mut g_err, mut h_err, mut asym): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..20 {
        let sigma = fields[2 * i].data().to_vec();
        let v_obs = solver.solve(fields[2 * i + 1].data()).unwrap().voltages;
        let g = grad(&sigma, &v_obs);
        let h = 1e-6;
        let fd: Vec<f64> = (0..sigma.len())
            .map(|k| {
                let mut p = sigma.clone();
                p[k] += h;
                let mut m = sigma.clone();
                m[k] -= h;
                (misfit(&p, &v_obs) - misfit(&m, &v_obs)) / (2.0 * h)
            })
            .collect();
        g_err = g_err.max(rel(&g, &fd));

        let u = normal_vec(&mut rng_for(i as u64, "acceptance-u"), sigma.len());
        let w = normal_vec(&mut rng_for(i as u64, "acceptance-w"), sigma.len());
        let hu = solver.hvp(&sigma, &v_obs, &u).unwrap();
        let hw = solver.hvp(&sigma, &v_obs, &w).unwrap();
        let eps = 1e-5;
        let shift = |s: f64| sigma.iter().zip(&u).map(|(a, b)| a + s * b).collect::<Vec<_>>();
        let (gp, gm) = (grad(&shift(eps), &v_obs), grad(&shift(-eps), &v_obs));
        let fd_h: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        h_err = h_err.max(rel(&hu, &fd_h));
        let (a, b) = (dot(&w, &hu), dot(&u, &hw));
        asym = asym.max((a - b).abs() / a.abs().max(b.abs()));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        g_err < 1e-4 && h_err < 1e-3 && asym <= 1e-4 && secs < 120.0,
        format!("gradient {g_err:.2e} (< 1e-4), HVP {h_err:.2e} (< 1e-3), asymmetry {asym:.2e} (<= 1e-4), {secs:.1}s (< 120s)"),
    )
}

fn ddim_algebra(setup: &Setup) -> Outcome {
    let start = Instant::now();
    let schedule = &setup.bundle.schedule;
    let betas = schedule.betas();
    let alpha_bar: Vec<f64> = std::iter::once(1.0)
        .chain(betas.iter().scan(1.0, |acc, b| {
            *acc *= 1.0 - b;
            Some(*acc)
        }))
        .collect();

    let mut two_form: f64 = 0.0;
    for (k, (t, tp)) in schedule.step_pairs().into_iter().enumerate() {
        let z = normal_tensor(&mut rng_for(k as u64, "acceptance-zt"), &[16]);
        let e = normal_tensor(&mut rng_for(k as u64, "acceptance-e"), &[16]);
        let c = (alpha_bar[tp] / alpha_bar[t]).sqrt();
        let d = (1.0 - alpha_bar[tp]).sqrt() - c * (1.0 - alpha_bar[t]).sqrt();
        let expanded: Vec<f64> = z.data().iter().zip(e.data()).map(|(a, b)| c * a + d * b).collect();
        let step = ddim_step(&z, &e, t, tp, 0.0, None, schedule).unwrap();
        two_form = two_form.max(rel(step.data(), &expanded));
        let (lc, ld) = coefficients_cd(t, tp, schedule).unwrap();
        two_form = two_form.max(((lc - c) / c).abs()).max(((ld - d) / d).abs());
    }

    let mut round_trip: f64 = 0.0;
    for t in [1, 50, 250, 600, 1000] {
        let z0 = normal_tensor(&mut rng_for(t as u64, "acceptance-z0"), &[16]);
        let eps = normal_tensor(&mut rng_for(t as u64, "acceptance-eps"), &[16]);
        let ab = alpha_bar[t];
        let noised: Vec<f64> = z0.data().iter().zip(eps.data()).map(|(a, b)| ab.sqrt() * a + (1.0 - ab).sqrt() * b).collect();
        let back = tweedie(&Tensor::from_vec(noised), &eps, t, schedule).unwrap();
        round_trip = round_trip.max(back.axpy(-1.0, &z0).unwrap().max_abs());
    }

    let flat = DiffusionSchedule::from_betas(vec![0.02, 0.05, 0.0, 0.1], 4).unwrap();
    let (c, d) = coefficients_cd(3, 2, &flat).unwrap();
    let identity = c == 1.0 && d == 0.0;

    let z_t = normal_tensor(&mut rng_for(3, "acceptance-unroll"), &[4, setup.bundle.latent_dim()]);
    let first = bits(&sample_deterministic_value(&setup.bundle.score, &z_t, schedule).unwrap());
    let repeats = (0..4)
        .filter(|_| bits(&sample_deterministic_value(&setup.bundle.score, &z_t, schedule).unwrap()) == first)
        .count();

    let secs = start.elapsed().as_secs_f64();
    outcome(
        two_form <= 1e-12 && round_trip <= 1e-10 && identity && repeats == 4 && secs < 10.0,
        format!(
            "two-form {two_form:.1e} (<= 1e-12), Tweedie {round_trip:.1e} (<= 1e-10), identity (c, d) = ({c}, {d}), \
             {repeats}/4 unrolls bit-identical, {secs:.2}s (< 10s)"
        ),
    )
}

/// Runs gradient descent from a point reached by Adam and checks the
/// convergence statements with an independently recomputed descent count
/// and telescoped sum.
fn theorem_suite(setup: &Setup) -> Outcome {
    let start = Instant::now();
    let bundle = &setup.bundle;
    let exact = setup.exact.as_ref().unwrap();
    let neural = &setup.neural;
    let (sigma, y) = target(setup, 0);
    let obj = LatentObjective::new(bundle, neural, &y, None, 0.5).unwrap();
    let warm = InversionConfig {
        iterations: 200,
        lr: LR,
        seed: 100,
        ..setup.config.inversion()
    };
    let pre = dilo_invert(&y, bundle, neural, &warm, Tracking::default()).unwrap();
    let l0 = estimate_l(|z: &Tensor| obj.gradient(z), &pre.diagnostics.path_points(), 100, 1e-4).unwrap().value;

    let track = Tracking {
        exact: Some(exact),
        truth: Some(&sigma),
    };
    let gd = |lr: f64| {
        let cfg = InversionConfig {
            mode: InversionMode::GdOneOverL,
            lr,
            iterations: 500,
            grad_tol: 0.0,
            loss_tol: 0.0,
            ..warm
        };
        dilo_invert(&y, bundle, neural, &cfg, track).unwrap().diagnostics
    };
    let diag = gd(1.0 / l0);
    let points = diag.path_points();
    let l1 = estimate_l(|z: &Tensor| obj.gradient(z), &points, 100, 1e-4).unwrap().value;
    let l_hat = l0.max(l1);
    let mut probes = points;
    probes.push(diag.iterates.last().unwrap().clone());
    let delta = gap_estimate(&obj, exact, &probes).unwrap().grad_max;
    let rep = verify_convergence(&diag, l_hat, delta, 0.95, 0.1).unwrap();

    let (count, lhs, rhs) = recount(&diag, l_hat);
    let agree = count == rep.descent_satisfied && (lhs - rep.telescoped_lhs).abs() <= 1e-9 * lhs && (rhs - rep.telescoped_rhs).abs() <= 1e-9 * rhs;

    let control = gd(10.0 / l0);
    let neg = verify_convergence(&control, l_hat, delta, 0.95, 0.1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        rep.all_pass() && agree && !neg.descent_pass && secs < 600.0,
        format!(
            "L̂ {l_hat:.1}, δ̂ {delta:.3e}; descent {}/{}, telescoped {:.4e} <= {:.4e}, stationarity {:.3e} <= {:.3e}; \
             recount agrees {agree}; control at 10/L̂ descent {:.3} (< 0.95); {secs:.0}s (< 600s)",
            rep.descent_satisfied,
            rep.descent_total,
            rep.telescoped_lhs,
            rep.telescoped_rhs,
            rep.stationarity_lhs,
            rep.stationarity_rhs,
            neg.descent_fraction,
        ),
    )
}

fn recount(diag: &TrajectoryDiagnostics, l_hat: f64) -> (usize, f64, f64) {
    let (loss, g) = (&diag.loss, &diag.grad_norm);
    let mut count = 0;
    let mut lhs = 0.0;
    for k in 0..loss.len() - 1 {
        if loss[k] - loss[k + 1] >= g[k] * g[k] / (2.0 * l_hat) {
            count += 1;
        }
        lhs += g[k] * g[k];
    }
    let min = loss.iter().copied().fold(f64::INFINITY, f64::min);
    (count, lhs, 2.0 * l_hat * (loss[0] - min))
}

/// Decoder-reachable target for instance `i` and its exact observation.
fn target(setup: &Setup, i: u64) -> (Tensor, Tensor) {
    let b = &setup.bundle;
    let d = b.latent_dim();
    let z_star = normal_tensor(&mut rng_for(i, "target"), &[1, d]);
    let z0 = sample_deterministic_value(&b.score, &z_star, &b.schedule).unwrap();
    let sigma = b.decode(&z0.reshape([d]).unwrap()).unwrap();
    let y = setup.exact.as_ref().unwrap().eval(&sigma).unwrap();
    (sigma, y)
}

struct Instance {
    ratio: f64,
    mae: f64,
    mean_mae: f64,
    noisy_mae: f64,
    dilo_loss: f64,
    dps_loss: f64,
    ood_t: f64,
    ood_0: f64,
}

fn run_instances(setup: &Setup) -> (Vec<Instance>, f64) {
    let start = Instant::now();
    let exact = setup.exact.as_ref().unwrap();
    let mean = setup.dataset.mean_field().unwrap();
    let out = (0..INSTANCES)
        .map(|i| {
            let (sigma, y) = target(setup, i);
            let cfg = InversionConfig {
                iterations: ITERATIONS,
                lr: LR,
                seed: 100 + i,
                ..setup.config.inversion()
            };
            let clean = dilo_invert(&y, &setup.bundle, exact, &cfg, Tracking::default()).unwrap();
            let noisy_cfg = InversionConfig {
                noise_gamma: NOISE_GAMMA,
                ..cfg
            };
            let noisy = dilo_invert(&y, &setup.bundle, exact, &noisy_cfg, Tracking::default()).unwrap();
            let dps = dps_baseline(&y, &setup.bundle, exact, setup.config.invert.dps_gamma, &cfg).unwrap();
            let ood = ood_diagnostic(&setup.bundle, &setup.neural, &sigma, &y, i).unwrap();
            let d = &clean.diagnostics;
            let inst = Instance {
                ratio: d.best_loss() / d.loss[0],
                mae: mae(&clean.field, &sigma),
                mean_mae: mae(&mean, &sigma),
                noisy_mae: mae(&noisy.field, &sigma),
                dilo_loss: d.best_loss(),
                dps_loss: dps.final_loss,
                ood_t: ood.residuals[0],
                ood_0: *ood.residuals.last().unwrap(),
            };
            println!(
                "  instance {i}: loss ratio {:.2e}, MAE {:.4} (mean predictor {:.4}), noisy MAE {:.4}, \
                 loss DiLO {:.3e} vs DPS {:.3e}, OOD residual T {:.3e} vs 0 {:.3e}",
                inst.ratio, inst.mae, inst.mean_mae, inst.noisy_mae, inst.dilo_loss, inst.dps_loss, inst.ood_t, inst.ood_0
            );
            inst
        })
        .collect();
    (out, start.elapsed().as_secs_f64())
}

fn reconstruction(runs: &[Instance], secs: f64) -> Outcome {
    let worst = runs.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let beaten = runs.iter().filter(|r| r.mae < r.mean_mae).count();
    let mean = runs.iter().map(|r| r.mae).sum::<f64>() / runs.len() as f64;
    outcome(
        worst < 1e-3 && beaten == runs.len() && secs < 1800.0,
        format!(
            "worst loss ratio {worst:.2e} (< 1e-3), {beaten}/{} below mean-predictor MAE, mean MAE {mean:.4}, {secs:.0}s (< 1800s)",
            runs.len()
        ),
    )
}

fn noise_robustness(runs: &[Instance]) -> Outcome {
    let clean = runs.iter().map(|r| r.mae).sum::<f64>() / runs.len() as f64;
    let noisy = runs.iter().map(|r| r.noisy_mae).sum::<f64>() / runs.len() as f64;
    let factor = noisy / clean;
    outcome(
        factor <= 3.0,
        format!("mean MAE clean {clean:.4}, noisy {noisy:.4}, degradation factor {factor:.2} (<= 3)"),
    )
}

fn ordering(runs: &[Instance]) -> Outcome {
    let dps = runs.iter().filter(|r| r.dilo_loss <= r.dps_loss).count();
    let ood = runs.iter().filter(|r| r.ood_t > r.ood_0).count();
    outcome(
        dps == runs.len() && ood == runs.len(),
        format!("DiLO loss <= DPS loss on {dps}/{n}, OOD residual(T) > residual(0) on {ood}/{n}", n = runs.len()),
    )
}

fn physics_invariants() -> Outcome {
    let start = Instant::now();
    let solver = eit_solver(16, 8);
    let mut homogeneity: f64 = 0.0;
    for (i, sigma) in blobs(4, 77, 16).fields.iter().enumerate() {
        let c = [0.25, 2.0, 9.0, 40.0][i];
        let base = solver.solve(sigma.data()).unwrap().voltages;
        let scaled = solver.solve(sigma.scaled(c).data()).unwrap().voltages;
        homogeneity = homogeneity.max(rel(scaled.scaled(c).data(), base.data()));
    }

    // cos(2x) sin(y) is an eigenfunction whose stream function is parallel
    // to it, so advection vanishes and only viscous decay remains
    let n = 32;
    let cfg = NsConfig {
        n,
        t_final: 1.0,
        dt: 1e-3,
        forcing: Forcing::None,
        ..NsConfig::default()
    };
    let node = |idx: usize| (2.0 * PI * (idx % n) as f64 / n as f64, 2.0 * PI * (idx / n) as f64 / n as f64);
    let w0: Vec<f64> = (0..n * n).map(|k| (2.0 * node(k).0).cos() * node(k).1.sin()).collect();
    let factor = (-cfg.nu * 5.0 * cfg.t_final).exp();
    let decay = ns_forward(&w0, &cfg)
        .unwrap()
        .iter()
        .zip(&w0)
        .map(|(a, b)| (a - factor * b).abs())
        .fold(0.0, f64::max);

    let flow = NsConfig {
        n,
        t_final: 1.0,
        ..NsConfig::default()
    };
    let r = normal_vec(&mut rng_for(5, "acceptance-modes"), 6);
    let w1: Vec<f64> = (0..n * n)
        .map(|k| {
            let (x, y) = node(k);
            0.3 + r[0] * (x + r[1]).sin() + r[2] * (2.0 * y + r[3]).cos() + 0.5 * r[4] * (x + y + r[5]).sin()
        })
        .collect();
    let avg = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    let drift = (avg(&ns_forward(&w1, &flow).unwrap()) - avg(&w1)).abs();

    let mut violation: f64 = 0.0;
    for b in 0..100u64 {
        let grid = Grid::new(3 + (b as usize % 14)).unwrap();
        let g = normal_vec(&mut rng_for(b, "acceptance-boundary"), grid.n_boundary());
        let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        for u in harmonic_extension(&g, grid).unwrap() {
            violation = violation.max(lo - u).max(u - hi);
        }
    }

    let secs = start.elapsed().as_secs_f64();
    outcome(
        homogeneity <= 1e-10 && decay <= 1e-8 && drift <= 1e-12 && violation <= 1e-12 && secs < 120.0,
        format!(
            "homogeneity {homogeneity:.1e} (<= 1e-10), decay {decay:.1e} (<= 1e-8), mean drift {drift:.1e} (<= 1e-12), \
             max-principle excess {:.1e} on 100 boundaries, {secs:.1}s (< 120s)",
            violation.max(0.0)
        ),
    )
}

fn infrastructure(setup: &Setup) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut round_trips = 0;
    for s in 0..40u64 {
        let shape: Vec<usize> = (0..s % 4).map(|k| 1 + ((s + k) % 5) as usize).collect();
        let len = shape.iter().product();
        let mut t = Tensor::new(shape.clone(), normal_vec(&mut rng_for(s, "acceptance-file"), len)).unwrap();
        if s % 2 == 1 {
            t = t.to_dtype(DType::F32);
        }
        let bytes = encode_tensor(&t).unwrap();
        let path = dir.path().join(format!("{s}.tnsr"));
        write_tensor(&path, &t).unwrap();
        let (a, b) = (decode_tensor(&bytes).unwrap(), read_tensor(&path).unwrap());
        if [&a, &b].iter().all(|x| x.shape() == t.shape() && x.dtype() == t.dtype() && bits(x) == bits(&t)) {
            round_trips += 1;
        }
    }

    let checks = oracle_suite(0).unwrap();
    let verified = checks.iter().filter(|c| c.passed).count();

    let (sigma, y) = target(setup, 3);
    let cfg = InversionConfig {
        iterations: 60,
        lr: LR,
        seed: 8,
        ..setup.config.inversion()
    };
    let track = Tracking {
        exact: setup.exact.as_ref(),
        truth: Some(&sigma),
    };
    let files: Vec<Vec<u8>> = (0..2)
        .map(|k| {
            let r = dilo_invert(&y, &setup.bundle, &setup.neural, &cfg, track).unwrap();
            let path = dir.path().join(format!("metrics-{k}.csv"));
            emit_metrics(&path, &r.diagnostics).unwrap();
            std::fs::read(path).unwrap()
        })
        .collect();
    let identical = files[0] == files[1];

    outcome(
        round_trips == 40 && verified == checks.len() && identical,
        format!(
            "{round_trips}/40 tensor files bit-exact, verify {verified}/{} checks, repeated metrics byte-identical {identical}",
            checks.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |id: usize, name: &'static str, o: Outcome| {
        println!("{} criterion {id} ({name}): {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };

    report(1, "gradient fidelity", gradient_fidelity());
    report(2, "adjoint oracle", adjoint_oracle());
    report(8, "physics invariants", physics_invariants());

    let start = Instant::now();
    let setup = build_setup(&RunConfig::default()).unwrap();
    println!("  trained the default setup in {:.0}s", start.elapsed().as_secs_f64());

    report(3, "DDIM algebra", ddim_algebra(&setup));
    report(4, "convergence suite", theorem_suite(&setup));
    let (runs, secs) = run_instances(&setup);
    report(5, "end-to-end reconstruction", reconstruction(&runs, secs));
    report(6, "noise robustness", noise_robustness(&runs));
    report(7, "comparative ordering", ordering(&runs));
    report(9, "infrastructure", infrastructure(&setup));

    results.sort_by_key(|r| r.0);
    let failed: Vec<String> = results.iter().filter(|r| !r.2.passed).map(|r| format!("{} ({})", r.0, r.1)).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("acceptance: failing criteria: {}", failed.join(", "));
        if std::env::var("DILO_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
