use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dilo::dilo::{dilo_invert, dps_baseline, ood_diagnostic, InversionConfig, Tracking};
use dilo::io::{
    emit_metrics, load_autoencoder, load_bundle, read_tensor, save_component, write_atomic, write_tensor, Component,
    Problem, RunConfig,
};
use dilo::networks::relative_reconstruction_errors;
use dilo::physics::{pair_ns, Dataset};
use dilo::pipeline::{
    dataset_kind, exact_handle, generate_dataset, ns_config, observations, train_ae_stage, train_ldm_stage,
    train_surrogate_stage,
};
use dilo::surrogate::SurrogateHandle;
use dilo::verify::oracle_suite;
use dilo::Tensor;
use serde_json::{json, Value};

/// Diffusion latent optimization for PDE-constrained inverse problems.
#[derive(Parser)]
#[command(name = "dilo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory holding data, checkpoints and results.
    #[arg(long, default_value = "dilo-run")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training fields and their exact observations.
    GenData(Common),
    /// Train the autoencoder.
    TrainAe(Common),
    /// Train the latent noise predictor.
    TrainLdm(Common),
    /// Train the neural forward surrogate.
    TrainSurrogate(Common),
    /// Invert observations by optimizing the initial latent noise.
    Invert(InvertArgs),
    /// Guided reverse sampling baseline.
    DpsBaseline(InvertArgs),
    /// Surrogate residual on intermediate denoised estimates.
    OodDiag(InvertArgs),
    /// Oracle self checks; needs no trained artifacts.
    Verify(Common),
    /// Collect every summary in the run directory.
    Report(Common),
}

#[derive(Args, Clone)]
struct InvertArgs {
    #[command(flatten)]
    common: Common,
    /// Use the exact adjoint forward model instead of the neural surrogate.
    #[arg(long)]
    exact: bool,
    /// Number of consecutive dataset samples to process, one seed each.
    #[arg(long, default_value_t = 1)]
    instances: usize,
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn data_dir(out: &Path) -> PathBuf {
    out.join("data")
}

fn ckpt_dir(out: &Path) -> PathBuf {
    out.join("checkpoints")
}

fn stack(rows: &[Tensor]) -> Result<Tensor> {
    let first = rows.first().context("nothing to stack")?;
    let mut shape = vec![rows.len()];
    shape.extend_from_slice(first.shape());
    let data = rows.iter().flat_map(|r| r.data().iter().copied()).collect();
    Ok(Tensor::new(shape, data)?)
}

fn unstack(t: &Tensor) -> Result<Vec<Tensor>> {
    let (&count, row) = t.shape().split_first().context("stacked tensor has no leading axis")?;
    let width: usize = row.iter().product();
    (0..count)
        .map(|i| Ok(Tensor::new(row.to_vec(), t.data()[i * width..(i + 1) * width].to_vec())?))
        .collect()
}

fn load_data(cfg: &RunConfig, out: &Path) -> Result<(Dataset, Vec<Tensor>)> {
    let dir = data_dir(out);
    let fields = read_tensor(dir.join("fields.tnsr")).context("dataset missing; run gen-data first")?;
    let obs = read_tensor(dir.join("observations.tnsr"))?;
    let dataset = Dataset {
        kind: dataset_kind(cfg),
        grid_n: cfg.physics.grid_n,
        fields: unstack(&fields)?,
    };
    if dataset.len() != cfg.physics.samples || dataset.fields[0].len() != cfg.physics.grid_n.pow(2) {
        bail!("dataset in {} does not match the configuration", dir.display());
    }
    Ok((dataset, unstack(&obs)?))
}

fn write_summary(out: &Path, name: &str, summary: &Value) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let text = serde_json::to_string_pretty(summary)? + "\n";
    write_atomic(&out.join(format!("{name}.json")), text.as_bytes())?;
    println!("{}", serde_json::to_string(summary)?);
    Ok(())
}

fn last(v: &[f64]) -> f64 {
    v.last().copied().unwrap_or(f64::NAN)
}

fn gen_data(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let data = generate_dataset(&cfg)?;
    let obs = observations(&cfg, &data, cfg.surrogate.pairs.max(cfg.invert.sample + 1))?;
    let dir = data_dir(&c.out);
    std::fs::create_dir_all(&dir)?;
    write_tensor(dir.join("fields.tnsr"), &stack(&data.fields)?)?;
    write_tensor(dir.join("observations.tnsr"), &stack(&obs)?)?;
    cfg.save(c.out.join("config.toml"))?;
    write_summary(
        &c.out,
        "gen-data",
        &json!({
            "command": "gen-data",
            "problem": cfg.physics.problem,
            "seed": cfg.seed,
            "samples": data.len(),
            "grid_n": cfg.physics.grid_n,
            "observations": obs.len(),
            "observation_shape": obs[0].shape(),
        }),
    )
}

fn train_ae(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let (data, _) = load_data(&cfg, &c.out)?;
    let start = Instant::now();
    let (ae, losses) = train_ae_stage(&cfg, &data)?;
    let errs = relative_reconstruction_errors(&ae, &data.fields)?;
    save_component(ckpt_dir(&c.out), Component::Autoencoder(&ae))?;
    write_summary(
        &c.out,
        "train-ae",
        &json!({
            "command": "train-ae",
            "seed": cfg.seed,
            "epochs": losses.len(),
            "final_loss": last(&losses),
            "mean_relative_reconstruction_error": errs.iter().sum::<f64>() / errs.len() as f64,
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )
}

fn train_ldm(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let (data, _) = load_data(&cfg, &c.out)?;
    let ae = load_autoencoder(ckpt_dir(&c.out)).context("autoencoder missing; run train-ae first")?;
    let start = Instant::now();
    let (score, losses) = train_ldm_stage(&cfg, &ae, &data)?;
    save_component(ckpt_dir(&c.out), Component::Score(&score))?;
    save_component(ckpt_dir(&c.out), Component::Schedule(&cfg.schedule()?))?;
    write_summary(
        &c.out,
        "train-ldm",
        &json!({
            "command": "train-ldm",
            "seed": cfg.seed,
            "epochs": losses.len(),
            "final_loss": last(&losses),
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )
}

fn train_surrogate(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let (data, obs) = load_data(&cfg, &c.out)?;
    let start = Instant::now();
    let trained = train_surrogate_stage(&cfg, &data, &obs)?;
    save_component(ckpt_dir(&c.out), Component::Surrogate(&trained.surrogate))?;
    write_summary(
        &c.out,
        "train-surrogate",
        &json!({
            "command": "train-surrogate",
            "seed": cfg.seed,
            "epochs": trained.losses.len(),
            "final_loss": last(&trained.losses),
            "heldout_relative_error": trained.heldout_rel_error,
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )
}

/// Forward model chosen for the online phase.
fn forward_model(cfg: &RunConfig, out: &Path, exact: bool) -> Result<SurrogateHandle> {
    if exact {
        return exact_handle(cfg)?.context("--exact needs the EIT problem");
    }
    let bundle = load_bundle(ckpt_dir(out))?;
    let s = bundle.surrogate.context("surrogate missing; run train-surrogate first")?;
    Ok(SurrogateHandle::Neural(s))
}

fn threads() -> Result<usize> {
    match std::env::var("DILO_THREADS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => bail!("DILO_THREADS must be a positive integer, got `{v}`"),
        },
        Err(_) => Ok(1),
    }
}

/// Runs `job(i)` for every instance on at most `DILO_THREADS` threads,
/// returning results in instance order.
fn run_suite<T: Send>(count: usize, job: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let workers = threads()?.min(count.max(1));
    let mut slots: Vec<Option<Result<T>>> = (0..count).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = slots.chunks_mut(count.div_ceil(workers).max(1)).enumerate().collect();
        let per = count.div_ceil(workers).max(1);
        for (w, chunk) in chunks {
            let job = &job;
            s.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(job(w * per + j));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

/// Truth field and observation for one instance.
fn instance(cfg: &RunConfig, data: &Dataset, obs: &[Tensor], i: usize) -> Result<(usize, Tensor, Tensor)> {
    let sample = cfg.invert.sample + i;
    if sample >= data.len() {
        bail!("instance {i} needs sample {sample}, dataset has {}", data.len());
    }
    let y = match obs.get(sample) {
        Some(y) => y.clone(),
        None => observations(cfg, &Dataset { fields: vec![data.fields[sample].clone()], ..data.clone() }, 1)?.remove(0),
    };
    Ok((sample, data.fields[sample].clone(), y))
}

fn instance_config(cfg: &RunConfig, i: usize) -> InversionConfig {
    InversionConfig {
        seed: cfg.seed + i as u64,
        ..cfg.inversion()
    }
}

fn mae(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn invert(a: &InvertArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let out = &a.common.out;
    let (data, obs) = load_data(&cfg, out)?;
    let bundle = load_bundle(ckpt_dir(out))?;
    let handle = forward_model(&cfg, out, a.exact)?;
    let exact = exact_handle(&cfg)?;
    let results = run_suite(a.instances, |i| {
        let (sample, truth, y) = instance(&cfg, &data, &obs, i)?;
        let ic = instance_config(&cfg, i);
        let track = Tracking {
            exact: exact.as_ref(),
            truth: Some(&truth),
        };
        let r = dilo_invert(&y, &bundle, &handle, &ic, track)?;
        let dir = out.join("invert").join(format!("seed-{}", ic.seed));
        std::fs::create_dir_all(&dir)?;
        emit_metrics(dir.join("metrics.csv"), &r.diagnostics)?;
        write_tensor(dir.join("field.tnsr"), &r.field)?;
        write_tensor(dir.join("z_t.tnsr"), &r.z_t)?;
        let d = &r.diagnostics;
        Ok(json!({
            "seed": ic.seed,
            "sample": sample,
            "iterations": d.len(),
            "early_stop": d.early_stop,
            "initial_loss": d.loss[0],
            "best_loss": d.best_loss(),
            "best_iter": d.best_iter,
            "loss_ratio": d.best_loss() / d.loss[0],
            "mae": mae(&r.field, &truth),
        }))
    })?;
    write_summary(
        out,
        "invert",
        &json!({
            "command": "invert",
            "forward_model": if handle.is_exact() { "exact" } else { "neural" },
            "mode": cfg.invert.mode.to_string(),
            "lr": cfg.invert.lr,
            "noise_gamma": cfg.invert.noise_gamma,
            "instances": results,
        }),
    )
}

fn dps(a: &InvertArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let out = &a.common.out;
    let (data, obs) = load_data(&cfg, out)?;
    let bundle = load_bundle(ckpt_dir(out))?;
    let handle = forward_model(&cfg, out, a.exact)?;
    let results = run_suite(a.instances, |i| {
        let (sample, truth, y) = instance(&cfg, &data, &obs, i)?;
        let ic = instance_config(&cfg, i);
        let r = dps_baseline(&y, &bundle, &handle, cfg.invert.dps_gamma, &ic)?;
        let dir = out.join("dps-baseline").join(format!("seed-{}", ic.seed));
        std::fs::create_dir_all(&dir)?;
        write_tensor(dir.join("field.tnsr"), &r.field)?;
        Ok(json!({
            "seed": ic.seed,
            "sample": sample,
            "final_loss": r.final_loss,
            "mae": mae(&r.field, &truth),
            "residuals": r.residuals,
        }))
    })?;
    write_summary(
        out,
        "dps-baseline",
        &json!({
            "command": "dps-baseline",
            "forward_model": if handle.is_exact() { "exact" } else { "neural" },
            "guidance_scale": cfg.invert.dps_gamma,
            "instances": results,
        }),
    )
}

fn ood(a: &InvertArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let out = &a.common.out;
    let (data, _) = load_data(&cfg, out)?;
    let bundle = load_bundle(ckpt_dir(out))?;
    let handle = forward_model(&cfg, out, a.exact)?;
    let results = run_suite(a.instances, |i| {
        let (sample, truth, _) = instance(&cfg, &data, &[], i)?;
        // a decoder-reachable field and its exact observation
        let sigma = bundle.decode(&bundle.encode(&truth)?)?;
        let y = match cfg.physics.problem {
            Problem::Eit => exact_handle(&cfg)?.context("EIT has an exact model")?.eval(&sigma)?,
            Problem::NavierStokes => {
                let single = Dataset { fields: vec![sigma.clone()], ..data.clone() };
                pair_ns(&single, &ns_config(&cfg))?.remove(0)
            }
        };
        let seed = cfg.seed + i as u64;
        let curve = ood_diagnostic(&bundle, &handle, &sigma, &y, seed)?;
        Ok(json!({
            "seed": seed,
            "sample": sample,
            "timesteps": curve.timesteps,
            "residuals": curve.residuals,
            "clean_residual": curve.clean_residual,
            "endpoint_ratio": curve.endpoint_ratio(),
        }))
    })?;
    write_summary(
        out,
        "ood-diag",
        &json!({
            "command": "ood-diag",
            "forward_model": if handle.is_exact() { "exact" } else { "neural" },
            "instances": results,
        }),
    )
}

fn verify(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let checks = oracle_suite(cfg.seed)?;
    for ch in &checks {
        eprintln!(
            "{} {}: {:.3e} (limit {:.1e})",
            if ch.passed { "PASS" } else { "FAIL" },
            ch.name,
            ch.measured,
            ch.threshold
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let rows: Vec<Value> = checks
        .iter()
        .map(|c| json!({ "name": c.name, "measured": c.measured, "threshold": c.threshold, "passed": c.passed }))
        .collect();
    write_summary(&c.out, "verify", &json!({ "command": "verify", "passed": failed.is_empty(), "checks": rows }))?;
    if !failed.is_empty() {
        bail!("{} oracle check(s) failed: {}", failed.len(), failed.join(", "));
    }
    Ok(())
}

const STAGES: [&str; 8] = [
    "gen-data",
    "train-ae",
    "train-ldm",
    "train-surrogate",
    "invert",
    "dps-baseline",
    "ood-diag",
    "verify",
];

fn report(c: &Common) -> Result<()> {
    let mut found = serde_json::Map::new();
    for stage in STAGES {
        let path = c.out.join(format!("{stage}.json"));
        if let Ok(text) = std::fs::read_to_string(&path) {
            let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            found.insert(stage.to_string(), v);
        }
    }
    if found.is_empty() {
        bail!("no summaries in {}", c.out.display());
    }
    for (stage, v) in &found {
        let line = match stage.as_str() {
            "invert" | "dps-baseline" | "ood-diag" => {
                let inst = v["instances"].as_array().map(Vec::len).unwrap_or(0);
                let key = match stage.as_str() {
                    "invert" => "mae",
                    "dps-baseline" => "final_loss",
                    _ => "endpoint_ratio",
                };
                let vals: Vec<f64> = v["instances"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|i| i[key].as_f64())
                    .collect();
                format!("{inst} instance(s), mean {key} {:.4e}", vals.iter().sum::<f64>() / vals.len().max(1) as f64)
            }
            "verify" => format!("passed = {}", v["passed"]),
            _ => match v.get("final_loss").and_then(Value::as_f64) {
                Some(l) => format!("final loss {l:.4e}"),
                None => format!("{} samples", v["samples"]),
            },
        };
        eprintln!("{stage:>16}: {line}");
    }
    write_summary(&c.out, "report", &Value::Object(found))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(c) => gen_data(c),
        Command::TrainAe(c) => train_ae(c),
        Command::TrainLdm(c) => train_ldm(c),
        Command::TrainSurrogate(c) => train_surrogate(c),
        Command::Invert(a) => invert(a),
        Command::DpsBaseline(a) => dps(a),
        Command::OodDiag(a) => ood(a),
        Command::Verify(c) => verify(c),
        Command::Report(c) => report(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
