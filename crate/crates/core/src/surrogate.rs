//! The differentiable forward operator used inside the inversion loop:
//! either a trained spectral network or the exact EIT solver with its
//! adjoint as the backward rule.

use std::cell::RefCell;
use std::rc::Rc;

use crate::dilo::LatentObjective;
use crate::error::{Error, Result};
use crate::networks::{fit, SpectralArch, SpectralSurrogate, TrainConfig};
use crate::physics::{EitSolution, EitSolver};
use crate::tensor::{relative_error, CustomOp, Graph, Tensor, Var};

/// Exact EIT forward map as a graph operation. The backward rule is one
/// adjoint solve per pattern against the cached factorization.
pub struct EitForwardOp {
    solver: EitSolver,
    cache: RefCell<Option<(Vec<f64>, EitSolution)>>,
}

impl EitForwardOp {
    pub fn new(solver: EitSolver) -> Self {
        Self {
            solver,
            cache: RefCell::new(None),
        }
    }

    fn with_solution<T>(&self, sigma: &[f64], f: impl FnOnce(&EitSolution) -> Result<T>) -> Result<T> {
        let mut cache = self.cache.borrow_mut();
        let hit = matches!(&*cache, Some((s, _)) if s.as_slice() == sigma);
        if !hit {
            *cache = Some((sigma.to_vec(), self.solver.solve(sigma)?));
        }
        f(&cache.as_ref().expect("filled above").1)
    }
}

impl CustomOp for EitForwardOp {
    fn name(&self) -> &str {
        "eit_forward"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        self.with_solution(inputs[0].data(), |s| Ok(s.voltages.clone()))
    }

    fn vjp(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Result<Vec<Tensor>> {
        let g = self.with_solution(inputs[0].data(), |s| self.solver.vjp(s, grad))?;
        Ok(vec![Tensor::new(inputs[0].shape().to_vec(), g)?])
    }
}

/// `𝐹̃`: neural or exact, behind one interface.
#[derive(Debug, Clone)]
pub enum SurrogateHandle {
    Neural(SpectralSurrogate),
    Exact(EitSolver),
}

impl SurrogateHandle {
    pub fn is_exact(&self) -> bool {
        matches!(self, SurrogateHandle::Exact(_))
    }

    pub fn input_len(&self) -> usize {
        match self {
            SurrogateHandle::Neural(s) => s.arch.grid_n * s.arch.grid_n,
            SurrogateHandle::Exact(e) => e.grid().len(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            SurrogateHandle::Neural(s) => s.arch.output_shape(),
            SurrogateHandle::Exact(e) => e.observation_shape().to_vec(),
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape != [self.input_len()] {
            return Err(Error::Shape {
                op: "surrogate input",
                lhs: vec![self.input_len()],
                rhs: shape.to_vec(),
            });
        }
        Ok(())
    }

    /// Places `𝐹̃(a)` on the graph of `a` (a 1-D field).
    pub fn forward<'g>(&self, a: Var<'g>) -> Result<Var<'g>> {
        self.check_input(&a.shape())?;
        match self {
            SurrogateHandle::Neural(s) => {
                let p = s.bind(a.graph(), false);
                s.forward(&p, a)
            }
            SurrogateHandle::Exact(e) => a.graph().custom(Rc::new(EitForwardOp::new(e.clone())), &[a]),
        }
    }

    pub fn eval(&self, a: &Tensor) -> Result<Tensor> {
        self.check_input(a.shape())?;
        match self {
            SurrogateHandle::Neural(s) => s.eval(a),
            SurrogateHandle::Exact(e) => Ok(e.solve(a.data())?.voltages),
        }
    }

    /// Gradient of `⟨cotangent, 𝐹̃(a)⟩` with respect to `a`.
    pub fn vjp(&self, a: &Tensor, cotangent: &Tensor) -> Result<Tensor> {
        self.check_input(a.shape())?;
        match self {
            SurrogateHandle::Neural(_) => {
                let g = Graph::new();
                let av = g.leaf(a.clone());
                let y = self.forward(av)?;
                let c = g.constant(cotangent.clone().reshape(y.shape())?);
                let grads = g.backward(y.mul(c)?.sum()?)?;
                Ok(grads.wrt(av))
            }
            SurrogateHandle::Exact(e) => {
                let sol = e.solve(a.data())?;
                Tensor::new(a.shape().to_vec(), e.vjp(&sol, cotangent)?)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateTraining {
    pub surrogate: SpectralSurrogate,
    /// Per-epoch mean normalized training loss.
    pub losses: Vec<f64>,
    /// Mean relative ℓ₂ error on the held-out pairs (NaN if none).
    pub heldout_rel_error: f64,
}

fn population_stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits the spectral surrogate to `(a, y)` pairs by mean squared error on
/// targets normalized by their standard deviation. The last `holdout` pairs
/// are excluded from training and scored afterwards.
pub fn train_surrogate(
    pairs: &[(Tensor, Tensor)],
    arch: SpectralArch,
    cfg: &TrainConfig,
    holdout: usize,
) -> Result<SurrogateTraining> {
    if pairs.len() <= holdout {
        return Err(Error::invalid(format!(
            "need more than {holdout} pairs to train with that holdout, got {}",
            pairs.len()
        )));
    }
    let (train, test) = pairs.split_at(pairs.len() - holdout);
    let (a_mean, a_std) = population_stats(train.iter().flat_map(|(a, _)| a.data().iter().copied()));
    let (_, y_std) = population_stats(train.iter().flat_map(|(_, y)| y.data().iter().copied()));
    let mut surrogate = SpectralSurrogate::new(cfg.seed, arch)?;
    surrogate.set_normalization(a_mean, if a_std > 0.0 { a_std } else { 1.0 }, if y_std > 0.0 { y_std } else { 1.0 })?;
    let out_len: usize = surrogate.arch.output_shape().iter().product();
    let norm = 1.0 / (surrogate.arch.output_scale.powi(2) * out_len as f64);

    let model = surrogate.clone();
    let mut params = surrogate.params.clone();
    let losses = fit(&mut params, train.len(), cfg, "train-surrogate", |g, vars, idx, _| {
        let mut total: Option<Var<'_>> = None;
        for &i in idx {
            let (a, y) = &train[i];
            let pred = model.forward(vars, g.constant(a.clone()))?;
            let target = g.constant(y.clone().reshape(pred.shape())?);
            let l = pred.squared_distance(target)?;
            total = Some(match total {
                Some(t) => t.add(l)?,
                None => l,
            });
        }
        total.expect("non-empty batch").scale(norm / idx.len() as f64)
    })?;
    surrogate.params = params;

    let heldout_rel_error = if test.is_empty() {
        f64::NAN
    } else {
        let mut acc = 0.0;
        for (a, y) in test {
            acc += relative_error(&surrogate.eval(a)?, &y.clone().reshape(surrogate.arch.output_shape())?);
        }
        acc / test.len() as f64
    };
    Ok(SurrogateTraining {
        surrogate,
        losses,
        heldout_rel_error,
    })
}

/// Surrogate gap statistics over a probe set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStats {
    /// `max ‖∇_{z_T}ℒ_surr − ∇_{z_T}ℒ_exact‖`, the estimate `δ̂`.
    pub grad_max: f64,
    pub grad_mean: f64,
    /// `max ‖𝐹̃(a) − 𝐹(a)‖` at the decoded probes.
    pub value_max: f64,
    pub value_mean: f64,
}

/// Compares `objective` (built on the neural handle) against the same
/// objective with `exact` swapped in, at each latent probe `z_T`. Both
/// gradients go through the same deterministic unroll and decoder, so the
/// probed fields lie on the decoder manifold.
pub fn gap_estimate(objective: &LatentObjective<'_>, exact: &SurrogateHandle, probes: &[Tensor]) -> Result<GapStats> {
    if probes.is_empty() {
        return Err(Error::invalid("gap estimate needs at least one probe"));
    }
    let reference = objective.with_surrogate(exact);
    let mut s = GapStats {
        grad_max: 0.0,
        grad_mean: 0.0,
        value_max: 0.0,
        value_mean: 0.0,
    };
    for z in probes {
        let surr = objective.evaluate(z, true)?;
        let g_exact = reference.gradient(z)?;
        let dg = surr.grad.expect("requested").axpy(-1.0, &g_exact)?.norm();
        let dv = objective.surrogate.eval(&surr.field)?.axpy(-1.0, &exact.eval(&surr.field)?)?.norm();
        s.grad_max = s.grad_max.max(dg);
        s.value_max = s.value_max.max(dv);
        s.grad_mean += dg / probes.len() as f64;
        s.value_mean += dv / probes.len() as f64;
    }
    Ok(s)
}
