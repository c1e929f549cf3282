use super::invert::{InversionMode, TrajectoryDiagnostics};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, rng_for};
use crate::tensor::{hvp_finite_difference, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    /// Largest dominant-eigenvalue magnitude over the probe points.
    pub value: f64,
    pub per_point: Vec<f64>,
    /// False when power iteration stalled at some point before reaching
    /// relative change `1e-3`; `value` is then the best estimate seen.
    pub converged: bool,
}

/// Dominant Hessian eigenvalue magnitude by power iteration on the
/// finite-difference Hessian-vector product of `grad`, maximized over
/// `points`.
pub fn estimate_l<G>(mut grad: G, points: &[Tensor], iters: usize, h: f64) -> Result<LipschitzEstimate>
where
    G: FnMut(&Tensor) -> Result<Tensor>,
{
    if points.is_empty() {
        return Err(Error::invalid("estimate_l needs at least one probe point"));
    }
    let mut est = LipschitzEstimate {
        value: 0.0,
        per_point: Vec::with_capacity(points.len()),
        converged: true,
    };
    for (p, x) in points.iter().enumerate() {
        let mut v = normal_tensor(&mut rng_for(p as u64, "estimate-l"), x.shape());
        v = v.scaled(1.0 / v.norm());
        let mut lambda = 0.0;
        let mut done = false;
        for _ in 0..iters.max(1) {
            let hv = hvp_finite_difference(&mut grad, x, &v, h)?;
            let n = hv.norm();
            if !n.is_finite() {
                return Err(Error::NonFinite {
                    what: "Hessian-vector product",
                    index: p,
                });
            }
            if n == 0.0 {
                lambda = 0.0;
                done = true;
                break;
            }
            let change = (n - lambda).abs();
            lambda = n;
            v = hv.scaled(1.0 / n);
            if change <= 1e-3 * n {
                done = true;
                break;
            }
        }
        est.converged &= done;
        est.per_point.push(lambda);
        est.value = est.value.max(lambda);
    }
    Ok(est)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub l_hat: f64,
    pub delta_hat: f64,
    /// Steps satisfying `ℒ(k+1) ≤ ℒ(k) − ‖∇ℒ(k)‖²/(2L̂)`.
    pub descent_satisfied: usize,
    pub descent_total: usize,
    pub descent_fraction: f64,
    pub descent_pass: bool,
    /// `Σ_k ‖∇ℒ(k)‖²` over the steps taken.
    pub telescoped_lhs: f64,
    /// `2L̂·(ℒ⁰ − ℒ_min)`.
    pub telescoped_rhs: f64,
    pub telescoped_pass: bool,
    /// Final `‖∇ℒ_exact‖`.
    pub stationarity_lhs: f64,
    /// `(δ̂ + ‖∇ℒ_surr‖)·(1 + slack)` at the final iterate.
    pub stationarity_rhs: f64,
    pub stationarity_pass: bool,
}

impl ConvergenceReport {
    pub fn all_pass(&self) -> bool {
        self.descent_pass && self.telescoped_pass && self.stationarity_pass
    }
}

/// Checks the descent inequality, the telescoped gradient bound and
/// δ-stationarity on a gradient-descent trajectory. `min_descent_fraction`
/// is the share of steps that must satisfy the descent inequality and
/// `slack` the relative allowance on the stationarity bound.
pub fn verify_convergence(
    diag: &TrajectoryDiagnostics,
    l_hat: f64,
    delta_hat: f64,
    min_descent_fraction: f64,
    slack: f64,
) -> Result<ConvergenceReport> {
    if diag.mode != InversionMode::GdOneOverL {
        return Err(Error::invalid(format!(
            "convergence checks apply to gradient descent runs, got mode {}",
            diag.mode
        )));
    }
    if diag.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    if !(l_hat > 0.0 && l_hat.is_finite()) || !(delta_hat >= 0.0) {
        return Err(Error::invalid(format!("need L̂ > 0 and δ̂ >= 0, got {l_hat} and {delta_hat}")));
    }
    let steps = diag.len() - 1;
    let descent_satisfied = (0..steps)
        .filter(|&k| diag.loss[k + 1] <= diag.loss[k] - diag.grad_norm[k].powi(2) / (2.0 * l_hat))
        .count();
    let descent_fraction = if steps == 0 { 1.0 } else { descent_satisfied as f64 / steps as f64 };

    let l_min = diag.loss.iter().copied().fold(f64::INFINITY, f64::min);
    let telescoped_lhs: f64 = diag.grad_norm[..steps].iter().map(|g| g * g).sum();
    let telescoped_rhs = 2.0 * l_hat * (diag.loss[0] - l_min);

    let last = diag.len() - 1;
    let stationarity_lhs = diag.grad_norm_exact[last]
        .ok_or_else(|| Error::invalid("trajectory has no exact gradient norm at the final iterate"))?;
    let stationarity_rhs = (delta_hat + diag.grad_norm[last]) * (1.0 + slack);

    Ok(ConvergenceReport {
        l_hat,
        delta_hat,
        descent_satisfied,
        descent_total: steps,
        descent_fraction,
        descent_pass: descent_fraction >= min_descent_fraction,
        telescoped_lhs,
        telescoped_rhs,
        telescoped_pass: telescoped_lhs <= telescoped_rhs,
        stationarity_lhs,
        stationarity_rhs,
        stationarity_pass: stationarity_lhs <= stationarity_rhs,
    })
}
