//! Finite-volume EIT forward model with first- and second-order adjoints.
//!
//! `∇·(σ∇u) = 0` in the unit square with flux `σ ∂u/∂n = g` on the
//! boundary is discretized on the node grid: every nearest-neighbour edge
//! carries the conductance `s_e = w_e · 2σ_aσ_b/(σ_a+σ_b)` (harmonic face
//! average, `w_e` the dual face length), so the stiffness matrix is
//! `A = Σ_e s_e q_e q_eᵀ` with `q_e = e_a − e_b`. Boundary node `j` receives
//! the current `g_j h`. The singular Neumann system is grounded by
//! requiring a mean-zero potential.
//!
//! Gradients are exact for the discrete misfit
//! `ℒ(σ) = ½ Σ_k ‖V_k(σ) − V_obs,k‖²`, including the curvature of the
//! harmonic average in the Hessian.

use serde::{Deserialize, Serialize};

use super::grid::{ConductivityField, CurrentPatternSet, Grid};
use super::linalg::{conjugate_gradient, remove_mean, BandedCholesky, BandedMatrix};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SolverSettings {
    /// Banded Cholesky of the system grounded at node 0, re-centered.
    #[default]
    Direct,
    ConjugateGradient {
        tol: f64,
        max_iter: usize,
    },
}

impl SolverSettings {
    pub fn cg() -> Self {
        SolverSettings::ConjugateGradient {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    a: usize,
    b: usize,
    s: f64,
    ds_da: f64,
    ds_db: f64,
    d2_aa: f64,
    d2_ab: f64,
    d2_bb: f64,
}

impl Edge {
    #[inline]
    fn diff(&self, x: &[f64]) -> f64 {
        x[self.a] - x[self.b]
    }
}

/// Assembled `A(σ)` with its factorization.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    grid: Grid,
    edges: Vec<Edge>,
    factor: Option<BandedCholesky>,
    settings: SolverSettings,
}

impl EllipticOperator {
    pub fn assemble(grid: Grid, sigma: &[f64], settings: SolverSettings) -> Result<Self> {
        if sigma.len() != grid.len() {
            return Err(Error::Shape {
                op: "eit",
                lhs: vec![grid.n, grid.n],
                rhs: vec![sigma.len()],
            });
        }
        if let Some(i) = sigma.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain {
                op: "eit",
                msg: format!("conductivity must be positive, got {} at node {i}", sigma[i]),
            });
        }
        let edges: Vec<Edge> = grid
            .edges()
            .into_iter()
            .map(|(a, b, w)| {
                let (x, y) = (sigma[a], sigma[b]);
                let sum = x + y;
                let sum2 = sum * sum;
                let sum3 = sum2 * sum;
                Edge {
                    a,
                    b,
                    s: w * 2.0 * x * y / sum,
                    ds_da: w * 2.0 * y * y / sum2,
                    ds_db: w * 2.0 * x * x / sum2,
                    d2_aa: -4.0 * w * y * y / sum3,
                    d2_ab: 4.0 * w * x * y / sum3,
                    d2_bb: -4.0 * w * x * x / sum3,
                }
            })
            .collect();
        let factor = match settings {
            SolverSettings::Direct => {
                // Ground node 0; the remaining system is SPD with bandwidth n.
                let m = grid.len() - 1;
                let mut band = BandedMatrix::zeros(m, grid.n);
                for e in &edges {
                    for (p, q, v) in [(e.a, e.a, e.s), (e.b, e.b, e.s), (e.a, e.b, -e.s)] {
                        if p > 0 && q > 0 {
                            band.add(p - 1, q - 1, v);
                        }
                    }
                }
                Some(band.cholesky()?)
            }
            SolverSettings::ConjugateGradient { .. } => None,
        };
        Ok(Self {
            grid,
            edges,
            factor,
            settings,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for e in &self.edges {
            let f = e.s * e.diff(x);
            y[e.a] += f;
            y[e.b] -= f;
        }
    }

    /// `dA x` for per-edge conductance perturbations `ds`.
    fn apply_perturbation(&self, ds: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (e, d) in self.edges.iter().zip(ds) {
            let f = d * e.diff(x);
            y[e.a] += f;
            y[e.b] -= f;
        }
        y
    }

    /// Mean-zero solution of `A u = rhs` for compatible `rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut u = match (&self.factor, self.settings) {
            (Some(chol), _) => {
                let mut u = Vec::with_capacity(rhs.len());
                u.push(0.0);
                u.extend(chol.solve(&rhs[1..]));
                u
            }
            (None, SolverSettings::ConjugateGradient { tol, max_iter }) => {
                conjugate_gradient(|x, y| self.apply(x, y), rhs, tol, max_iter, true)?
            }
            (None, SolverSettings::Direct) => unreachable!("direct solver always factors"),
        };
        remove_mean(&mut u);
        Ok(u)
    }

    fn edge_perturbation(&self, dsigma: &[f64]) -> Vec<f64> {
        self.edges
            .iter()
            .map(|e| e.ds_da * dsigma[e.a] + e.ds_db * dsigma[e.b])
            .collect()
    }

    /// Pulls a per-edge sensitivity back to the nodes through `∂s/∂σ`.
    fn pull_back(&self, edge_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (e, v) in self.edges.iter().zip(edge_values) {
            out[e.a] += e.ds_da * v;
            out[e.b] += e.ds_db * v;
        }
        out
    }
}

/// Forward solution for one conductivity and all patterns.
#[derive(Debug, Clone)]
pub struct EitSolution {
    op: EllipticOperator,
    /// Mean-zero interior potentials, one per pattern.
    pub potentials: Vec<Vec<f64>>,
    /// Boundary voltages `[patterns, boundary nodes]`, mean-zero per row.
    pub voltages: Tensor,
}

/// EIT forward operator for a fixed grid and pattern set.
#[derive(Debug, Clone)]
pub struct EitSolver {
    grid: Grid,
    patterns: CurrentPatternSet,
    boundary: Vec<usize>,
    settings: SolverSettings,
}

impl EitSolver {
    pub fn new(grid: Grid, patterns: CurrentPatternSet, settings: SolverSettings) -> Result<Self> {
        if patterns.n_boundary() != grid.n_boundary() {
            return Err(Error::Shape {
                op: "eit patterns",
                lhs: vec![grid.n_boundary()],
                rhs: vec![patterns.n_boundary()],
            });
        }
        for (k, p) in patterns.patterns().iter().enumerate() {
            let sum: f64 = p.iter().sum();
            let l1: f64 = p.iter().map(|v| v.abs()).sum();
            if sum.abs() > 1e-12 * l1 {
                return Err(Error::IncompatiblePattern { pattern: k, sum });
            }
        }
        Ok(Self {
            boundary: grid.boundary_nodes(),
            grid,
            patterns,
            settings,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn patterns(&self) -> &CurrentPatternSet {
        &self.patterns
    }

    pub fn settings(&self) -> SolverSettings {
        self.settings
    }

    /// Shape of the observation tensor.
    pub fn observation_shape(&self) -> [usize; 2] {
        [self.patterns.len(), self.boundary.len()]
    }

    fn restrict_centered(&self, u: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = self.boundary.iter().map(|&k| u[k]).collect();
        remove_mean(&mut v);
        v
    }

    /// `Rᵀ P c`: centered boundary data lifted to a nodal right-hand side.
    fn lift_boundary(&self, c: &[f64]) -> Vec<f64> {
        let mut c = c.to_vec();
        remove_mean(&mut c);
        let mut rhs = vec![0.0; self.grid.len()];
        for (&k, v) in self.boundary.iter().zip(&c) {
            rhs[k] += v;
        }
        rhs
    }

    pub fn solve(&self, sigma: &[f64]) -> Result<EitSolution> {
        let op = EllipticOperator::assemble(self.grid, sigma, self.settings)?;
        let h = self.grid.spacing();
        let mut potentials = Vec::with_capacity(self.patterns.len());
        let mut voltages = Vec::with_capacity(self.patterns.len() * self.boundary.len());
        for g in self.patterns.patterns() {
            let mut rhs = vec![0.0; self.grid.len()];
            for (&k, gj) in self.boundary.iter().zip(g) {
                rhs[k] = gj * h;
            }
            let u = op.solve(&rhs)?;
            voltages.extend(self.restrict_centered(&u));
            potentials.push(u);
        }
        let voltages = Tensor::new(self.observation_shape(), voltages)?;
        Ok(EitSolution {
            op,
            potentials,
            voltages,
        })
    }

    pub fn solve_field(&self, sigma: &ConductivityField) -> Result<EitSolution> {
        self.solve(sigma.values())
    }

    fn check_observation(&self, t: &Tensor) -> Result<()> {
        if t.len() != self.patterns.len() * self.boundary.len() {
            return Err(Error::Shape {
                op: "eit observation",
                lhs: self.observation_shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn adjoint_states(&self, sol: &EitSolution, cotangent: &Tensor) -> Result<Vec<Vec<f64>>> {
        self.check_observation(cotangent)?;
        let nb = self.boundary.len();
        cotangent
            .data()
            .chunks(nb)
            .map(|c| sol.op.solve(&self.lift_boundary(c)))
            .collect()
    }

    /// Gradient with respect to σ of `⟨cotangent, V(σ)⟩`.
    pub fn vjp(&self, sol: &EitSolution, cotangent: &Tensor) -> Result<Vec<f64>> {
        let adj = self.adjoint_states(sol, cotangent)?;
        let edge_grad = edge_gradient(&sol.op, &sol.potentials, &adj);
        Ok(sol.op.pull_back(&edge_grad))
    }

    /// Gradient of `½ Σ_k ‖V_k − V_obs,k‖²` and the misfit itself.
    pub fn adjoint_gradient(&self, sigma: &[f64], v_obs: &Tensor) -> Result<(Vec<f64>, f64)> {
        self.check_observation(v_obs)?;
        let sol = self.solve(sigma)?;
        let residual = sol.voltages.axpy(-1.0, &v_obs.clone().reshape(sol.voltages.shape().to_vec())?)?;
        let loss = 0.5 * residual.data().iter().map(|v| v * v).sum::<f64>();
        Ok((self.vjp(&sol, &residual)?, loss))
    }

    /// Hessian of the misfit applied to `dsigma`, via the tangent and
    /// second-order adjoint states.
    pub fn hvp(&self, sigma: &[f64], v_obs: &Tensor, dsigma: &[f64]) -> Result<Vec<f64>> {
        self.check_observation(v_obs)?;
        if dsigma.len() != self.grid.len() {
            return Err(Error::Shape {
                op: "eit_hvp",
                lhs: vec![self.grid.len()],
                rhs: vec![dsigma.len()],
            });
        }
        let sol = self.solve(sigma)?;
        let op = &sol.op;
        let residual = sol.voltages.axpy(-1.0, &v_obs.clone().reshape(sol.voltages.shape().to_vec())?)?;
        let adj = self.adjoint_states(&sol, &residual)?;
        let ds = op.edge_perturbation(dsigma);

        let mut tangent = Vec::with_capacity(adj.len());
        let mut second = Vec::with_capacity(adj.len());
        for (u, w) in sol.potentials.iter().zip(&adj) {
            // A û = −dA u
            let mut rhs = op.apply_perturbation(&ds, u);
            rhs.iter_mut().for_each(|v| *v = -*v);
            let u_hat = op.solve(&rhs)?;
            // A ŵ = −dA w + Rᵀ P R û
            let mut rhs = op.apply_perturbation(&ds, w);
            let lifted = self.lift_boundary(&self.boundary.iter().map(|&k| u_hat[k]).collect::<Vec<_>>());
            for (r, l) in rhs.iter_mut().zip(&lifted) {
                *r = l - *r;
            }
            second.push(op.solve(&rhs)?);
            tangent.push(u_hat);
        }

        // −∇û·∇w − ∇u·∇ŵ per edge
        let mut edge_h = edge_gradient(op, &tangent, &adj);
        let cross = edge_gradient(op, &sol.potentials, &second);
        for (h, c) in edge_h.iter_mut().zip(&cross) {
            *h += c;
        }
        let mut out = op.pull_back(&edge_h);

        // curvature of the harmonic average
        let g = edge_gradient(op, &sol.potentials, &adj);
        for (e, ge) in op.edges.iter().zip(&g) {
            out[e.a] += ge * (e.d2_aa * dsigma[e.a] + e.d2_ab * dsigma[e.b]);
            out[e.b] += ge * (e.d2_ab * dsigma[e.a] + e.d2_bb * dsigma[e.b]);
        }
        Ok(out)
    }
}

/// Per-edge `−Σ_k (q_e·u_k)(q_e·w_k)`.
fn edge_gradient(op: &EllipticOperator, u: &[Vec<f64>], w: &[Vec<f64>]) -> Vec<f64> {
    op.edges
        .iter()
        .map(|e| -u.iter().zip(w).map(|(uk, wk)| e.diff(uk) * e.diff(wk)).sum::<f64>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::relative_error;

    fn setup(n: usize, settings: SolverSettings) -> EitSolver {
        let grid = Grid::new(n).unwrap();
        let patterns = CurrentPatternSet::trigonometric(&grid, 8).unwrap();
        EitSolver::new(grid, patterns, settings).unwrap()
    }

    fn smooth_sigma(grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|k| {
                let (x, y) = grid.coords(k);
                0.3 + 0.2 * (3.0 * x).sin() * (2.0 * y).cos() + 0.1 * x * y
            })
            .collect()
    }

    #[test]
    fn zero_current_gives_zero_potential() {
        let grid = Grid::new(6).unwrap();
        let patterns = CurrentPatternSet::new(grid.n_boundary(), vec![vec![0.0; 20]]).unwrap();
        let solver = EitSolver::new(grid, patterns, SolverSettings::Direct).unwrap();
        let sol = solver.solve(&vec![0.4; grid.len()]).unwrap();
        assert!(sol.potentials[0].iter().all(|&v| v == 0.0));
        assert!(sol.voltages.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn incompatible_pattern_rejected() {
        let grid = Grid::new(5).unwrap();
        let mut p = vec![0.0; 16];
        p[0] = 1.0;
        let patterns = CurrentPatternSet::new(16, vec![p]).unwrap();
        assert!(matches!(
            EitSolver::new(grid, patterns, SolverSettings::Direct),
            Err(Error::IncompatiblePattern { pattern: 0, .. })
        ));
    }

    #[test]
    fn potentials_are_mean_zero_and_satisfy_system() {
        let solver = setup(10, SolverSettings::Direct);
        let sigma = smooth_sigma(&solver.grid());
        let sol = solver.solve(&sigma).unwrap();
        let h = solver.grid().spacing();
        let boundary = solver.grid().boundary_nodes();
        for (u, g) in sol.potentials.iter().zip(solver.patterns().patterns()) {
            assert!(u.iter().sum::<f64>().abs() < 1e-12);
            let mut au = vec![0.0; u.len()];
            sol.op.apply(u, &mut au);
            let mut rhs = vec![0.0; u.len()];
            for (&k, gj) in boundary.iter().zip(g) {
                rhs[k] = gj * h;
            }
            for (a, b) in au.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cg_agrees_with_direct() {
        let direct = setup(12, SolverSettings::Direct);
        let cg = setup(12, SolverSettings::cg());
        let sigma = smooth_sigma(&direct.grid());
        let a = direct.solve(&sigma).unwrap().voltages;
        let b = cg.solve(&sigma).unwrap().voltages;
        assert!(relative_error(&b, &a) < 1e-8);
    }

    #[test]
    fn cg_non_convergence_reports_residual() {
        let solver = setup(12, SolverSettings::ConjugateGradient { tol: 1e-14, max_iter: 2 });
        let err = solver.solve(&smooth_sigma(&solver.grid())).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 2, .. }));
    }

    #[test]
    fn homogeneity_in_sigma() {
        let solver = setup(16, SolverSettings::Direct);
        let sigma = smooth_sigma(&solver.grid());
        let v1 = solver.solve(&sigma).unwrap().voltages;
        for c in [0.5, 3.0, 7.3] {
            let scaled: Vec<f64> = sigma.iter().map(|s| c * s).collect();
            let vc = solver.solve(&scaled).unwrap().voltages;
            assert!(relative_error(&vc.scaled(c), &v1) < 1e-10);
        }
    }

    #[test]
    fn gradient_vanishes_at_data_fit() {
        let solver = setup(8, SolverSettings::Direct);
        let sigma = smooth_sigma(&solver.grid());
        let v = solver.solve(&sigma).unwrap().voltages;
        let (grad, loss) = solver.adjoint_gradient(&sigma, &v).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_ignores_constant_shift_of_data() {
        let solver = setup(8, SolverSettings::Direct);
        let sigma = smooth_sigma(&solver.grid());
        let v_obs = solver.solve(&vec![0.25; 64]).unwrap().voltages;
        let shifted = v_obs.map(|v| v + 3.7);
        let (g1, _) = solver.adjoint_gradient(&sigma, &v_obs).unwrap();
        let (g2, _) = solver.adjoint_gradient(&sigma, &shifted).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn hvp_of_zero_direction_is_zero() {
        let solver = setup(6, SolverSettings::Direct);
        let sigma = smooth_sigma(&solver.grid());
        let v_obs = solver.solve(&vec![0.25; 36]).unwrap().voltages;
        let hv = solver.hvp(&sigma, &v_obs, &vec![0.0; 36]).unwrap();
        assert!(hv.iter().all(|&v| v == 0.0));
    }
}
