use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Square `n × n` node grid on the unit square. Node `(i, j)` sits at
/// `x = j h`, `y = i h` with `h = 1/(n-1)` and has flat index `i n + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!("grid needs n >= 3, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        let h = self.spacing();
        ((k % self.n) as f64 * h, (k / self.n) as f64 * h)
    }

    pub fn n_boundary(&self) -> usize {
        4 * (self.n - 1)
    }

    /// Boundary node indices, counterclockwise from the corner `(0, 0)`.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.n_boundary());
        out.extend((0..n - 1).map(|j| self.idx(0, j)));
        out.extend((0..n - 1).map(|i| self.idx(i, n - 1)));
        out.extend((1..n).rev().map(|j| self.idx(n - 1, j)));
        out.extend((1..n).rev().map(|i| self.idx(i, 0)));
        out
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = (k / self.n, k % self.n);
        i == 0 || j == 0 || i == self.n - 1 || j == self.n - 1
    }

    /// Nearest-neighbour edges `(a, b, w)` with `a < b`. The weight `w` is
    /// the dual face length relative to `h`: 1 inside, ½ along the boundary.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n;
        let mut out = Vec::with_capacity(2 * n * (n - 1));
        for i in 0..n {
            for j in 0..n {
                if j + 1 < n {
                    let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    out.push((self.idx(i, j), self.idx(i, j + 1), w));
                }
                if i + 1 < n {
                    let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                    out.push((self.idx(i, j), self.idx(i + 1, j), w));
                }
            }
        }
        out
    }

    /// Boundary-restriction matrix `[n_boundary, n²]`.
    pub fn restriction_matrix(&self) -> Tensor {
        let nb = self.n_boundary();
        let mut data = vec![0.0; nb * self.len()];
        for (r, k) in self.boundary_nodes().into_iter().enumerate() {
            data[r * self.len() + k] = 1.0;
        }
        Tensor::new([nb, self.len()], data).expect("restriction shape")
    }
}

/// Conductivity on the grid nodes, bounded in `[min, max]` with `min > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField {
    grid: Grid,
    values: Vec<f64>,
    bounds: (f64, f64),
}

impl ConductivityField {
    pub fn new(grid: Grid, values: Vec<f64>, bounds: (f64, f64)) -> Result<Self> {
        let (lo, hi) = bounds;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::invalid(format!("invalid conductivity bounds {bounds:?}")));
        }
        if values.len() != grid.len() {
            return Err(Error::Shape {
                op: "conductivity",
                lhs: vec![grid.n, grid.n],
                rhs: vec![values.len()],
            });
        }
        if let Some(i) = values.iter().position(|v| !(lo..=hi).contains(v)) {
            return Err(Error::Domain {
                op: "conductivity",
                msg: format!("value {} at node {i} outside [{lo}, {hi}]", values[i]),
            });
        }
        Ok(Self {
            grid,
            values,
            bounds,
        })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()], (value, value))
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.values.clone())
    }
}

/// Boundary current patterns; each sums to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentPatternSet {
    n_boundary: usize,
    patterns: Vec<Vec<f64>>,
}

impl CurrentPatternSet {
    pub fn new(n_boundary: usize, patterns: Vec<Vec<f64>>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::invalid("empty pattern set"));
        }
        if let Some(p) = patterns.iter().find(|p| p.len() != n_boundary) {
            return Err(Error::Shape {
                op: "current patterns",
                lhs: vec![n_boundary],
                rhs: vec![p.len()],
            });
        }
        Ok(Self {
            n_boundary,
            patterns,
        })
    }

    /// `cos(kθ_j)`, `sin(kθ_j)` for `k = 1..=m/2` with `θ_j = 2πj/B` the
    /// arc-length angle of boundary node `j`.
    pub fn trigonometric(grid: &Grid, m: usize) -> Result<Self> {
        let nb = grid.n_boundary();
        if m == 0 || !m.is_multiple_of(2) || m / 2 >= nb / 2 {
            return Err(Error::invalid(format!(
                "pattern count must be even and below {nb}, got {m}"
            )));
        }
        let mut patterns = Vec::with_capacity(m);
        for k in 1..=m / 2 {
            for trig in [f64::cos, f64::sin] {
                let mut p: Vec<f64> = (0..nb)
                    .map(|j| trig(k as f64 * 2.0 * PI * j as f64 / nb as f64))
                    .collect();
                super::linalg::remove_mean(&mut p);
                patterns.push(p);
            }
        }
        Self::new(nb, patterns)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    pub fn patterns(&self) -> &[Vec<f64>] {
        &self.patterns
    }
}
