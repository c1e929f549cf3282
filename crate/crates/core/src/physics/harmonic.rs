use super::grid::Grid;
use super::linalg::BandedMatrix;
use crate::error::{Error, Result};

/// Discrete harmonic extension of boundary values (ordered as
/// [`Grid::boundary_nodes`]) into the interior, using the 5-point Laplacian.
pub fn harmonic_extension(boundary_values: &[f64], grid: Grid) -> Result<Vec<f64>> {
    let boundary = grid.boundary_nodes();
    if boundary_values.len() != boundary.len() {
        return Err(Error::Shape {
            op: "harmonic_extension",
            lhs: vec![boundary.len()],
            rhs: vec![boundary_values.len()],
        });
    }
    if let Some(i) = boundary_values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "boundary value",
            index: i,
        });
    }
    let n = grid.n;
    let mut u = vec![0.0; grid.len()];
    for (&k, &v) in boundary.iter().zip(boundary_values) {
        u[k] = v;
    }
    let m = n - 2;
    let inner = |i: usize, j: usize| (i - 1) * m + (j - 1);
    let mut a = BandedMatrix::zeros(m * m, m);
    let mut rhs = vec![0.0; m * m];
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let r = inner(i, j);
            a.add(r, r, 4.0);
            for (p, q) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                if grid.is_boundary(grid.idx(p, q)) {
                    rhs[r] += u[grid.idx(p, q)];
                } else if inner(p, q) < r {
                    a.add(r, inner(p, q), -1.0);
                }
            }
        }
    }
    let x = a.cholesky()?.solve(&rhs);
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            u[grid.idx(i, j)] = x[inner(i, j)];
        }
    }
    Ok(u)
}
