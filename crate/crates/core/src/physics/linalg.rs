//! Sparse solvers for the symmetric positive (semi-)definite systems of the
//! elliptic problems: a banded Cholesky factorization and conjugate gradients.

use crate::error::{Error, Result};

/// Lower-triangular band storage of an SPD matrix with half-bandwidth `bw`.
/// Row `i` holds entries `(i, i-bw) ..= (i, i)`.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    size: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(size: usize, bw: usize) -> Self {
        Self {
            size,
            bw,
            data: vec![0.0; size * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw - (i - j))
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// In-place Cholesky factorization `A = L Lᵀ`.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let bw = self.bw;
        for i in 0..self.size {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let kmin = lo.max(j.saturating_sub(bw));
                let mut s = self.data[self.slot(i, j)];
                for k in kmin..j {
                    s -= self.data[self.slot(i, k)] * self.data[self.slot(j, k)];
                }
                let slot = self.slot(i, j);
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Domain {
                            op: "cholesky",
                            msg: format!("matrix not positive definite at row {i} (pivot {s:e})"),
                        });
                    }
                    self.data[slot] = s.sqrt();
                } else {
                    self.data[slot] = s / self.data[self.slot(j, j)];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: BandedMatrix,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let n = l.size;
        let bw = l.bw;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= l.data[l.slot(i, k)] * y[k];
            }
            y[i] = s / l.data[l.slot(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n.min(i + bw + 1) {
                s -= l.data[l.slot(k, i)] * y[k];
            }
            y[i] = s / l.data[l.slot(i, i)];
        }
        y
    }
}

/// Conjugate gradients for `A x = b` with `A` symmetric positive
/// semi-definite and `b` in its range. When `project_mean` is set the
/// constant null space is removed from every residual and the result is
/// mean-zero.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
    project_mean: bool,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if project_mean {
        remove_mean(&mut r);
    }
    let bnorm = norm(&r);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NoConvergence {
                solver: "conjugate gradient",
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if project_mean {
            remove_mean(&mut r);
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            if project_mean {
                remove_mean(&mut x);
            }
            return Ok(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        solver: "conjugate gradient",
        iterations: max_iter,
        residual: rr.sqrt() / bnorm,
    })
}

pub(crate) fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= m;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
