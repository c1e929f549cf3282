//! Finite-difference oracles for validating analytic derivatives.

use super::Tensor;
use crate::error::{Error, Result};

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    Ok(())
}

/// Central-difference gradient of a scalar function.
pub fn finite_difference_gradient<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    check_step(h)?;
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape().to_vec());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite {
                what: "finite-difference evaluation",
                index: i,
            });
        }
        out.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// `(∇f(x + h v) − ∇f(x − h v)) / 2h`, an approximation of `H v`.
pub fn hvp_finite_difference<G>(mut gradf: G, x: &Tensor, v: &Tensor, h: f64) -> Result<Tensor>
where
    G: FnMut(&Tensor) -> Result<Tensor>,
{
    check_step(h)?;
    if x.shape() != v.shape() {
        return Err(Error::Shape {
            op: "hvp_finite_difference",
            lhs: x.shape().to_vec(),
            rhs: v.shape().to_vec(),
        });
    }
    let gp = gradf(&x.axpy(h, v)?)?;
    let gm = gradf(&x.axpy(-h, v)?)?;
    let mut out = gp.axpy(-1.0, &gm)?.scaled(0.5 / h);
    out = out.reshape(x.shape().to_vec())?;
    Ok(out)
}

/// Central-difference Jacobian of a vector function, shape `[outputs, inputs]`.
pub fn jacobian_fd<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    check_step(h)?;
    let n = x.len();
    let mut probe = x.clone();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe)?;
        probe.data_mut()[i] = orig;
        let col: Vec<f64> = fp
            .data()
            .iter()
            .zip(fm.data())
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        if let Some(j) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "finite-difference jacobian",
                index: j * n + i,
            });
        }
        cols.push(col);
    }
    let m = cols.first().map_or(0, Vec::len);
    let mut data = vec![0.0; m * n];
    for (i, col) in cols.iter().enumerate() {
        for (j, v) in col.iter().enumerate() {
            data[j * n + i] = *v;
        }
    }
    Tensor::new([m, n], data)
}

/// `‖a − b‖ / max(‖b‖, tiny)`.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let diff: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    diff / b.norm().max(1e-300)
}
