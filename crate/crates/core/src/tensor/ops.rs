//! Forward kernels and vector-Jacobian products for the closed op set.

use super::{DType, Tensor};
use crate::error::{Error, Result};

/// The closed set of differentiable operations.
///
/// Binary elementwise ops (`Add`, `Sub`, `Mul`) accept identical shapes, a
/// right operand that is a scalar, or a 1-D right operand whose length equals
/// the last dimension of the left operand (row broadcast, used for biases).
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    /// 2-D matrix product.
    MatMul,
    Scale(f64),
    /// Sum over every entry (`None`) or along one axis, which is removed.
    Sum {
        axis: Option<usize>,
    },
    Mean,
    Square,
    Sqrt,
    Tanh,
    /// Subgradient at zero is 0.
    Relu,
    Sin,
    Cos,
    Concat {
        axis: usize,
    },
    Reshape(Vec<usize>),
    Slice {
        axis: usize,
        start: usize,
        end: usize,
    },
    /// 2-D transpose.
    Transpose,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::MatMul => "matmul",
            OpKind::Scale(_) => "scale",
            OpKind::Sum { .. } => "sum",
            OpKind::Mean => "mean",
            OpKind::Square => "square",
            OpKind::Sqrt => "sqrt",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Sin => "sin",
            OpKind::Cos => "cos",
            OpKind::Concat { .. } => "concat",
            OpKind::Reshape(_) => "reshape",
            OpKind::Slice { .. } => "slice",
            OpKind::Transpose => "transpose",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::MatMul => Some(2),
            OpKind::Concat { .. } => None,
            _ => Some(1),
        }
    }
}

/// Evaluates `kind` on `inputs` without recording anything.
pub fn apply(kind: &OpKind, inputs: &[&Tensor]) -> Result<Tensor> {
    check_arity(kind, inputs.len())?;
    let dtype = inputs
        .iter()
        .fold(DType::F64, |d, t| d.promote(t.dtype()));
    let out = forward(kind, inputs)?;
    Ok(out.with_dtype_of(dtype))
}

fn check_arity(kind: &OpKind, n: usize) -> Result<()> {
    match kind.arity() {
        Some(k) if k != n => Err(Error::invalid(format!(
            "{} expects {k} inputs, got {n}",
            kind.name()
        ))),
        None if n == 0 => Err(Error::invalid(format!("{} needs inputs", kind.name()))),
        _ => Ok(()),
    }
}

#[derive(Clone, Copy)]
enum Bcast {
    Same,
    Row(usize),
    Scalar,
}

fn broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Bcast> {
    if a.shape() == b.shape() {
        Ok(Bcast::Same)
    } else if b.is_scalar() {
        Ok(Bcast::Scalar)
    } else if b.ndim() == 1 && a.ndim() >= 2 && a.shape().last() == Some(&b.shape()[0]) {
        Ok(Bcast::Row(b.shape()[0]))
    } else {
        Err(Error::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

#[inline]
fn rhs_index(bc: Bcast, i: usize) -> usize {
    match bc {
        Bcast::Same => i,
        Bcast::Row(n) => i % n,
        Bcast::Scalar => 0,
    }
}

fn binary(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let bc = broadcast(op, a, b)?;
    let bd = b.data();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| f(x, bd[rhs_index(bc, i)]))
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// Reduces a gradient shaped like the left operand down to the right operand.
fn reduce_to_rhs(bc: Bcast, g: &[f64], rhs: &Tensor) -> Tensor {
    match bc {
        Bcast::Same => Tensor::new(rhs.shape().to_vec(), g.to_vec()).expect("same shape"),
        Bcast::Row(n) => {
            let mut out = vec![0.0; n];
            for (i, v) in g.iter().enumerate() {
                out[i % n] += v;
            }
            Tensor::new(rhs.shape().to_vec(), out).expect("row shape")
        }
        Bcast::Scalar => {
            Tensor::new(rhs.shape().to_vec(), vec![g.iter().sum()]).expect("scalar shape")
        }
    }
}

fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::Shape {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok((a.shape()[0], a.shape()[1], b.shape()[1]))
}

/// `c = op(a) * op(b)` where each operand is a row-major buffer addressed
/// through explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: the strides address exactly the m×k and k×n logical matrices
    // inside `a` and `b`, and `c` is a freshly allocated m×n row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(op: &'static str, t: &Tensor, axis: usize) -> Result<()> {
    if axis >= t.ndim() {
        return Err(Error::Domain {
            op,
            msg: format!("axis {axis} out of range for shape {:?}", t.shape()),
        });
    }
    Ok(())
}

fn forward(kind: &OpKind, inputs: &[&Tensor]) -> Result<Tensor> {
    let x = inputs[0];
    match kind {
        OpKind::Add => binary("add", x, inputs[1], |a, b| a + b),
        OpKind::Sub => binary("sub", x, inputs[1], |a, b| a - b),
        OpKind::Mul => binary("mul", x, inputs[1], |a, b| a * b),
        OpKind::MatMul => {
            let b = inputs[1];
            let (m, k, n) = matmul_dims(x, b)?;
            let c = gemm(m, k, n, x.data(), (k, 1), b.data(), (n, 1));
            Tensor::new([m, n], c)
        }
        OpKind::Scale(c) => Ok(x.map(|v| c * v)),
        OpKind::Sum { axis: None } => Ok(Tensor::scalar(x.data().iter().sum())),
        OpKind::Sum { axis: Some(axis) } => {
            check_axis("sum", x, *axis)?;
            let (outer, len, inner) = axis_split(x.shape(), *axis);
            let mut out = vec![0.0; outer * inner];
            let d = x.data();
            for o in 0..outer {
                for l in 0..len {
                    let base = (o * len + l) * inner;
                    for i in 0..inner {
                        out[o * inner + i] += d[base + i];
                    }
                }
            }
            let mut shape = x.shape().to_vec();
            shape.remove(*axis);
            Tensor::new(shape, out)
        }
        OpKind::Mean => {
            if x.is_empty() {
                return Err(Error::Domain {
                    op: "mean",
                    msg: "empty tensor".into(),
                });
            }
            Ok(Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64))
        }
        OpKind::Square => Ok(x.map(|v| v * v)),
        OpKind::Sqrt => {
            if let Some(i) = x.data().iter().position(|&v| v < 0.0) {
                return Err(Error::Domain {
                    op: "sqrt",
                    msg: format!("negative entry {} at index {i}", x.data()[i]),
                });
            }
            Ok(x.map(f64::sqrt))
        }
        OpKind::Tanh => Ok(x.map(f64::tanh)),
        OpKind::Relu => Ok(x.map(|v| if v > 0.0 { v } else { 0.0 })),
        OpKind::Sin => Ok(x.map(f64::sin)),
        OpKind::Cos => Ok(x.map(f64::cos)),
        OpKind::Concat { axis } => concat(inputs, *axis),
        OpKind::Reshape(shape) => x.clone().reshape(shape.clone()),
        OpKind::Slice { axis, start, end } => {
            check_axis("slice", x, *axis)?;
            let (outer, len, inner) = axis_split(x.shape(), *axis);
            if start >= end || *end > len {
                return Err(Error::Domain {
                    op: "slice",
                    msg: format!("range {start}..{end} invalid for axis of length {len}"),
                });
            }
            let width = end - start;
            let mut out = Vec::with_capacity(outer * width * inner);
            for o in 0..outer {
                let base = (o * len + start) * inner;
                out.extend_from_slice(&x.data()[base..base + width * inner]);
            }
            let mut shape = x.shape().to_vec();
            shape[*axis] = width;
            Tensor::new(shape, out)
        }
        OpKind::Transpose => {
            if x.ndim() != 2 {
                return Err(Error::Domain {
                    op: "transpose",
                    msg: format!("expected 2-D tensor, got shape {:?}", x.shape()),
                });
            }
            let (m, n) = (x.shape()[0], x.shape()[1]);
            let d = x.data();
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    out[j * m + i] = d[i * n + j];
                }
            }
            Tensor::new([n, m], out)
        }
    }
}

fn concat(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = inputs[0];
    check_axis("concat", first, axis)?;
    for t in &inputs[1..] {
        let compatible = t.ndim() == first.ndim()
            && t
                .shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(d, (a, b))| d == axis || a == b);
        if !compatible {
            return Err(Error::Shape {
                op: "concat",
                lhs: first.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
    }
    let (outer, _, inner) = axis_split(first.shape(), axis);
    let total: usize = inputs.iter().map(|t| t.shape()[axis]).sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for t in inputs {
            let len = t.shape()[axis];
            let base = o * len * inner;
            out.extend_from_slice(&t.data()[base..base + len * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Tensor::new(shape, out)
}

/// Vector-Jacobian product: gradients for each input given the output
/// gradient `g`. Entries are `None` where `needs[i]` is false.
pub(super) fn vjp(
    kind: &OpKind,
    inputs: &[&Tensor],
    output: &Tensor,
    g: &Tensor,
    needs: &[bool],
) -> Result<Vec<Option<Tensor>>> {
    let x = inputs[0];
    let gd = g.data();
    let like = |t: &Tensor, data: Vec<f64>| Tensor::new(t.shape().to_vec(), data);
    let unary = |f: &dyn Fn(usize) -> f64| -> Result<Vec<Option<Tensor>>> {
        let data = (0..gd.len()).map(f).collect();
        Ok(vec![Some(like(x, data)?)])
    };
    match kind {
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let b = inputs[1];
            let bc = broadcast(kind.name(), x, b)?;
            let bd = b.data();
            let xd = x.data();
            let ga = needs[0].then(|| {
                let data = match kind {
                    OpKind::Mul => gd
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v * bd[rhs_index(bc, i)])
                        .collect(),
                    _ => gd.to_vec(),
                };
                like(x, data)
            });
            let gb = needs[1].then(|| {
                let full: Vec<f64> = match kind {
                    OpKind::Add => gd.to_vec(),
                    OpKind::Sub => gd.iter().map(|v| -v).collect(),
                    _ => gd.iter().zip(xd).map(|(v, a)| v * a).collect(),
                };
                reduce_to_rhs(bc, &full, b)
            });
            Ok(vec![ga.transpose()?, gb])
        }
        OpKind::MatMul => {
            let b = inputs[1];
            let (m, k, n) = matmul_dims(x, b)?;
            // dA = G Bᵀ, dB = Aᵀ G
            let ga = needs[0]
                .then(|| Tensor::new([m, k], gemm(m, n, k, gd, (n, 1), b.data(), (1, n))))
                .transpose()?;
            let gb = needs[1]
                .then(|| Tensor::new([k, n], gemm(k, m, n, x.data(), (1, k), gd, (n, 1))))
                .transpose()?;
            Ok(vec![ga, gb])
        }
        OpKind::Scale(c) => unary(&|i| c * gd[i]),
        OpKind::Sum { axis: None } => {
            let v = gd[0];
            Ok(vec![Some(Tensor::full(x.shape().to_vec(), v))])
        }
        OpKind::Sum { axis: Some(axis) } => {
            let (outer, len, inner) = axis_split(x.shape(), *axis);
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                for l in 0..len {
                    let base = (o * len + l) * inner;
                    out[base..base + inner].copy_from_slice(&gd[o * inner..(o + 1) * inner]);
                }
            }
            Ok(vec![Some(like(x, out)?)])
        }
        OpKind::Mean => {
            let v = gd[0] / x.len() as f64;
            Ok(vec![Some(Tensor::full(x.shape().to_vec(), v))])
        }
        OpKind::Square => {
            let xd = x.data();
            unary(&|i| 2.0 * xd[i] * gd[i])
        }
        OpKind::Sqrt => {
            let od = output.data();
            unary(&|i| 0.5 * gd[i] / od[i])
        }
        OpKind::Tanh => {
            let od = output.data();
            unary(&|i| gd[i] * (1.0 - od[i] * od[i]))
        }
        OpKind::Relu => {
            let xd = x.data();
            unary(&|i| if xd[i] > 0.0 { gd[i] } else { 0.0 })
        }
        OpKind::Sin => {
            let xd = x.data();
            unary(&|i| gd[i] * xd[i].cos())
        }
        OpKind::Cos => {
            let xd = x.data();
            unary(&|i| -gd[i] * xd[i].sin())
        }
        OpKind::Concat { axis } => {
            let (outer, _, inner) = axis_split(output.shape(), *axis);
            let total = output.shape()[*axis];
            let mut offset = 0;
            let mut grads = Vec::with_capacity(inputs.len());
            for (t, &need) in inputs.iter().zip(needs) {
                let len = t.shape()[*axis];
                if need {
                    let mut out = Vec::with_capacity(t.len());
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        out.extend_from_slice(&gd[base..base + len * inner]);
                    }
                    grads.push(Some(like(t, out)?));
                } else {
                    grads.push(None);
                }
                offset += len;
            }
            Ok(grads)
        }
        OpKind::Reshape(_) => Ok(vec![Some(like(x, gd.to_vec())?)]),
        OpKind::Slice { axis, start, end } => {
            let (outer, len, inner) = axis_split(x.shape(), *axis);
            let width = end - start;
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                let dst = (o * len + start) * inner;
                let src = o * width * inner;
                out[dst..dst + width * inner].copy_from_slice(&gd[src..src + width * inner]);
            }
            Ok(vec![Some(like(x, out)?)])
        }
        OpKind::Transpose => {
            let (m, n) = (x.shape()[0], x.shape()[1]);
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    out[i * n + j] = gd[j * m + i];
                }
            }
            Ok(vec![Some(like(x, out)?)])
        }
    }
}
