use std::cell::{Ref, RefCell};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::ops::{self, OpKind};
use super::{DType, Tensor};
use crate::error::{Error, Result};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation outside the closed op set that supplies its own backward
/// rule, e.g. a PDE solve whose gradient is an adjoint solve.
pub trait CustomOp {
    fn name(&self) -> &str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    /// Gradients with respect to every input, given the output gradient.
    fn vjp(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Result<Vec<Tensor>>;
}

enum NodeOp {
    Leaf,
    Constant,
    Builtin(OpKind),
    Custom(Rc<dyn CustomOp>),
}

struct Node {
    op: NodeOp,
    inputs: Vec<usize>,
    value: Tensor,
    requires_grad: bool,
}

/// A single-writer record of operations, in topological order by
/// construction: a node can only consume nodes that already exist.
pub struct Graph {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("id", &self.id)
            .field("nodes", &self.len())
            .finish()
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("graph", &self.graph.id)
            .field("id", &self.id.0)
            .finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: NodeOp, inputs: Vec<usize>, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var {
            graph: self,
            id: NodeId(nodes.len() - 1),
        }
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(NodeOp::Leaf, Vec::new(), value, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(NodeOp::Constant, Vec::new(), value, false)
    }

    fn check_owner(&self, vars: &[Var<'_>]) -> Result<()> {
        if vars.iter().any(|v| v.graph.id != self.id) {
            return Err(Error::ForeignGraph);
        }
        Ok(())
    }

    pub fn apply<'g>(&'g self, kind: OpKind, inputs: &[Var<'g>]) -> Result<Var<'g>> {
        self.check_owner(inputs)?;
        let value = {
            let nodes = self.nodes.borrow();
            let refs: Vec<&Tensor> = inputs.iter().map(|v| &nodes[v.id.0].value).collect();
            ops::apply(&kind, &refs)?
        };
        let requires_grad = self.any_requires_grad(inputs);
        let ids = inputs.iter().map(|v| v.id.0).collect();
        Ok(self.push(NodeOp::Builtin(kind), ids, value, requires_grad))
    }

    pub fn custom<'g>(&'g self, op: Rc<dyn CustomOp>, inputs: &[Var<'g>]) -> Result<Var<'g>> {
        self.check_owner(inputs)?;
        let value = {
            let nodes = self.nodes.borrow();
            let refs: Vec<&Tensor> = inputs.iter().map(|v| &nodes[v.id.0].value).collect();
            op.forward(&refs)?
        };
        let requires_grad = self.any_requires_grad(inputs);
        let ids = inputs.iter().map(|v| v.id.0).collect();
        Ok(self.push(NodeOp::Custom(op), ids, value, requires_grad))
    }

    pub fn concat<'g>(&'g self, inputs: &[Var<'g>], axis: usize) -> Result<Var<'g>> {
        self.apply(OpKind::Concat { axis }, inputs)
    }

    fn any_requires_grad(&self, inputs: &[Var<'_>]) -> bool {
        let nodes = self.nodes.borrow();
        inputs.iter().any(|v| nodes[v.id.0].requires_grad)
    }

    pub fn value(&self, id: NodeId) -> Tensor {
        self.nodes.borrow()[id.0].value.clone()
    }

    fn value_ref(&self, id: NodeId) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id.0].value)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        self.check_owner(&[loss])?;
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id.0];
        if !root.value.is_scalar() {
            return Err(Error::NotScalar(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id.0 + 1];
        grads[loss.id.0] = Some(Tensor::full(root.value.shape().to_vec(), 1.0));

        for i in (0..=loss.id.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || node.inputs.is_empty() {
                continue;
            }
            let Some(grad) = grads[i].take() else { continue };
            let g = &grad;
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&j| &nodes[j].value).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|&j| nodes[j].requires_grad).collect();
            let input_grads = match &node.op {
                NodeOp::Builtin(kind) => ops::vjp(kind, &inputs, &node.value, g, &needs)?,
                NodeOp::Custom(op) => op
                    .vjp(&inputs, &node.value, g)?
                    .into_iter()
                    .zip(&needs)
                    .map(|(t, &n)| n.then_some(t))
                    .collect(),
                NodeOp::Leaf | NodeOp::Constant => unreachable!("leaves have no inputs"),
            };
            for (&j, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if ig.shape() != nodes[j].value.shape() {
                    return Err(Error::Shape {
                        op: "backward",
                        lhs: nodes[j].value.shape().to_vec(),
                        rhs: ig.shape().to_vec(),
                    });
                }
                grads[j] = Some(match grads[j].take() {
                    Some(acc) => acc.axpy(1.0, &ig)?,
                    None => ig,
                });
            }
            grads[i] = Some(grad);
        }
        Ok(Gradients {
            graph: self.id,
            grads,
        })
    }

    /// Recomputes every node from the stored leaf and constant values.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<Tensor> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&j| &values[j]).collect();
            let v = match &node.op {
                NodeOp::Leaf | NodeOp::Constant => node.value.clone(),
                NodeOp::Builtin(kind) => ops::apply(kind, &inputs)?,
                NodeOp::Custom(op) => op.forward(&inputs)?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Recorded node values, in topological order.
    pub fn recorded_values(&self) -> Vec<Tensor> {
        self.nodes.borrow().iter().map(|n| n.value.clone()).collect()
    }
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    graph: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        if var.graph.id != self.graph {
            return None;
        }
        self.grads.get(var.id.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `var`, zero when the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

impl<'g> Var<'g> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Tensor {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.value_ref(self.id).shape().to_vec()
    }

    pub fn dtype(&self) -> DType {
        self.graph.value_ref(self.id).dtype()
    }

    pub fn item(&self) -> Result<f64> {
        self.graph.value_ref(self.id).item()
    }

    fn unary(self, kind: OpKind) -> Result<Var<'g>> {
        self.graph.apply(kind, &[self])
    }

    fn binary(self, kind: OpKind, rhs: Var<'g>) -> Result<Var<'g>> {
        self.graph.apply(kind, &[self, rhs])
    }

    pub fn add(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(OpKind::Add, rhs)
    }

    pub fn sub(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(OpKind::Sub, rhs)
    }

    pub fn mul(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(OpKind::Mul, rhs)
    }

    pub fn matmul(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.binary(OpKind::MatMul, rhs)
    }

    pub fn scale(self, c: f64) -> Result<Var<'g>> {
        self.unary(OpKind::Scale(c))
    }

    pub fn sum(self) -> Result<Var<'g>> {
        self.unary(OpKind::Sum { axis: None })
    }

    pub fn sum_axis(self, axis: usize) -> Result<Var<'g>> {
        self.unary(OpKind::Sum { axis: Some(axis) })
    }

    pub fn mean(self) -> Result<Var<'g>> {
        self.unary(OpKind::Mean)
    }

    pub fn square(self) -> Result<Var<'g>> {
        self.unary(OpKind::Square)
    }

    pub fn sqrt(self) -> Result<Var<'g>> {
        self.unary(OpKind::Sqrt)
    }

    pub fn tanh(self) -> Result<Var<'g>> {
        self.unary(OpKind::Tanh)
    }

    pub fn relu(self) -> Result<Var<'g>> {
        self.unary(OpKind::Relu)
    }

    pub fn sin(self) -> Result<Var<'g>> {
        self.unary(OpKind::Sin)
    }

    pub fn cos(self) -> Result<Var<'g>> {
        self.unary(OpKind::Cos)
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g>> {
        self.unary(OpKind::Reshape(shape.into()))
    }

    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'g>> {
        self.unary(OpKind::Slice { axis, start, end })
    }

    pub fn transpose(self) -> Result<Var<'g>> {
        self.unary(OpKind::Transpose)
    }

    /// `sum((self - target)²)`.
    pub fn squared_distance(self, target: Var<'g>) -> Result<Var<'g>> {
        self.sub(target)?.square()?.sum()
    }
}
