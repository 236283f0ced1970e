use std::cell::{Cell, RefCell};
use std::sync::Arc;

use super::kernels;
use super::tensor::Tensor;
use super::NumericFault;

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(f64),
    Offset(f64),
    MatMul,
    Transpose,
    Tanh,
    Relu,
    Exp,
    Log,
    Sum,
    Mean,
    SumLast,
    BroadcastLast(usize),
    SumRows,
    BroadcastRows(usize),
    BroadcastScalar(Vec<usize>),
    Concat(usize),
    Slice { axis: usize, start: usize, len: usize },
    IndexSelect { indices: Arc<Vec<usize>>, shape: Vec<usize> },
    IndexScatter { indices: Arc<Vec<usize>>, shape: Vec<usize> },
    LogSoftmax,
    Clip { lo: f64, hi: f64 },
    Minimum,
    Reshape(Vec<usize>),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Const => "const",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Scale(_) => "scale",
            Op::Offset(_) => "offset",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumLast => "sum_last",
            Op::BroadcastLast(_) => "broadcast_last",
            Op::SumRows => "sum_rows",
            Op::BroadcastRows(_) => "broadcast_rows",
            Op::BroadcastScalar(_) => "broadcast_scalar",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::IndexSelect { .. } => "index_select",
            Op::IndexScatter { .. } => "index_scatter",
            Op::LogSoftmax => "log_softmax",
            Op::Clip { .. } => "clip",
            Op::Minimum => "minimum",
            Op::Reshape(_) => "reshape",
        }
    }
}

struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor,
    requires_grad: bool,
}

thread_local! {
    static FLIP_TANH_BACKWARD: Cell<bool> = const { Cell::new(false) };
}

/// Test fixture: flips the sign of the tanh backward rule on the current
/// thread so oracle suites can demonstrate that they catch a broken rule.
pub fn set_tanh_backward_sign_error(enabled: bool) {
    FLIP_TANH_BACKWARD.with(|c| c.set(enabled));
}

/// Append-only record of forward operations.
///
/// Nodes are stored in insertion order, which is also a topological order.
/// Backward walks them in strict reverse order. Gradients requested with
/// [`Tape::grad_graph`] are themselves recorded on the tape, so a second
/// backward pass through them is valid.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    fault: RefCell<Option<NumericFault>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({:?})", self.id, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            fault: RefCell::new(None),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Differentiable input.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf, Vec::new(), value, true)
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Const, Vec::new(), value, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    /// Copies the value of `v` into a new constant node with no backward edge.
    pub fn detach<'t>(&'t self, v: Var<'t>) -> Var<'t> {
        self.constant(v.value())
    }

    /// First numeric fault recorded by a forward or backward op, if any.
    pub fn fault(&self) -> Option<NumericFault> {
        self.fault.borrow().clone()
    }

    pub fn check(&self) -> Result<(), NumericFault> {
        match self.fault() {
            Some(f) => Err(f),
            None => Ok(()),
        }
    }

    /// Op kind of a node (for structural assertions on built graphs).
    pub fn op_name(&self, v: Var<'_>) -> &'static str {
        self.nodes.borrow()[v.id].op.name()
    }

    /// Input handles of a node.
    pub fn inputs<'t>(&'t self, v: Var<'t>) -> Vec<Var<'t>> {
        self.nodes.borrow()[v.id]
            .inputs
            .iter()
            .map(|&id| Var { tape: self, id })
            .collect()
    }

    pub fn requires_grad(&self, v: Var<'_>) -> bool {
        self.nodes.borrow()[v.id].requires_grad
    }

    fn push(&self, op: Op, inputs: Vec<usize>, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        if !value.is_finite() {
            let mut fault = self.fault.borrow_mut();
            if fault.is_none() {
                *fault = Some(NumericFault {
                    op: op.name(),
                    node: id,
                });
            }
        }
        nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var { tape: self, id }
    }

    fn value_of(&self, id: usize) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    fn record<'t>(&'t self, op: Op, inputs: &[Var<'t>]) -> Var<'t> {
        let values: Vec<Tensor> = inputs.iter().map(|v| self.value_of(v.id)).collect();
        let out = kernels::forward(&op, &values);
        let requires = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.id].requires_grad)
        };
        self.push(op, inputs.iter().map(|v| v.id).collect(), out, requires)
    }

    /// Gradients of scalar `root` with respect to `wrt`, returned as plain
    /// tensors. Nodes created during the pass are discarded afterwards.
    pub fn grad<'t>(&'t self, root: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Tensor>, NumericFault> {
        let mark = self.len();
        let result = self
            .backward(root, wrt)
            .map(|grads| grads.iter().map(|g| g.value()).collect());
        self.nodes.borrow_mut().truncate(mark);
        result
    }

    /// Gradients of scalar `root` with respect to `wrt`, recorded as tape
    /// nodes so they can be differentiated again.
    pub fn grad_graph<'t>(
        &'t self,
        root: Var<'t>,
        wrt: &[Var<'t>],
    ) -> Result<Vec<Var<'t>>, NumericFault> {
        self.backward(root, wrt)
    }

    fn backward<'t>(&'t self, root: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>, NumericFault> {
        assert!(
            std::ptr::eq(root.tape, self),
            "backward root belongs to a different tape"
        );
        let root_len = self.nodes.borrow()[root.id].value.len();
        assert_eq!(root_len, 1, "backward requires a scalar root");
        self.check()?;

        let n = root.id + 1;
        // relevant[i]: node i lies on a path from some wrt node.
        let mut relevant = vec![false; n];
        {
            let nodes = self.nodes.borrow();
            for w in wrt {
                if w.id < n {
                    relevant[w.id] = true;
                }
            }
            for i in 0..n {
                if !relevant[i] {
                    relevant[i] = nodes[i].inputs.iter().any(|&j| relevant[j]);
                }
            }
        }

        let mut grads: Vec<Option<Var<'t>>> = vec![None; n];
        let root_shape = self.nodes.borrow()[root.id].value.shape().to_vec();
        grads[root.id] = Some(self.constant(Tensor::full(&root_shape, 1.0)));

        for i in (0..n).rev() {
            if !relevant[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let (op, inputs) = {
                let nodes = self.nodes.borrow();
                (nodes[i].op.clone(), nodes[i].inputs.clone())
            };
            if inputs.is_empty() {
                continue;
            }
            let needed: Vec<bool> = inputs.iter().map(|&j| relevant[j]).collect();
            let contribs = self.vjp(i, &op, &inputs, &needed, g);
            for ((&j, c), need) in inputs.iter().zip(contribs).zip(needed) {
                if !need {
                    continue;
                }
                if let Some(c) = c {
                    grads[j] = Some(match grads[j] {
                        Some(prev) => prev + c,
                        None => c,
                    });
                }
            }
        }
        self.check()?;

        Ok(wrt
            .iter()
            .map(|w| match grads.get(w.id).copied().flatten() {
                Some(g) => g,
                None => self.constant(Tensor::zeros(w.value().shape())),
            })
            .collect())
    }

    fn vjp<'t>(
        &'t self,
        id: usize,
        op: &Op,
        inputs: &[usize],
        needed: &[bool],
        g: Var<'t>,
    ) -> Vec<Option<Var<'t>>> {
        let var = |j: usize| Var { tape: self, id: j };
        let out = var(id);
        let x = |k: usize| var(inputs[k]);
        let want = |k: usize| needed[k];
        match op {
            Op::Leaf | Op::Const => Vec::new(),
            Op::Add => vec![Some(g), Some(g)],
            Op::Sub => vec![Some(g), want(1).then(|| -g)],
            Op::Mul => vec![want(0).then(|| g * x(1)), want(1).then(|| g * x(0))],
            Op::Div => vec![
                want(0).then(|| g / x(1)),
                want(1).then(|| -((g * out) / x(1))),
            ],
            Op::Neg => vec![Some(-g)],
            Op::Scale(c) => vec![Some(g.scale(*c))],
            Op::Offset(_) => vec![Some(g)],
            Op::MatMul => vec![
                want(0).then(|| g.matmul(x(1).t())),
                want(1).then(|| x(0).t().matmul(g)),
            ],
            Op::Transpose => vec![Some(g.t())],
            Op::Tanh => {
                let d = g - g * out * out;
                if FLIP_TANH_BACKWARD.with(|c| c.get()) {
                    vec![Some(-d)]
                } else {
                    vec![Some(d)]
                }
            }
            Op::Relu => {
                let mask = self.value_of(inputs[0]).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                vec![Some(g * self.constant(mask))]
            }
            Op::Exp => vec![Some(g * out)],
            Op::Log => vec![Some(g / x(0))],
            Op::Sum => {
                let shape = self.value_of(inputs[0]).shape().to_vec();
                vec![Some(g.broadcast_to(&shape))]
            }
            Op::Mean => {
                let v = self.value_of(inputs[0]);
                let n = v.len() as f64;
                vec![Some(g.broadcast_to(v.shape()).scale(1.0 / n))]
            }
            Op::SumLast => {
                let n = self.value_of(inputs[0]).last_dim();
                vec![Some(g.broadcast_last(n))]
            }
            Op::BroadcastLast(_) => vec![Some(g.sum_last())],
            Op::SumRows => {
                let b = self.value_of(inputs[0]).shape()[0];
                vec![Some(g.broadcast_rows(b))]
            }
            Op::BroadcastRows(_) => vec![Some(g.sum_rows())],
            Op::BroadcastScalar(_) => {
                let shape = self.value_of(inputs[0]).shape().to_vec();
                vec![Some(g.sum().reshape(&shape))]
            }
            Op::Concat(axis) => {
                let mut offset = 0;
                inputs
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| {
                        let v = self.value_of(j);
                        let len = if v.rank() == 0 { 1 } else { v.shape()[*axis] };
                        let piece = want(k).then(|| {
                            let part = g.slice(*axis, offset, len);
                            if v.rank() == 0 {
                                part.reshape(&[])
                            } else {
                                part
                            }
                        });
                        offset += len;
                        piece
                    })
                    .collect()
            }
            Op::Slice { axis, start, len } => {
                let shape = self.value_of(inputs[0]).shape().to_vec();
                let idx = kernels::slice_indices(&shape, *axis, *start, *len);
                vec![Some(g.index_scatter(Arc::new(idx), &shape))]
            }
            Op::IndexSelect { indices, .. } => {
                let shape = self.value_of(inputs[0]).shape().to_vec();
                vec![Some(g.index_scatter(Arc::clone(indices), &shape))]
            }
            Op::IndexScatter { indices, .. } => {
                let shape = self.value_of(inputs[0]).shape().to_vec();
                vec![Some(g.index_select_shaped(Arc::clone(indices), &shape))]
            }
            Op::LogSoftmax => {
                let n = self.value_of(inputs[0]).last_dim();
                vec![Some(g - out.exp() * g.sum_last().broadcast_last(n))]
            }
            Op::Clip { lo, hi } => {
                let mask = self
                    .value_of(inputs[0])
                    .map(|v| if v > *lo && v < *hi { 1.0 } else { 0.0 });
                vec![Some(g * self.constant(mask))]
            }
            Op::Minimum => {
                let a = self.value_of(inputs[0]);
                let b = self.value_of(inputs[1]);
                let first = a.zip_map(&b, |a, b| if a <= b { 1.0 } else { 0.0 });
                let second = first.map(|m| 1.0 - m);
                vec![
                    want(0).then(|| g * self.constant(first)),
                    want(1).then(|| g * self.constant(second)),
                ]
            }
            Op::Reshape(_) => {
                let shape = self.value_of(inputs[0]).shape().to_vec();
                vec![Some(g.reshape(&shape))]
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Value of a single-element node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn unary(self, op: Op) -> Var<'t> {
        self.tape.record(op, &[self])
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(c))
    }

    pub fn offset(self, c: f64) -> Var<'t> {
        self.unary(Op::Offset(c))
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.record(Op::MatMul, &[self, rhs])
    }

    pub fn t(self) -> Var<'t> {
        self.unary(Op::Transpose)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh)
    }

    /// Logistic function expressed through tanh.
    pub fn sigmoid(self) -> Var<'t> {
        self.scale(0.5).tanh().scale(0.5).offset(0.5)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Log)
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(Op::Sum)
    }

    pub fn mean(self) -> Var<'t> {
        self.unary(Op::Mean)
    }

    /// Sum over the trailing axis.
    pub fn sum_last(self) -> Var<'t> {
        self.unary(Op::SumLast)
    }

    /// Repeat along a new trailing axis of size `n`.
    pub fn broadcast_last(self, n: usize) -> Var<'t> {
        self.unary(Op::BroadcastLast(n))
    }

    /// Sum a matrix over its rows, `[b, n] -> [n]`.
    pub fn sum_rows(self) -> Var<'t> {
        self.unary(Op::SumRows)
    }

    /// Stack a vector `b` times, `[n] -> [b, n]`.
    pub fn broadcast_rows(self, b: usize) -> Var<'t> {
        self.unary(Op::BroadcastRows(b))
    }

    /// Broadcast a single-element node to `shape`.
    pub fn broadcast_to(self, shape: &[usize]) -> Var<'t> {
        self.unary(Op::BroadcastScalar(shape.to_vec()))
    }

    /// `[b, n] + [n]` with the bias repeated per row.
    pub fn add_row(self, bias: Var<'t>) -> Var<'t> {
        let b = self.shape()[0];
        self + bias.broadcast_rows(b)
    }

    pub fn concat(parts: &[Var<'t>], axis: usize) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of nothing");
        parts[0].tape.record(Op::Concat(axis), parts)
    }

    pub fn slice(self, axis: usize, start: usize, len: usize) -> Var<'t> {
        self.unary(Op::Slice { axis, start, len })
    }

    /// Gather flat (row-major) positions into a vector.
    pub fn index_select(self, indices: Vec<usize>) -> Var<'t> {
        let n = indices.len();
        self.index_select_shaped(Arc::new(indices), &[n])
    }

    pub(crate) fn index_select_shaped(self, indices: Arc<Vec<usize>>, shape: &[usize]) -> Var<'t> {
        self.unary(Op::IndexSelect {
            indices,
            shape: shape.to_vec(),
        })
    }

    /// Scatter-add the elements of `self` into zeros of `shape` at flat positions.
    pub fn index_scatter(self, indices: Arc<Vec<usize>>, shape: &[usize]) -> Var<'t> {
        self.unary(Op::IndexScatter {
            indices,
            shape: shape.to_vec(),
        })
    }

    /// Picks `self[i, cols[i]]` for each row of a `[b, n]` matrix.
    pub fn gather_rows(self, cols: &[usize]) -> Var<'t> {
        let shape = self.shape();
        let n = shape[shape.len() - 1];
        let idx = cols.iter().enumerate().map(|(i, &c)| {
            assert!(c < n, "column {c} out of range {n}");
            i * n + c
        });
        self.index_select(idx.collect())
    }

    /// Log-probabilities from logits along the trailing axis.
    pub fn log_softmax(self) -> Var<'t> {
        self.unary(Op::LogSoftmax)
    }

    pub fn clip(self, lo: f64, hi: f64) -> Var<'t> {
        assert!(lo <= hi, "clip range [{lo}, {hi}] is empty");
        self.unary(Op::Clip { lo, hi })
    }

    pub fn minimum(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.record(Op::Minimum, &[self, rhs])
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        self.unary(Op::Reshape(shape.to_vec()))
    }

    pub fn detach(self) -> Var<'t> {
        self.tape.detach(self)
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $op:expr) => {
        impl<'t> std::ops::$trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.tape.record($op, &[self, rhs])
            }
        }
    };
}

binary_op!(Add, add, Op::Add);
binary_op!(Sub, sub, Op::Sub);
binary_op!(Mul, mul, Op::Mul);
binary_op!(Div, div, Op::Div);

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(Op::Neg)
    }
}
