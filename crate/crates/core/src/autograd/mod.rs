//! Tape-based reverse-mode automatic differentiation over `f64` tensors.
//!
//! Every backward rule is itself written in terms of recorded operations, so
//! a gradient returned by [`Graph::grad`] is an ordinary [`Var`] that can be
//! differentiated again. The gradient penalty relies on this: it needs the
//! parameter gradient of a norm of an input gradient.
//!
//! Nodes are appended in creation order, which is a topological order; a
//! backward sweep simply walks ids downwards.

mod conv;

use std::cell::RefCell;
use std::fmt;
use std::ops;
use std::rc::Rc;

use ndarray::{ArrayD, Axis, Ix2, IxDyn, Slice};

pub use conv::Geometry;

pub type Tensor = ArrayD<f64>;

#[derive(Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    /// Multiply by a constant factor of the same shape. Also the forward of
    /// piecewise-linear activations (leaky ReLU, abs, clamps).
    MulConst(usize, Rc<Tensor>),
    MatMul(usize, usize),
    Transpose(usize),
    Exp(usize),
    Ln(usize),
    Recip(usize),
    Sqrt(usize),
    Sigmoid(usize),
    Tanh(usize),
    LogSigmoid(usize),
    /// Stores `1 - [x > 0]`.
    Elu(usize, Rc<Tensor>),
    Sum(usize),
    SumAxis(usize, usize),
    BroadcastTo(usize),
    SumTo(usize),
    Reshape(usize),
    Permute(usize, Vec<usize>),
    Concat(Vec<usize>, usize),
    Slice(usize, usize, usize),
    Pad(usize, usize, usize),
    Im2Col(usize, Geometry),
    Col2Im(usize, Geometry),
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => vec![*a, *b],
            Concat(xs, _) => xs.clone(),
            Neg(a) | Scale(a, _) | AddScalar(a) | MulConst(a, _) | Transpose(a) | Exp(a)
            | Ln(a) | Recip(a) | Sqrt(a) | Sigmoid(a) | Tanh(a) | LogSigmoid(a) | Elu(a, _)
            | Sum(a) | SumAxis(a, _) | BroadcastTo(a) | SumTo(a) | Reshape(a)
            | Permute(a, _) | Slice(a, _, _) | Pad(a, _, _) | Im2Col(a, _) | Col2Im(a, _) => {
                vec![*a]
            }
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

/// An append-only computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf node. Leaves are constants unless passed as `wrt` to [`grad`](Self::grad).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.leaf(ArrayD::from_elem(IxDyn(&[]), v))
    }

    pub fn zeros(&self, shape: &[usize]) -> Var<'_> {
        self.leaf(ArrayD::zeros(IxDyn(shape)))
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    fn op(&self, id: usize) -> Op {
        self.nodes.borrow()[id].op.clone()
    }

    fn var(&self, id: usize) -> Var<'_> {
        Var { graph: self, id }
    }

    pub fn concat<'g>(&'g self, parts: &[Var<'g>], axis: usize) -> Var<'g> {
        assert!(!parts.is_empty(), "concat of nothing");
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let views: Vec<_> = values.iter().map(|v| v.view()).collect();
        let out = ndarray::concatenate(Axis(axis), &views).expect("concat shapes");
        self.push(out, Op::Concat(parts.iter().map(|p| p.id).collect(), axis))
    }

    /// Gradients of a scalar `output` with respect to each of `wrt`.
    ///
    /// The returned vars live on this graph and can be differentiated again.
    /// Leaves that `output` does not depend on get a zero gradient.
    pub fn grad<'g>(&'g self, output: Var<'g>, wrt: &[Var<'g>]) -> Vec<Var<'g>> {
        assert!(
            output.value().len() == 1,
            "grad needs a scalar output, got shape {:?}",
            output.shape()
        );
        let Some(lowest) = wrt.iter().map(|v| v.id).min() else {
            return vec![];
        };
        let top = output.id;
        // Which nodes in [lowest, top] depend on some wrt var.
        let span = top.saturating_sub(lowest) + 1;
        let mut depends = vec![false; span];
        for v in wrt {
            if v.id <= top {
                depends[v.id - lowest] = true;
            }
        }
        for id in lowest..=top {
            if !depends[id - lowest] {
                depends[id - lowest] = self
                    .op(id)
                    .parents()
                    .iter()
                    .any(|&p| p >= lowest && depends[p - lowest]);
            }
        }
        let mut grads: Vec<Option<Var<'g>>> = vec![None; span];
        if top >= lowest && depends[top - lowest] {
            grads[top - lowest] = Some(self.leaf(ArrayD::ones(output.value().raw_dim())));
        }
        for id in (lowest..=top).rev() {
            let Some(g) = grads[id - lowest] else {
                continue;
            };
            let op = self.op(id);
            if matches!(op, Op::Leaf) {
                continue;
            }
            let need = |p: usize| p >= lowest && depends[p - lowest];
            for (parent, pg) in self.backward(id, &op, g, need) {
                let slot = &mut grads[parent - lowest];
                *slot = Some(match *slot {
                    Some(acc) => acc + pg,
                    None => pg,
                });
            }
        }
        wrt.iter()
            .map(|v| {
                if v.id <= top {
                    grads[v.id - lowest]
                } else {
                    None
                }
                .unwrap_or_else(|| self.leaf(ArrayD::zeros(v.value().raw_dim())))
            })
            .collect()
    }

    fn backward<'g>(
        &'g self,
        id: usize,
        op: &Op,
        g: Var<'g>,
        need: impl Fn(usize) -> bool,
    ) -> Vec<(usize, Var<'g>)> {
        let out = self.var(id);
        let v = |i: usize| self.var(i);
        let mut res = Vec::new();
        let mut emit = |p: usize, f: &dyn Fn() -> Var<'g>| {
            if need(p) {
                res.push((p, f()));
            }
        };
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                emit(*a, &|| g.sum_to(&v(*a).shape()));
                emit(*b, &|| g.sum_to(&v(*b).shape()));
            }
            Op::Sub(a, b) => {
                emit(*a, &|| g.sum_to(&v(*a).shape()));
                emit(*b, &|| (-g).sum_to(&v(*b).shape()));
            }
            Op::Mul(a, b) => {
                emit(*a, &|| (g * v(*b)).sum_to(&v(*a).shape()));
                emit(*b, &|| (g * v(*a)).sum_to(&v(*b).shape()));
            }
            Op::Neg(a) => emit(*a, &|| -g),
            Op::Scale(a, c) => emit(*a, &|| g.scale(*c)),
            Op::AddScalar(a) => emit(*a, &|| g),
            Op::MulConst(a, k) => emit(*a, &|| g.mul_const(k.clone())),
            Op::MatMul(a, b) => {
                emit(*a, &|| g.matmul(v(*b).t()));
                emit(*b, &|| v(*a).t().matmul(g));
            }
            Op::Transpose(a) => emit(*a, &|| g.t()),
            Op::Exp(a) => emit(*a, &|| g * out),
            Op::Ln(a) => emit(*a, &|| g * v(*a).recip()),
            Op::Recip(a) => emit(*a, &|| -(g * out * out)),
            Op::Sqrt(a) => emit(*a, &|| (g * out.recip()).scale(0.5)),
            Op::Sigmoid(a) => emit(*a, &|| g * out * (-out).add_scalar(1.0)),
            Op::Tanh(a) => emit(*a, &|| g * (-(out * out)).add_scalar(1.0)),
            Op::LogSigmoid(a) => emit(*a, &|| g * (-v(*a)).sigmoid()),
            Op::Elu(a, neg) => emit(*a, &|| g * out.mul_const(neg.clone()).add_scalar(1.0)),
            Op::Sum(a) => emit(*a, &|| g.broadcast_to(&v(*a).shape())),
            Op::SumAxis(a, axis) => emit(*a, &|| {
                let mut keep = v(*a).shape();
                keep[*axis] = 1;
                g.reshape(&keep).broadcast_to(&v(*a).shape())
            }),
            Op::BroadcastTo(a) => emit(*a, &|| g.sum_to(&v(*a).shape())),
            Op::SumTo(a) => emit(*a, &|| g.broadcast_to(&v(*a).shape())),
            Op::Reshape(a) => emit(*a, &|| g.reshape(&v(*a).shape())),
            Op::Permute(a, axes) => emit(*a, &|| {
                let mut inv = vec![0; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inv[ax] = i;
                }
                g.permute(&inv)
            }),
            Op::Concat(parts, axis) => {
                let mut start = 0;
                for &p in parts {
                    let len = v(p).shape()[*axis];
                    let s = start;
                    emit(p, &|| g.slice(*axis, s, len));
                    start += len;
                }
            }
            Op::Slice(a, axis, start) => emit(*a, &|| {
                let total = v(*a).shape()[*axis];
                let len = out.shape()[*axis];
                g.pad(*axis, *start, total - start - len)
            }),
            Op::Pad(a, axis, before) => emit(*a, &|| {
                let len = v(*a).shape()[*axis];
                g.slice(*axis, *before, len)
            }),
            Op::Im2Col(a, geo) => emit(*a, &|| g.col2im(*geo)),
            Op::Col2Im(a, geo) => emit(*a, &|| g.im2col(*geo)),
        }
        res
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without overflow or `-inf` for finite `x`.
pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

fn sum_to_shape(x: &Tensor, shape: &[usize]) -> Tensor {
    if x.shape() == shape {
        return x.clone();
    }
    let mut out = x.clone();
    while out.ndim() > shape.len() {
        out = out.sum_axis(Axis(0));
    }
    for (axis, &n) in shape.iter().enumerate() {
        if n == 1 && out.shape()[axis] != 1 {
            out = out.sum_axis(Axis(axis)).insert_axis(Axis(axis));
        }
    }
    assert_eq!(out.shape(), shape, "cannot reduce {:?} to {:?}", x.shape(), shape);
    out
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.len(), 1, "item() on shape {:?}", v.shape());
        *v.iter().next().unwrap()
    }

    fn unary(self, f: impl Fn(f64) -> f64, op: Op) -> Var<'g> {
        let out = self.value().mapv(f);
        self.graph.push(out, op)
    }

    fn binary(self, rhs: Var<'g>, f: impl Fn(&Tensor, &Tensor) -> Tensor, op: Op) -> Var<'g> {
        debug_assert!(std::ptr::eq(self.graph, rhs.graph));
        let out = f(&self.value(), &rhs.value());
        self.graph.push(out, op)
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        self.unary(|x| x * c, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        self.unary(|x| x + c, Op::AddScalar(self.id))
    }

    /// Elementwise product with a constant that has this var's shape.
    pub fn mul_const(self, k: Rc<Tensor>) -> Var<'g> {
        let out = &*self.value() * &*k;
        assert_eq!(out.shape(), self.value().shape(), "mul_const must not broadcast");
        self.graph.push(out, Op::MulConst(self.id, k))
    }

    pub fn matmul(self, rhs: Var<'g>) -> Var<'g> {
        let a = self.value();
        let b = rhs.value();
        let a2 = a.view().into_dimensionality::<Ix2>().expect("matmul lhs must be 2-D");
        let b2 = b.view().into_dimensionality::<Ix2>().expect("matmul rhs must be 2-D");
        let out = a2.dot(&b2).into_dyn();
        self.graph.push(out, Op::MatMul(self.id, rhs.id))
    }

    /// 2-D transpose.
    pub fn t(self) -> Var<'g> {
        let v = self.value();
        assert_eq!(v.ndim(), 2, "t() needs a 2-D tensor");
        let out = v.t().as_standard_layout().into_owned();
        self.graph.push(out, Op::Transpose(self.id))
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(f64::exp, Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'g> {
        self.unary(f64::ln, Op::Ln(self.id))
    }

    pub fn recip(self) -> Var<'g> {
        self.unary(f64::recip, Op::Recip(self.id))
    }

    pub fn sqrt(self) -> Var<'g> {
        self.unary(f64::sqrt, Op::Sqrt(self.id))
    }

    pub fn square(self) -> Var<'g> {
        self * self
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.unary(sigmoid, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Var<'g> {
        self.unary(f64::tanh, Op::Tanh(self.id))
    }

    pub fn log_sigmoid(self) -> Var<'g> {
        self.unary(log_sigmoid, Op::LogSigmoid(self.id))
    }

    pub fn elu(self) -> Var<'g> {
        let x = self.value();
        let neg = Rc::new(x.mapv(|v| if v > 0.0 { 0.0 } else { 1.0 }));
        self.unary(
            |v| if v > 0.0 { v } else { v.exp_m1() },
            Op::Elu(self.id, neg),
        )
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g> {
        let k = self.value().mapv(|v| if v > 0.0 { 1.0 } else { slope });
        self.mul_const(Rc::new(k))
    }

    pub fn abs(self) -> Var<'g> {
        let k = self.value().mapv(|v| if v < 0.0 { -1.0 } else { 1.0 });
        self.mul_const(Rc::new(k))
    }

    /// `max(x, floor)`, gradient passes only where `x > floor`.
    pub fn clamp_min(self, floor: f64) -> Var<'g> {
        let x = self.value();
        let keep = x.mapv(|v| if v > floor { 1.0 } else { 0.0 });
        let fill = x.mapv(|v| if v > floor { 0.0 } else { floor });
        let kept = self.mul_const(Rc::new(keep));
        kept + self.graph.leaf(fill)
    }

    pub fn sum(self) -> Var<'g> {
        let s = self.value().sum();
        self.graph
            .push(ArrayD::from_elem(IxDyn(&[]), s), Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum over one axis, removing it.
    pub fn sum_axis(self, axis: usize) -> Var<'g> {
        let out = self.value().sum_axis(Axis(axis));
        self.graph.push(out, Op::SumAxis(self.id, axis))
    }

    pub fn mean_axis(self, axis: usize) -> Var<'g> {
        let n = self.shape()[axis] as f64;
        self.sum_axis(axis).scale(1.0 / n)
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Var<'g> {
        if self.shape() == shape {
            return self;
        }
        let out = self
            .value()
            .broadcast(IxDyn(shape))
            .unwrap_or_else(|| panic!("cannot broadcast {:?} to {shape:?}", self.shape()))
            .to_owned();
        self.graph.push(out, Op::BroadcastTo(self.id))
    }

    /// Sum broadcast dimensions away so the result has `shape`.
    pub fn sum_to(self, shape: &[usize]) -> Var<'g> {
        if self.shape() == shape {
            return self;
        }
        let out = sum_to_shape(&self.value(), shape);
        self.graph.push(out, Op::SumTo(self.id))
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'g> {
        if self.shape() == shape {
            return self;
        }
        let v = self.value();
        let out = v
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(shape))
            .unwrap_or_else(|_| panic!("cannot reshape {:?} to {shape:?}", v.shape()));
        self.graph.push(out, Op::Reshape(self.id))
    }

    pub fn permute(self, axes: &[usize]) -> Var<'g> {
        let out = self
            .value()
            .view()
            .permuted_axes(IxDyn(axes))
            .as_standard_layout()
            .into_owned();
        self.graph.push(out, Op::Permute(self.id, axes.to_vec()))
    }

    /// `len` entries along `axis` starting at `start`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Var<'g> {
        let v = self.value();
        let out = v
            .slice_axis(Axis(axis), Slice::from(start..start + len))
            .as_standard_layout()
            .into_owned();
        self.graph.push(out, Op::Slice(self.id, axis, start))
    }

    /// Zero-pad along `axis`.
    pub fn pad(self, axis: usize, before: usize, after: usize) -> Var<'g> {
        let v = self.value();
        let mut shape = v.shape().to_vec();
        let len = shape[axis];
        shape[axis] += before + after;
        let mut out = ArrayD::zeros(IxDyn(&shape));
        out.slice_axis_mut(Axis(axis), Slice::from(before..before + len))
            .assign(&*v);
        self.graph.push(out, Op::Pad(self.id, axis, before))
    }

    pub fn im2col(self, geo: Geometry) -> Var<'g> {
        let out = geo.im2col(&self.value());
        self.graph.push(out, Op::Im2Col(self.id, geo))
    }

    pub fn col2im(self, geo: Geometry) -> Var<'g> {
        let out = geo.col2im(&self.value());
        self.graph.push(out, Op::Col2Im(self.id, geo))
    }
}

impl<'g> ops::Add for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, |a, b| a + b, Op::Add(self.id, rhs.id))
    }
}

impl<'g> ops::Sub for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, |a, b| a - b, Op::Sub(self.id, rhs.id))
    }
}

impl<'g> ops::Mul for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, |a, b| a * b, Op::Mul(self.id, rhs.id))
    }
}

impl<'g> ops::Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        self.unary(|x| -x, Op::Neg(self.id))
    }
}
