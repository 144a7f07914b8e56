//! A small dense-tensor reverse-mode autodiff engine.
//!
//! Operations are recorded on a [`Graph`] in creation order, which is already a
//! topological order: an op can only consume nodes that exist when it is built.
//! [`Graph::backward`] walks that list once in reverse.
//!
//! Broadcasting is limited to adding a bias row to every row of a matrix.

use std::cell::RefCell;
use std::fmt;

use crate::error::{Error, Result};

/// Row-major `f64` array.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Stacks equal-length rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim(
                    "from_rows",
                    format!("row {i} has length {}, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Tensor::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar(), "item() on shape {:?}", self.shape);
        self.data[0]
    }

    /// Rows of a 2-D tensor; a 1-D tensor is a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            1 => self.shape[0],
            _ => self.numel(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `a (r×k) · b (k×c)`, plain i-k-j loop.
fn matmul_raw(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &mut out[i * c..(i + 1) * c];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * c..(p + 1) * c];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

/// Operation kinds accepted by [`Graph::apply`].
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    /// Same-shape sum, or a `[c]` / `[1, c]` bias added to each row of `[r, c]`.
    Add,
    Sub,
    Mul,
    Relu,
    Exp,
    Log,
    ClampMin(f64),
    SoftmaxRows,
    Dot,
    L2NormalizeRows,
    Sum,
    Mean,
    Scale(f64),
    Transpose,
    Reshape(Vec<usize>),
    SelectRows(Vec<usize>),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRowBias(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    ClampMin(usize, f64),
    SoftmaxRows(usize),
    Dot(usize, usize),
    L2NormalizeRows(usize, Vec<f64>),
    Sum(usize),
    Mean(usize),
    Scale(usize, f64),
    Transpose(usize),
    Reshape(usize),
    SelectRows(usize, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Recorded computation. Nodes are appended in evaluation order.
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
        write!(f, "Var#{}", self.id)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var<'_>) -> Tensor {
        self.nodes.borrow()[v.id].value.clone()
    }

    pub fn grad(&self, v: Var<'_>) -> Option<Tensor> {
        self.nodes.borrow()[v.id].grad.clone()
    }

    pub fn requires_grad(&self, v: Var<'_>) -> bool {
        self.nodes.borrow()[v.id].requires_grad
    }

    fn shape_of(&self, id: usize) -> Vec<usize> {
        self.nodes.borrow()[id].value.shape.clone()
    }

    /// Evaluates `kind` on `inputs` and records it.
    pub fn apply<'g>(&'g self, kind: OpKind, inputs: &[Var<'g>]) -> Result<Var<'g>> {
        let arity = match kind {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Dot => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::contract(format!(
                "{kind:?} takes {arity} input(s), got {}",
                inputs.len()
            )));
        }
        let a = inputs[0].id;
        let b = inputs.get(1).map(|v| v.id);
        let (value, op) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a].value;
            let y = b.map(|b| &nodes[b].value);
            eval(&kind, a, x, b, y)?
        };
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.id].requires_grad)
        };
        Ok(self.push(value, op, requires_grad))
    }

    /// Populates `grad` on every `requires_grad` ancestor of a scalar `root`.
    /// Gradients from earlier passes are cleared first.
    pub fn backward(&self, root: Var<'_>) -> Result<()> {
        let mut nodes = self.nodes.borrow_mut();
        if !nodes[root.id].value.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                nodes[root.id].value.shape
            )));
        }
        for n in nodes.iter_mut() {
            n.grad = None;
        }
        if !nodes[root.id].requires_grad {
            return Ok(());
        }
        let root_shape = nodes[root.id].value.shape.clone();
        nodes[root.id].grad = Some(Tensor::new(root_shape, vec![1.0]).expect("scalar"));

        for id in (0..=root.id).rev() {
            let Some(g) = nodes[id].grad.take() else {
                continue;
            };
            if !nodes[id].requires_grad {
                nodes[id].grad = Some(g);
                continue;
            }
            let contributions = vjp(&nodes, id, &g);
            nodes[id].grad = Some(g);
            for (input, delta) in contributions {
                if !nodes[input].requires_grad {
                    continue;
                }
                match nodes[input].grad.as_mut() {
                    Some(acc) => acc.add_assign(&delta),
                    None => nodes[input].grad = Some(delta),
                }
            }
        }
        Ok(())
    }
}

fn eval(
    kind: &OpKind,
    a: usize,
    x: &Tensor,
    b: Option<usize>,
    y: Option<&Tensor>,
) -> Result<(Tensor, Op)> {
    let need_2d = |op: &'static str, t: &Tensor| -> Result<(usize, usize)> {
        if t.shape.len() != 2 {
            return Err(Error::dim(op, format!("expected a matrix, got {:?}", t.shape)));
        }
        Ok((t.shape[0], t.shape[1]))
    };
    let out = match kind {
        OpKind::MatMul => {
            let (y, b) = (y.expect("arity"), b.expect("arity"));
            let (r, k) = need_2d("matmul", x)?;
            let (k2, c) = need_2d("matmul", y)?;
            if k != k2 {
                return Err(Error::dim(
                    "matmul",
                    format!("{:?} x {:?}", x.shape, y.shape),
                ));
            }
            let data = matmul_raw(&x.data, &y.data, r, k, c);
            (Tensor { shape: vec![r, c], data }, Op::MatMul(a, b))
        }
        OpKind::Add => {
            let (y, b) = (y.expect("arity"), b.expect("arity"));
            if x.shape == y.shape {
                (x.zip(y, |p, q| p + q), Op::Add(a, b))
            } else if x.shape.len() == 2
                && y.numel() == x.shape[1]
                && (y.shape.len() == 1 || (y.shape.len() == 2 && y.shape[0] == 1))
            {
                let c = x.shape[1];
                let mut out = x.clone();
                for row in out.data.chunks_mut(c) {
                    for (o, &bv) in row.iter_mut().zip(&y.data) {
                        *o += bv;
                    }
                }
                (out, Op::AddRowBias(a, b))
            } else {
                return Err(Error::dim("add", format!("{:?} + {:?}", x.shape, y.shape)));
            }
        }
        OpKind::Sub | OpKind::Mul => {
            let (y, b) = (y.expect("arity"), b.expect("arity"));
            if x.shape != y.shape {
                return Err(Error::dim(
                    if *kind == OpKind::Sub { "sub" } else { "mul" },
                    format!("{:?} vs {:?}", x.shape, y.shape),
                ));
            }
            if *kind == OpKind::Sub {
                (x.zip(y, |p, q| p - q), Op::Sub(a, b))
            } else {
                (x.zip(y, |p, q| p * q), Op::Mul(a, b))
            }
        }
        OpKind::Dot => {
            let (y, b) = (y.expect("arity"), b.expect("arity"));
            if x.numel() != y.numel() {
                return Err(Error::dim("dot", format!("{:?} . {:?}", x.shape, y.shape)));
            }
            let s: f64 = x.data.iter().zip(&y.data).map(|(p, q)| p * q).sum();
            (Tensor::scalar(s), Op::Dot(a, b))
        }
        OpKind::Relu => (x.map(|v| v.max(0.0)), Op::Relu(a)),
        OpKind::Exp => (x.map(f64::exp), Op::Exp(a)),
        OpKind::Log => (x.map(f64::ln), Op::Log(a)),
        OpKind::ClampMin(lo) => (x.map(|v| v.max(*lo)), Op::ClampMin(a, *lo)),
        OpKind::Scale(s) => (x.map(|v| v * s), Op::Scale(a, *s)),
        OpKind::SoftmaxRows => {
            let c = x.cols();
            let mut out = x.clone();
            for row in out.data.chunks_mut(c.max(1)) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    z += *v;
                }
                for v in row.iter_mut() {
                    *v /= z;
                }
            }
            (out, Op::SoftmaxRows(a))
        }
        OpKind::L2NormalizeRows => {
            let c = x.cols();
            let mut out = x.clone();
            let mut norms = Vec::with_capacity(x.rows());
            for (i, row) in out.data.chunks_mut(c.max(1)).enumerate() {
                let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n == 0.0 || !n.is_finite() {
                    return Err(Error::DegenerateEmbedding { row: i });
                }
                for v in row.iter_mut() {
                    *v /= n;
                }
                norms.push(n);
            }
            (out, Op::L2NormalizeRows(a, norms))
        }
        OpKind::Sum => (Tensor::scalar(x.data.iter().sum()), Op::Sum(a)),
        OpKind::Mean => {
            if x.numel() == 0 {
                return Err(Error::dim("mean", "empty tensor"));
            }
            let n = x.numel() as f64;
            (Tensor::scalar(x.data.iter().sum::<f64>() / n), Op::Mean(a))
        }
        OpKind::Transpose => {
            let (r, c) = need_2d("transpose", x)?;
            (
                Tensor {
                    shape: vec![c, r],
                    data: transpose_raw(&x.data, r, c),
                },
                Op::Transpose(a),
            )
        }
        OpKind::Reshape(shape) => {
            let t = Tensor::new(shape.clone(), x.data.clone())
                .map_err(|_| Error::dim("reshape", format!("{:?} -> {shape:?}", x.shape)))?;
            (t, Op::Reshape(a))
        }
        OpKind::SelectRows(idx) => {
            let (r, c) = need_2d("select_rows", x)?;
            let mut data = Vec::with_capacity(idx.len() * c);
            for &i in idx {
                if i >= r {
                    return Err(Error::Index { index: i, len: r });
                }
                data.extend_from_slice(&x.data[i * c..(i + 1) * c]);
            }
            (
                Tensor {
                    shape: vec![idx.len(), c],
                    data,
                },
                Op::SelectRows(a, idx.clone()),
            )
        }
    };
    Ok(out)
}

/// Vector-Jacobian products of node `id` for upstream gradient `g`.
fn vjp(nodes: &[Node], id: usize, g: &Tensor) -> Vec<(usize, Tensor)> {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => {
            let (x, y) = (&nodes[*a].value, &nodes[*b].value);
            let (r, k, c) = (x.shape[0], x.shape[1], y.shape[1]);
            let yt = transpose_raw(&y.data, k, c);
            let xt = transpose_raw(&x.data, r, k);
            vec![
                (
                    *a,
                    Tensor {
                        shape: x.shape.clone(),
                        data: matmul_raw(&g.data, &yt, r, c, k),
                    },
                ),
                (
                    *b,
                    Tensor {
                        shape: y.shape.clone(),
                        data: matmul_raw(&xt, &g.data, k, r, c),
                    },
                ),
            ]
        }
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::AddRowBias(a, b) => {
            let bias = &nodes[*b].value;
            let c = bias.numel();
            let mut db = vec![0.0; c];
            for row in g.data.chunks(c) {
                for (d, v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
            vec![
                (*a, g.clone()),
                (
                    *b,
                    Tensor {
                        shape: bias.shape.clone(),
                        data: db,
                    },
                ),
            ]
        }
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
        Op::Mul(a, b) => vec![
            (*a, g.zip(&nodes[*b].value, |p, q| p * q)),
            (*b, g.zip(&nodes[*a].value, |p, q| p * q)),
        ],
        Op::Dot(a, b) => {
            let s = g.item();
            let (x, y) = (&nodes[*a].value, &nodes[*b].value);
            vec![(*a, y.map(|v| v * s).reshaped(&x.shape)), (*b, x.map(|v| v * s).reshaped(&y.shape))]
        }
        Op::Relu(a) => vec![(*a, g.zip(&nodes[*a].value, |gv, x| if x > 0.0 { gv } else { 0.0 }))],
        Op::Exp(a) => vec![(*a, g.zip(out, |gv, y| gv * y))],
        Op::Log(a) => vec![(*a, g.zip(&nodes[*a].value, |gv, x| gv / x))],
        Op::ClampMin(a, lo) => {
            let lo = *lo;
            vec![(*a, g.zip(&nodes[*a].value, |gv, x| if x >= lo { gv } else { 0.0 }))]
        }
        Op::Scale(a, s) => {
            let s = *s;
            vec![(*a, g.map(|v| v * s))]
        }
        Op::SoftmaxRows(a) => {
            let c = out.cols().max(1);
            let mut dx = g.clone();
            for (drow, yrow) in dx.data.chunks_mut(c).zip(out.data.chunks(c)) {
                let inner: f64 = drow.iter().zip(yrow).map(|(gv, y)| gv * y).sum();
                for (d, y) in drow.iter_mut().zip(yrow) {
                    *d = y * (*d - inner);
                }
            }
            vec![(*a, dx)]
        }
        Op::L2NormalizeRows(a, norms) => {
            let c = out.cols().max(1);
            let mut dx = g.clone();
            for ((drow, yrow), n) in dx.data.chunks_mut(c).zip(out.data.chunks(c)).zip(norms) {
                let inner: f64 = drow.iter().zip(yrow).map(|(gv, y)| gv * y).sum();
                for (d, y) in drow.iter_mut().zip(yrow) {
                    *d = (*d - y * inner) / n;
                }
            }
            vec![(*a, dx)]
        }
        Op::Sum(a) => {
            let x = &nodes[*a].value;
            let s = g.item();
            vec![(*a, x.map(|_| s))]
        }
        Op::Mean(a) => {
            let x = &nodes[*a].value;
            let s = g.item() / x.numel() as f64;
            vec![(*a, x.map(|_| s))]
        }
        Op::Transpose(a) => {
            let x = &nodes[*a].value;
            let (r, c) = (x.shape[0], x.shape[1]);
            vec![(
                *a,
                Tensor {
                    shape: vec![r, c],
                    data: transpose_raw(&g.data, c, r),
                },
            )]
        }
        Op::Reshape(a) => vec![(*a, g.clone().reshaped(&nodes[*a].value.shape))],
        Op::SelectRows(a, idx) => {
            let x = &nodes[*a].value;
            let c = x.shape[1];
            let mut dx = Tensor::zeros(&x.shape);
            for (k, &i) in idx.iter().enumerate() {
                for j in 0..c {
                    dx.data[i * c + j] += g.data[k * c + j];
                }
            }
            vec![(*a, dx)]
        }
    }
}

impl Tensor {
    fn reshaped(mut self, shape: &[usize]) -> Tensor {
        self.shape = shape.to_vec();
        self
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.graph.value(*self)
    }

    /// Scalar value; panics in debug builds if the node is not a scalar.
    pub fn item(&self) -> f64 {
        self.graph.nodes.borrow()[self.id].value.item()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.shape_of(self.id)
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.graph.grad(*self)
    }

    /// Same value as a fresh constant leaf, cutting gradient flow.
    pub fn detach(&self) -> Var<'g> {
        self.graph.constant(self.value())
    }

    fn unary(self, kind: OpKind) -> Var<'g> {
        self.graph
            .apply(kind, &[self])
            .expect("elementwise unary ops accept any shape")
    }

    pub fn matmul(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.graph.apply(OpKind::MatMul, &[self, rhs])
    }

    pub fn add(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.graph.apply(OpKind::Add, &[self, rhs])
    }

    pub fn sub(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.graph.apply(OpKind::Sub, &[self, rhs])
    }

    pub fn mul(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.graph.apply(OpKind::Mul, &[self, rhs])
    }

    pub fn dot(self, rhs: Var<'g>) -> Result<Var<'g>> {
        self.graph.apply(OpKind::Dot, &[self, rhs])
    }

    pub fn relu(self) -> Var<'g> {
        self.unary(OpKind::Relu)
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(OpKind::Exp)
    }

    pub fn ln(self) -> Var<'g> {
        self.unary(OpKind::Log)
    }

    pub fn clamp_min(self, lo: f64) -> Var<'g> {
        self.unary(OpKind::ClampMin(lo))
    }

    pub fn scale(self, s: f64) -> Var<'g> {
        self.unary(OpKind::Scale(s))
    }

    pub fn sum(self) -> Var<'g> {
        self.unary(OpKind::Sum)
    }

    pub fn mean(self) -> Result<Var<'g>> {
        self.graph.apply(OpKind::Mean, &[self])
    }

    pub fn softmax_rows(self) -> Var<'g> {
        self.unary(OpKind::SoftmaxRows)
    }

    pub fn l2_normalize_rows(self) -> Result<Var<'g>> {
        self.graph.apply(OpKind::L2NormalizeRows, &[self])
    }

    pub fn transpose(self) -> Result<Var<'g>> {
        self.graph.apply(OpKind::Transpose, &[self])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        self.graph.apply(OpKind::Reshape(shape.to_vec()), &[self])
    }

    pub fn select_rows(self, rows: &[usize]) -> Result<Var<'g>> {
        self.graph.apply(OpKind::SelectRows(rows.to_vec()), &[self])
    }

    /// One row of a matrix as a `[1, c]` matrix.
    pub fn row(self, i: usize) -> Result<Var<'g>> {
        self.select_rows(&[i])
    }
}

/// Largest `|analytic - central difference| / max(1, |analytic|)` over the
/// coordinates of `x`.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, Var<'g>) -> Result<Var<'g>>,
{
    if !(step > 0.0) {
        return Err(Error::contract(format!("step must be positive, got {step}")));
    }
    let analytic = {
        let g = Graph::new();
        let xv = g.param(x.clone());
        let y = f(&g, xv)?;
        if !y.value().all_finite() {
            return Err(Error::Numeric("function value is not finite".into()));
        }
        g.backward(y)?;
        xv.grad().unwrap_or_else(|| Tensor::zeros(x.shape()))
    };
    if !analytic.all_finite() {
        return Err(Error::Numeric("analytic gradient is not finite".into()));
    }
    let eval_at = |probe: Tensor| -> Result<f64> {
        let g = Graph::new();
        let xv = g.constant(probe);
        let y = f(&g, xv)?;
        if !y.value().is_scalar() {
            return Err(Error::contract("grad_check needs a scalar function"));
        }
        Ok(y.item())
    };
    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data[i] += step;
        let mut minus = x.clone();
        minus.data[i] -= step;
        let numeric = (eval_at(plus)? - eval_at(minus)?) / (2.0 * step);
        if !numeric.is_finite() {
            return Err(Error::Numeric(format!("finite difference at coordinate {i} is not finite")));
        }
        let a = analytic.data[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
