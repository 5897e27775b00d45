use std::cell::RefCell;

use super::{AdError, Tensor};

type Id = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Id, Id),
    Add(Id, Id),
    AddRow(Id, Id),
    Sub(Id, Id),
    Mul(Id, Id),
    Div(Id, Id),
    Affine(Id, f64),
    Tanh(Id),
    Sigmoid(Id),
    Relu(Id),
    Exp(Id),
    Sqrt(Id),
    Softmax(Id, usize),
    Concat(Vec<Id>, usize),
    Slice(Id, usize, usize),
    Transpose(Id),
    Reshape(Id),
    Sum(Id),
    Mean(Id),
    MeanAxis(Id, usize),
    Mse(Id, Id),
    NormalizeRows(Id),
    StandardizeCols(Id),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
struct Inner {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Records one forward pass. Single use: `backward` consumes it.
#[derive(Debug, Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: Id,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `var`; all zeros when no path reaches it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match &self.grads[var.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.id]),
        }
    }

    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads[var.id].as_ref()
    }
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<(), AdError> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(AdError::NonFinite { op })
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> AdError {
    AdError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// `c = alpha * a·b + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: slice lengths cover the strided index ranges for every caller
    // below; the output slice is exclusively borrowed and row-major m×n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Splits a shape around `axis` into (outer, len, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Batch dims and matrix dims of a rank-2 or rank-3 operand.
fn mat_dims(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match *shape {
        [m, n] => Some((1, m, n)),
        [b, m, n] => Some((b, m, n)),
        _ => None,
    }
}

fn transpose_last2(t: &Tensor) -> Tensor {
    let (b, m, n) = mat_dims(t.shape()).expect("rank 2 or 3");
    let src = t.data();
    let mut out = vec![0.0; src.len()];
    for bi in 0..b {
        let off = bi * m * n;
        for i in 0..m {
            for j in 0..n {
                out[off + j * m + i] = src[off + i * n + j];
            }
        }
    }
    let mut shape = t.shape().to_vec();
    let r = shape.len();
    shape.swap(r - 1, r - 2);
    Tensor::new(shape, out).expect("same length")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }

    fn requires(&self, ids: &[Id]) -> bool {
        let inner = self.inner.borrow();
        ids.iter().any(|&i| inner.nodes[i].requires_grad)
    }

    fn record(
        &self,
        name: &'static str,
        value: Tensor,
        op: Op,
        inputs: &[Id],
    ) -> Result<Var<'_>, AdError> {
        check_finite(name, &value)?;
        let rg = self.requires(inputs);
        Ok(self.push(value, op, rg))
    }

    /// Reverse sweep from a scalar `loss`. A tape can be swept once.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, AdError> {
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(AdError::TapeConsumed);
        }
        let nodes = &inner.nodes;
        let loss_node = &nodes[loss.id];
        if loss_node.value.len() != 1 {
            return Err(AdError::NotScalar {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::full(loss_node.value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        inner.consumed = true;
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: Id, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn backprop(nodes: &[Node], id: Id, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let out = &nodes[id].value;
    let val = |i: Id| &nodes[i].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (batch, m, k) = mat_dims(av.shape()).expect("checked in forward");
            let (_, _, n) = mat_dims(bv.shape()).expect("checked in forward");
            if nodes[*a].requires_grad {
                let mut da = vec![0.0; av.len()];
                for bi in 0..batch {
                    gemm(
                        m,
                        n,
                        k,
                        &g.data()[bi * m * n..],
                        (n as isize, 1),
                        &bv.data()[bi * k * n..],
                        (1, n as isize),
                        &mut da[bi * m * k..],
                        0.0,
                    );
                }
                accumulate(
                    grads,
                    nodes,
                    *a,
                    Tensor::new(av.shape().to_vec(), da).unwrap(),
                );
            }
            if nodes[*b].requires_grad {
                let mut db = vec![0.0; bv.len()];
                for bi in 0..batch {
                    gemm(
                        k,
                        m,
                        n,
                        &av.data()[bi * m * k..],
                        (1, k as isize),
                        &g.data()[bi * m * n..],
                        (n as isize, 1),
                        &mut db[bi * k * n..],
                        0.0,
                    );
                }
                accumulate(
                    grads,
                    nodes,
                    *b,
                    Tensor::new(bv.shape().to_vec(), db).unwrap(),
                );
            }
        }
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.clone());
        }
        Op::AddRow(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            if nodes[*b].requires_grad {
                let n = val(*b).len();
                let mut db = vec![0.0; n];
                for chunk in g.data().chunks(n) {
                    for (d, x) in db.iter_mut().zip(chunk) {
                        *d += x;
                    }
                }
                accumulate(
                    grads,
                    nodes,
                    *b,
                    Tensor::new(val(*b).shape().to_vec(), db).unwrap(),
                );
            }
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.map(|x| -x));
        }
        Op::Mul(a, b) => {
            accumulate(grads, nodes, *a, zip_map(g, val(*b), |x, y| x * y));
            accumulate(grads, nodes, *b, zip_map(g, val(*a), |x, y| x * y));
        }
        Op::Div(a, b) => {
            accumulate(grads, nodes, *a, zip_map(g, val(*b), |x, y| x / y));
            if nodes[*b].requires_grad {
                // d(a/b)/db = -out/b
                let t = zip_map(out, val(*b), |o, y| -o / y);
                accumulate(grads, nodes, *b, zip_map(g, &t, |x, y| x * y));
            }
        }
        Op::Affine(a, mul) => {
            let mul = *mul;
            accumulate(grads, nodes, *a, g.map(|x| x * mul));
        }
        Op::Tanh(a) => accumulate(grads, nodes, *a, zip_map(g, out, |x, y| x * (1.0 - y * y))),
        Op::Sigmoid(a) => accumulate(grads, nodes, *a, zip_map(g, out, |x, y| x * y * (1.0 - y))),
        Op::Relu(a) => accumulate(
            grads,
            nodes,
            *a,
            zip_map(g, val(*a), |x, y| if y > 0.0 { x } else { 0.0 }),
        ),
        Op::Exp(a) => accumulate(grads, nodes, *a, zip_map(g, out, |x, y| x * y)),
        Op::Sqrt(a) => accumulate(grads, nodes, *a, zip_map(g, out, |x, y| 0.5 * x / y)),
        Op::Softmax(a, axis) => {
            let (outer, len, inner) = axis_extents(out.shape(), *axis);
            let (y, gd) = (out.data(), g.data());
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for j in 0..inner {
                    let idx = |i: usize| (o * len + i) * inner + j;
                    let dot: f64 = (0..len).map(|i| y[idx(i)] * gd[idx(i)]).sum();
                    for i in 0..len {
                        dx[idx(i)] = y[idx(i)] * (gd[idx(i)] - dot);
                    }
                }
            }
            accumulate(
                grads,
                nodes,
                *a,
                Tensor::new(out.shape().to_vec(), dx).unwrap(),
            );
        }
        Op::Concat(ids, axis) => {
            let (outer, total, inner) = axis_extents(out.shape(), *axis);
            let mut offset = 0;
            for &i in ids {
                let shape = val(i).shape();
                let len = shape[*axis];
                if nodes[i].requires_grad {
                    let mut part = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        part.extend_from_slice(&g.data()[start..start + len * inner]);
                    }
                    accumulate(grads, nodes, i, Tensor::new(shape.to_vec(), part).unwrap());
                }
                offset += len;
            }
        }
        Op::Slice(a, axis, start) => {
            let src = val(*a);
            let (outer, total, inner) = axis_extents(src.shape(), *axis);
            let len = out.shape()[*axis];
            let mut dx = vec![0.0; src.len()];
            for o in 0..outer {
                let dst = (o * total + start) * inner;
                let s = o * len * inner;
                dx[dst..dst + len * inner].copy_from_slice(&g.data()[s..s + len * inner]);
            }
            accumulate(
                grads,
                nodes,
                *a,
                Tensor::new(src.shape().to_vec(), dx).unwrap(),
            );
        }
        Op::Transpose(a) => accumulate(grads, nodes, *a, transpose_last2(g)),
        Op::Reshape(a) => {
            let t = g.clone().reshaped(val(*a).shape()).unwrap();
            accumulate(grads, nodes, *a, t);
        }
        Op::Sum(a) => {
            let s = g.item();
            accumulate(grads, nodes, *a, Tensor::full(val(*a).shape(), s));
        }
        Op::Mean(a) => {
            let n = val(*a).len() as f64;
            let s = g.item() / n;
            accumulate(grads, nodes, *a, Tensor::full(val(*a).shape(), s));
        }
        Op::MeanAxis(a, axis) => {
            let src = val(*a);
            let (outer, len, inner) = axis_extents(src.shape(), *axis);
            let mut dx = vec![0.0; src.len()];
            let scale = 1.0 / len as f64;
            for o in 0..outer {
                for i in 0..len {
                    for j in 0..inner {
                        dx[(o * len + i) * inner + j] = g.data()[o * inner + j] * scale;
                    }
                }
            }
            accumulate(
                grads,
                nodes,
                *a,
                Tensor::new(src.shape().to_vec(), dx).unwrap(),
            );
        }
        Op::Mse(a, b) => {
            let n = val(*a).len() as f64;
            let s = 2.0 * g.item() / n;
            let diff = zip_map(val(*a), val(*b), |x, y| s * (x - y));
            if nodes[*b].requires_grad {
                accumulate(grads, nodes, *b, diff.map(|x| -x));
            }
            accumulate(grads, nodes, *a, diff);
        }
        Op::NormalizeRows(a) => {
            let src = val(*a);
            let n = *src.shape().last().unwrap();
            let mut dx = vec![0.0; src.len()];
            for (r, ((xs, ys), gs)) in src
                .data()
                .chunks(n)
                .zip(out.data().chunks(n))
                .zip(g.data().chunks(n))
                .enumerate()
            {
                let norm = xs.iter().map(|x| x * x).sum::<f64>().sqrt();
                let dot: f64 = ys.iter().zip(gs).map(|(y, g)| y * g).sum();
                for c in 0..n {
                    dx[r * n + c] = (gs[c] - ys[c] * dot) / norm;
                }
            }
            accumulate(
                grads,
                nodes,
                *a,
                Tensor::new(src.shape().to_vec(), dx).unwrap(),
            );
        }
        Op::StandardizeCols(a) => {
            let src = val(*a);
            let (rows, cols) = (src.shape()[0], src.shape()[1]);
            let stds = column_stats(src).1;
            let (y, gd) = (out.data(), g.data());
            let mut dx = vec![0.0; src.len()];
            for c in 0..cols {
                let mut mg = 0.0;
                let mut mgy = 0.0;
                for r in 0..rows {
                    mg += gd[r * cols + c];
                    mgy += gd[r * cols + c] * y[r * cols + c];
                }
                mg /= rows as f64;
                mgy /= rows as f64;
                for r in 0..rows {
                    let i = r * cols + c;
                    dx[i] = (gd[i] - mg - y[i] * mgy) / stds[c];
                }
            }
            accumulate(
                grads,
                nodes,
                *a,
                Tensor::new(src.shape().to_vec(), dx).unwrap(),
            );
        }
    }
}

/// Per-column mean and population std of a rank-2 tensor.
pub fn column_stats(t: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    let mut mean = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            mean[c] += t.data()[r * cols + c];
        }
    }
    for m in &mut mean {
        *m /= rows as f64;
    }
    let mut var = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            let d = t.data()[r * cols + c] - mean[c];
            var[c] += d * d;
        }
    }
    let std = var.into_iter().map(|v| (v / rows as f64).sqrt()).collect();
    (mean, std)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Copy of the recorded value.
    pub fn value(&self) -> Tensor {
        self.tape.inner.borrow().nodes[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id]
            .value
            .shape()
            .to_vec()
    }

    /// Scalar value of a one-element var.
    pub fn item(&self) -> f64 {
        self.tape.inner.borrow().nodes[self.id].value.item()
    }

    fn unary(self, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'t>, AdError> {
        let value = self.tape.inner.borrow().nodes[self.id].value.map(f);
        self.tape.record(name, value, op, &[self.id])
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>, AdError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let (a, b) = (&inner.nodes[self.id].value, &inner.nodes[other.id].value);
            if a.shape() != b.shape() {
                return Err(shape_err(name, a, b));
            }
            zip_map(a, b, f)
        };
        self.tape.record(name, value, op, &[self.id, other.id])
    }

    /// Matrix product of rank-2 operands, or batched product of rank-3 operands.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, AdError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let (a, b) = (&inner.nodes[self.id].value, &inner.nodes[other.id].value);
            let dims = (mat_dims(a.shape()), mat_dims(b.shape()));
            let ((ba, m, k), (bb, k2, n)) = match dims {
                (Some(x), Some(y)) if a.rank() == b.rank() => (x, y),
                _ => return Err(shape_err("matmul", a, b)),
            };
            if ba != bb || k != k2 {
                return Err(shape_err("matmul", a, b));
            }
            let mut c = vec![0.0; ba * m * n];
            for bi in 0..ba {
                gemm(
                    m,
                    k,
                    n,
                    &a.data()[bi * m * k..],
                    (k as isize, 1),
                    &b.data()[bi * k * n..],
                    (n as isize, 1),
                    &mut c[bi * m * n..],
                    0.0,
                );
            }
            let shape = if a.rank() == 2 {
                vec![m, n]
            } else {
                vec![ba, m, n]
            };
            Tensor::new(shape, c).unwrap()
        };
        self.tape.record(
            "matmul",
            value,
            Op::MatMul(self.id, other.id),
            &[self.id, other.id],
        )
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, AdError> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    /// Adds a rank-1 `bias` to every row (last axis) of `self`.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>, AdError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let (a, b) = (&inner.nodes[self.id].value, &inner.nodes[bias.id].value);
            if b.rank() != 1 || a.rank() == 0 || a.shape().last() != Some(&b.len()) {
                return Err(shape_err("add_row", a, b));
            }
            let n = b.len();
            let mut out = a.clone();
            for chunk in out.data_mut().chunks_mut(n) {
                for (x, y) in chunk.iter_mut().zip(b.data()) {
                    *x += y;
                }
            }
            out
        };
        self.tape.record(
            "add_row",
            value,
            Op::AddRow(self.id, bias.id),
            &[self.id, bias.id],
        )
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, AdError> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, AdError> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>, AdError> {
        self.binary(other, "div", Op::Div(self.id, other.id), |a, b| a / b)
    }

    /// `mul * x + add`, elementwise.
    pub fn affine(self, mul: f64, add: f64) -> Result<Var<'t>, AdError> {
        self.unary("affine", Op::Affine(self.id, mul), |x| mul * x + add)
    }

    pub fn scale(self, mul: f64) -> Result<Var<'t>, AdError> {
        self.affine(mul, 0.0)
    }

    pub fn tanh(self) -> Result<Var<'t>, AdError> {
        self.unary("tanh", Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(self) -> Result<Var<'t>, AdError> {
        self.unary("sigmoid", Op::Sigmoid(self.id), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn relu(self) -> Result<Var<'t>, AdError> {
        self.unary("relu", Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn exp(self) -> Result<Var<'t>, AdError> {
        self.unary("exp", Op::Exp(self.id), f64::exp)
    }

    pub fn sqrt(self) -> Result<Var<'t>, AdError> {
        self.unary("sqrt", Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t>, AdError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id].value;
            if axis >= a.rank() {
                return Err(AdError::Shape {
                    op: "softmax",
                    lhs: a.shape().to_vec(),
                    rhs: vec![axis],
                });
            }
            let (outer, len, inner_n) = axis_extents(a.shape(), axis);
            let x = a.data();
            let mut y = vec![0.0; x.len()];
            for o in 0..outer {
                for j in 0..inner_n {
                    let idx = |i: usize| (o * len + i) * inner_n + j;
                    let max = (0..len)
                        .map(|i| x[idx(i)])
                        .fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for i in 0..len {
                        let e = (x[idx(i)] - max).exp();
                        y[idx(i)] = e;
                        total += e;
                    }
                    for i in 0..len {
                        y[idx(i)] /= total;
                    }
                }
            }
            Tensor::new(a.shape().to_vec(), y).unwrap()
        };
        self.tape
            .record("softmax", value, Op::Softmax(self.id, axis), &[self.id])
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>, AdError> {
        let first = parts.first().expect("concat of zero tensors");
        let tape = first.tape;
        let value = {
            let inner = tape.inner.borrow();
            let base = &inner.nodes[first.id].value;
            if axis >= base.rank() {
                return Err(shape_err("concat", base, base));
            }
            let mut shape = base.shape().to_vec();
            shape[axis] = 0;
            for p in parts {
                let v = &inner.nodes[p.id].value;
                let compatible = v.rank() == base.rank()
                    && v.shape()
                        .iter()
                        .enumerate()
                        .all(|(i, &s)| i == axis || s == base.shape()[i]);
                if !compatible {
                    return Err(shape_err("concat", base, v));
                }
                shape[axis] += v.shape()[axis];
            }
            let (outer, _, inner_n) = axis_extents(&shape, axis);
            let mut data = Vec::with_capacity(shape.iter().product());
            for o in 0..outer {
                for p in parts {
                    let v = &inner.nodes[p.id].value;
                    let block = v.shape()[axis] * inner_n;
                    data.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
                }
            }
            Tensor::new(shape, data).unwrap()
        };
        let ids: Vec<Id> = parts.iter().map(|p| p.id).collect();
        tape.record("concat", value, Op::Concat(ids.clone(), axis), &ids)
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'t>, AdError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id].value;
            if axis >= a.rank() || start >= end || end > a.shape()[axis] {
                return Err(AdError::Shape {
                    op: "slice",
                    lhs: a.shape().to_vec(),
                    rhs: vec![axis, start, end],
                });
            }
            let (outer, total, inner_n) = axis_extents(a.shape(), axis);
            let len = end - start;
            let mut data = Vec::with_capacity(outer * len * inner_n);
            for o in 0..outer {
                let s = (o * total + start) * inner_n;
                data.extend_from_slice(&a.data()[s..s + len * inner_n]);
            }
            let mut shape = a.shape().to_vec();
            shape[axis] = len;
            Tensor::new(shape, data).unwrap()
        };
        self.tape
            .record("slice", value, Op::Slice(self.id, axis, start), &[self.id])
    }

    /// Swaps the last two axes of a rank-2 or rank-3 tensor.
    pub fn transpose(self) -> Result<Var<'t>, AdError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id].value;
            if mat_dims(a.shape()).is_none() {
                return Err(shape_err("transpose", a, a));
            }
            transpose_last2(a)
        };
        self.tape
            .record("transpose", value, Op::Transpose(self.id), &[self.id])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, AdError> {
        let value = self.tape.inner.borrow().nodes[self.id]
            .value
            .clone()
            .reshaped(shape)?;
        self.tape
            .record("reshape", value, Op::Reshape(self.id), &[self.id])
    }

    pub fn sum(self) -> Result<Var<'t>, AdError> {
        let s = self.tape.inner.borrow().nodes[self.id]
            .value
            .data()
            .iter()
            .sum();
        self.tape
            .record("sum", Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Result<Var<'t>, AdError> {
        let m = {
            let inner = self.tape.inner.borrow();
            let v = &inner.nodes[self.id].value;
            v.data().iter().sum::<f64>() / v.len() as f64
        };
        self.tape
            .record("mean", Tensor::scalar(m), Op::Mean(self.id), &[self.id])
    }

    /// Mean over `axis`, removing it from the shape.
    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>, AdError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id].value;
            if axis >= a.rank() {
                return Err(shape_err("mean_axis", a, a));
            }
            let (outer, len, inner_n) = axis_extents(a.shape(), axis);
            let mut data = vec![0.0; outer * inner_n];
            for o in 0..outer {
                for i in 0..len {
                    for j in 0..inner_n {
                        data[o * inner_n + j] += a.data()[(o * len + i) * inner_n + j];
                    }
                }
            }
            for d in &mut data {
                *d /= len as f64;
            }
            let mut shape = a.shape().to_vec();
            shape.remove(axis);
            Tensor::new(shape, data).unwrap()
        };
        self.tape
            .record("mean_axis", value, Op::MeanAxis(self.id, axis), &[self.id])
    }

    /// Mean squared error against `target`.
    pub fn mse(self, target: Var<'t>) -> Result<Var<'t>, AdError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let (a, b) = (&inner.nodes[self.id].value, &inner.nodes[target.id].value);
            if a.shape() != b.shape() {
                return Err(shape_err("mse", a, b));
            }
            let s: f64 = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            Tensor::scalar(s / a.len() as f64)
        };
        self.tape.record(
            "mse",
            value,
            Op::Mse(self.id, target.id),
            &[self.id, target.id],
        )
    }

    /// Scales every row (last axis) to unit Euclidean norm.
    pub fn normalize_rows(self) -> Result<Var<'t>, AdError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id].value;
            let n = *a.shape().last().ok_or(AdError::Degenerate {
                op: "normalize_rows",
            })?;
            let mut out = a.clone();
            for row in out.data_mut().chunks_mut(n) {
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    return Err(AdError::Degenerate {
                        op: "normalize_rows",
                    });
                }
                row.iter_mut().for_each(|x| *x /= norm);
            }
            out
        };
        self.tape.record(
            "normalize_rows",
            value,
            Op::NormalizeRows(self.id),
            &[self.id],
        )
    }

    /// Z-scores each column of a rank-2 tensor with its own mean and population std.
    pub fn standardize_cols(self) -> Result<Var<'t>, AdError> {
        let value = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id].value;
            if a.rank() != 2 {
                return Err(shape_err("standardize_cols", a, a));
            }
            let (mean, std) = column_stats(a);
            if std.iter().any(|&s| s < 1e-12) {
                return Err(AdError::Degenerate {
                    op: "standardize_cols",
                });
            }
            let cols = a.shape()[1];
            let mut out = a.clone();
            for row in out.data_mut().chunks_mut(cols) {
                for c in 0..cols {
                    row[c] = (row[c] - mean[c]) / std[c];
                }
            }
            out
        };
        self.tape.record(
            "standardize_cols",
            value,
            Op::StandardizeCols(self.id),
            &[self.id],
        )
    }
}
