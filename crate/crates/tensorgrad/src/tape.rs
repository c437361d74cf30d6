//! Operation recording and reverse-mode gradient replay.
//!
//! Every operation on a [`Var`] evaluates eagerly and appends a node holding
//! the result plus enough bookkeeping to propagate gradients back to its
//! parents. [`Tape::backward`] walks the nodes in reverse creation order,
//! which is a valid reverse topological order because parents always precede
//! their children.
//!
//! Matrices are 2-D tensors; most operations require 2-D operands. Scalars
//! have shape `[]`.

use std::cell::{Ref, RefCell};

use crate::error::TensorError;
use crate::tensor::{matmul_nt, matmul_tn, Tensor};

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    AddScalar(usize, usize),
    Scale(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Log(usize),
    SoftmaxRows(usize),
    LayerNormRows(usize, Vec<f64>),
    Sum(usize),
    Mean(usize),
    Bilinear(usize, usize, usize),
    BceWithLogits(usize, Tensor),
    CrossEntropy(usize, Vec<usize>),
    Mse(usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// A record of executed operations.
///
/// A tape is single-threaded; build one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.value())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` influenced it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient with respect to `var`; zeros when `var` does not reach the loss.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get_id(var.id)
    }

    pub(crate) fn get_id(&self, id: usize) -> Tensor {
        match &self.grads[id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[id]),
        }
    }
}

fn two_d(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    if t.shape().len() != 2 {
        return Err(TensorError::shape(op, t.shape(), &[]));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record an input value. Gradients are available for every leaf.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Concatenate matrices along columns (equal row counts).
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
        let out = {
            let nodes = self.nodes.borrow();
            let rows = match parts.first() {
                Some(p) => two_d("concat_cols", &nodes[p.id].value)?.0,
                None => return Err(TensorError::shape("concat_cols", &[], &[])),
            };
            let mut widths = Vec::with_capacity(parts.len());
            for p in parts {
                let (r, c) = two_d("concat_cols", &nodes[p.id].value)?;
                if r != rows {
                    return Err(TensorError::shape(
                        "concat_cols",
                        nodes[parts[0].id].value.shape(),
                        nodes[p.id].value.shape(),
                    ));
                }
                widths.push(c);
            }
            let total: usize = widths.iter().sum();
            let mut out = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for (p, &w) in parts.iter().zip(&widths) {
                    out.extend_from_slice(&nodes[p.id].value.data()[r * w..(r + 1) * w]);
                }
            }
            Tensor::new(&[rows, total], out)?
        };
        Ok(self.push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect())))
    }

    /// Stack matrices along rows (equal column counts).
    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
        let out = {
            let nodes = self.nodes.borrow();
            let cols = match parts.first() {
                Some(p) => two_d("concat_rows", &nodes[p.id].value)?.1,
                None => return Err(TensorError::shape("concat_rows", &[], &[])),
            };
            let mut data = Vec::new();
            let mut rows = 0;
            for p in parts {
                let (r, c) = two_d("concat_rows", &nodes[p.id].value)?;
                if c != cols {
                    return Err(TensorError::shape(
                        "concat_rows",
                        nodes[parts[0].id].value.shape(),
                        nodes[p.id].value.shape(),
                    ));
                }
                rows += r;
                data.extend_from_slice(nodes[p.id].value.data());
            }
            Tensor::new(&[rows, cols], data)?
        };
        Ok(self.push(out, Op::ConcatRows(parts.iter().map(|p| p.id).collect())))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, TensorError> {
        let nodes = self.nodes.borrow();
        let loss_shape = nodes[loss.id].value.shape();
        if nodes[loss.id].value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::filled(loss_shape, 1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            backprop(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

pub(crate) fn var_from_id(tape: &Tape, id: usize) -> Var<'_> {
    debug_assert!(id < tape.len());
    Var { tape, id }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, delta: Tensor) {
    match &mut grads[id] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn accumulate_with(grads: &mut [Option<Tensor>], id: usize, shape: &[usize], f: impl FnOnce(&mut [f64])) {
    let slot = grads[id].get_or_insert_with(|| Tensor::zeros(shape));
    f(slot.data_mut());
}

fn backprop(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let out = &node.value;
    let gd = g.data();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, g.map(|v| -v));
        }
        Op::Mul(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let ga: Vec<f64> = gd.iter().zip(bv.data()).map(|(g, b)| g * b).collect();
            let gb: Vec<f64> = gd.iter().zip(av.data()).map(|(g, a)| g * a).collect();
            accumulate(grads, *a, Tensor::new(av.shape(), ga).unwrap());
            accumulate(grads, *b, Tensor::new(bv.shape(), gb).unwrap());
        }
        Op::AddRow(a, row) => {
            accumulate(grads, *a, g.clone());
            let rshape = nodes[*row].value.shape().to_vec();
            let cols = nodes[*row].value.len();
            accumulate_with(grads, *row, &rshape, |dst| {
                for chunk in gd.chunks(cols) {
                    for (d, v) in dst.iter_mut().zip(chunk) {
                        *d += v;
                    }
                }
            });
        }
        Op::MulRow(a, row) => {
            let av = &nodes[*a].value;
            let rv = &nodes[*row].value;
            let cols = rv.len();
            let ga: Vec<f64> = gd.iter().enumerate().map(|(i, g)| g * rv.data()[i % cols]).collect();
            accumulate(grads, *a, Tensor::new(av.shape(), ga).unwrap());
            accumulate_with(grads, *row, rv.shape(), |dst| {
                for (i, (g, x)) in gd.iter().zip(av.data()).enumerate() {
                    dst[i % cols] += g * x;
                }
            });
        }
        Op::AddScalar(a, s) => {
            accumulate(grads, *a, g.clone());
            let total: f64 = gd.iter().sum();
            let sshape = nodes[*s].value.shape().to_vec();
            accumulate_with(grads, *s, &sshape, |dst| dst[0] += total);
        }
        Op::Scale(a, c) => accumulate(grads, *a, g.map(|v| v * c)),
        Op::MatMul(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let (n, k) = (av.shape()[0], av.shape()[1]);
            let m = bv.shape()[1];
            let ga = matmul_nt(gd, bv.data(), n, m, k);
            let gb = matmul_tn(av.data(), gd, n, k, m);
            accumulate(grads, *a, Tensor::new(&[n, k], ga).unwrap());
            accumulate(grads, *b, Tensor::new(&[k, m], gb).unwrap());
        }
        Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
        Op::Reshape(a) => {
            let shape = nodes[*a].value.shape();
            accumulate(grads, *a, g.reshape(shape).unwrap());
        }
        Op::ConcatCols(parts) => {
            let rows = out.shape()[0];
            let total = out.shape()[1];
            let mut offset = 0;
            for &p in parts {
                let w = nodes[p].value.shape()[1];
                let mut part = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    part.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                }
                accumulate(grads, p, Tensor::new(&[rows, w], part).unwrap());
                offset += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let n = nodes[p].value.len();
                let part = gd[offset..offset + n].to_vec();
                accumulate(grads, p, Tensor::new(nodes[p].value.shape(), part).unwrap());
                offset += n;
            }
        }
        Op::SliceRows(a, start) => {
            let ashape = nodes[*a].value.shape().to_vec();
            let cols = ashape[1];
            accumulate_with(grads, *a, &ashape, |dst| {
                let base = start * cols;
                for (d, v) in dst[base..base + gd.len()].iter_mut().zip(gd) {
                    *d += v;
                }
            });
        }
        Op::SliceCols(a, start) => {
            let ashape = nodes[*a].value.shape().to_vec();
            let (rows, cols) = (ashape[0], ashape[1]);
            let w = out.shape()[1];
            accumulate_with(grads, *a, &ashape, |dst| {
                for r in 0..rows {
                    for c in 0..w {
                        dst[r * cols + start + c] += gd[r * w + c];
                    }
                }
            });
        }
        Op::GatherRows(table, idx) => {
            let tshape = nodes[*table].value.shape().to_vec();
            let cols = tshape[1];
            accumulate_with(grads, *table, &tshape, |dst| {
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..cols {
                        dst[i * cols + c] += gd[r * cols + c];
                    }
                }
            });
        }
        Op::Sigmoid(a) => {
            let ga = gd.iter().zip(out.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
            accumulate(grads, *a, Tensor::new(out.shape(), ga).unwrap());
        }
        Op::Tanh(a) => {
            let ga = gd.iter().zip(out.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
            accumulate(grads, *a, Tensor::new(out.shape(), ga).unwrap());
        }
        Op::Relu(a) => {
            let ga = gd
                .iter()
                .zip(nodes[*a].value.data())
                .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                .collect();
            accumulate(grads, *a, Tensor::new(out.shape(), ga).unwrap());
        }
        Op::Log(a) => {
            let ga = gd.iter().zip(nodes[*a].value.data()).map(|(g, x)| g / x).collect();
            accumulate(grads, *a, Tensor::new(out.shape(), ga).unwrap());
        }
        Op::SoftmaxRows(a) => {
            let cols = out.shape()[1];
            let mut ga = vec![0.0; gd.len()];
            for ((gr, yr), dst) in gd.chunks(cols).zip(out.data().chunks(cols)).zip(ga.chunks_mut(cols)) {
                let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                for ((d, g), y) in dst.iter_mut().zip(gr).zip(yr) {
                    *d = y * (g - dot);
                }
            }
            accumulate(grads, *a, Tensor::new(out.shape(), ga).unwrap());
        }
        Op::LayerNormRows(a, inv_std) => {
            let cols = out.shape()[1];
            let n = cols as f64;
            let mut ga = vec![0.0; gd.len()];
            for (r, ((gr, yr), dst)) in gd
                .chunks(cols)
                .zip(out.data().chunks(cols))
                .zip(ga.chunks_mut(cols))
                .enumerate()
            {
                let mean_g: f64 = gr.iter().sum::<f64>() / n;
                let mean_gy: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum::<f64>() / n;
                for ((d, g), y) in dst.iter_mut().zip(gr).zip(yr) {
                    *d = inv_std[r] * (g - mean_g - y * mean_gy);
                }
            }
            accumulate(grads, *a, Tensor::new(out.shape(), ga).unwrap());
        }
        Op::Sum(a) => {
            let s = gd[0];
            let shape = nodes[*a].value.shape();
            accumulate(grads, *a, Tensor::filled(shape, s));
        }
        Op::Mean(a) => {
            let v = &nodes[*a].value;
            let s = gd[0] / v.len() as f64;
            accumulate(grads, *a, Tensor::filled(v.shape(), s));
        }
        Op::Bilinear(x, w, y) => {
            let xv = &nodes[*x].value;
            let wv = &nodes[*w].value;
            let yv = &nodes[*y].value;
            let (n, d1) = (xv.shape()[0], xv.shape()[1]);
            let (k, d2) = (wv.shape()[0], wv.shape()[2]);
            let mut gx = vec![0.0; n * d1];
            let mut gy = vec![0.0; n * d2];
            let mut gw = vec![0.0; k * d1 * d2];
            for r in 0..n {
                let xr = &xv.data()[r * d1..(r + 1) * d1];
                let yr = &yv.data()[r * d2..(r + 1) * d2];
                for c in 0..k {
                    let gc = gd[r * k + c];
                    if gc == 0.0 {
                        continue;
                    }
                    let wc = &wv.data()[c * d1 * d2..(c + 1) * d1 * d2];
                    let gwc = &mut gw[c * d1 * d2..(c + 1) * d1 * d2];
                    for p in 0..d1 {
                        let wrow = &wc[p * d2..(p + 1) * d2];
                        let dot: f64 = wrow.iter().zip(yr).map(|(a, b)| a * b).sum();
                        gx[r * d1 + p] += gc * dot;
                        let xp = xr[p];
                        for q in 0..d2 {
                            gy[r * d2 + q] += gc * xp * wrow[q];
                            gwc[p * d2 + q] += gc * xp * yr[q];
                        }
                    }
                }
            }
            accumulate(grads, *x, Tensor::new(&[n, d1], gx).unwrap());
            accumulate(grads, *y, Tensor::new(&[n, d2], gy).unwrap());
            accumulate(grads, *w, Tensor::new(wv.shape(), gw).unwrap());
        }
        Op::BceWithLogits(a, targets) => {
            let xv = &nodes[*a].value;
            let scale = gd[0] / xv.len() as f64;
            let ga = xv
                .data()
                .iter()
                .zip(targets.data())
                .map(|(x, t)| scale * (sigmoid(*x) - t))
                .collect();
            accumulate(grads, *a, Tensor::new(xv.shape(), ga).unwrap());
        }
        Op::CrossEntropy(a, classes) => {
            let xv = &nodes[*a].value;
            let k = xv.shape()[1];
            let scale = gd[0] / classes.len() as f64;
            let mut ga = vec![0.0; xv.len()];
            for (r, (row, dst)) in xv.data().chunks(k).zip(ga.chunks_mut(k)).enumerate() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
                for (c, (d, v)) in dst.iter_mut().zip(row).enumerate() {
                    let p = (v - max).exp() / z;
                    let t = if c == classes[r] { 1.0 } else { 0.0 };
                    *d = scale * (p - t);
                }
            }
            accumulate(grads, *a, Tensor::new(xv.shape(), ga).unwrap());
        }
        Op::Mse(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let scale = 2.0 * gd[0] / av.len() as f64;
            let ga: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| scale * (x - y)).collect();
            let gb = ga.iter().map(|v| -v).collect();
            accumulate(grads, *a, Tensor::new(av.shape(), ga).unwrap());
            accumulate(grads, *b, Tensor::new(bv.shape(), gb).unwrap());
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

    /// A copy of the recorded value.
    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_of(self.id).shape().to_vec()
    }

    /// Value of a single-element var.
    pub fn item(&self) -> f64 {
        self.tape.value_of(self.id).item()
    }

    fn same_tape(&self, other: &Var<'_>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }

    fn elementwise(
        &self,
        other: &Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>, TensorError> {
        self.same_tape(other);
        let out = {
            let a = self.tape.value_of(self.id);
            let b = self.tape.value_of(other.id);
            if a.shape() != b.shape() {
                return Err(TensorError::shape(name, a.shape(), b.shape()));
            }
            let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
            Tensor::new(a.shape(), data)?
        };
        Ok(self.tape.push(out, op))
    }

    fn unary(&self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let out = self.tape.value_of(self.id).map(f);
        self.tape.push(out, op)
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.elementwise(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.elementwise(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.elementwise(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    /// Add a vector to every row of a matrix.
    pub fn add_row(&self, row: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.broadcast_row(row, "add_row", |a, b| a + b, Op::AddRow(self.id, row.id))
    }

    /// Multiply every row of a matrix elementwise by a vector.
    pub fn mul_row(&self, row: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.broadcast_row(row, "mul_row", |a, b| a * b, Op::MulRow(self.id, row.id))
    }

    fn broadcast_row(
        &self,
        row: &Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>, TensorError> {
        self.same_tape(row);
        let out = {
            let a = self.tape.value_of(self.id);
            let r = self.tape.value_of(row.id);
            let (_, cols) = two_d(name, &a)?;
            if r.len() != cols {
                return Err(TensorError::shape(name, a.shape(), r.shape()));
            }
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| f(*x, r.data()[i % cols]))
                .collect();
            Tensor::new(a.shape(), data)?
        };
        Ok(self.tape.push(out, op))
    }

    /// Add a single-element var to every entry.
    pub fn add_scalar(&self, s: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(s);
        let out = {
            let a = self.tape.value_of(self.id);
            let sv = self.tape.value_of(s.id);
            if sv.len() != 1 {
                return Err(TensorError::shape("add_scalar", a.shape(), sv.shape()));
            }
            let b = sv.data()[0];
            a.map(|x| x + b)
        };
        Ok(self.tape.push(out, Op::AddScalar(self.id, s.id)))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(|x| x * c, Op::Scale(self.id, c))
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(other);
        let out = {
            let a = self.tape.value_of(self.id);
            let b = self.tape.value_of(other.id);
            a.matmul(&b)?
        };
        Ok(self.tape.push(out, Op::MatMul(self.id, other.id)))
    }

    pub fn transpose(&self) -> Result<Var<'t>, TensorError> {
        let out = {
            let a = self.tape.value_of(self.id);
            two_d("transpose", &a)?;
            a.transpose()
        };
        Ok(self.tape.push(out, Op::Transpose(self.id)))
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>, TensorError> {
        let out = self.tape.value_of(self.id).reshape(shape)?;
        Ok(self.tape.push(out, Op::Reshape(self.id)))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Var<'t>, TensorError> {
        let out = {
            let a = self.tape.value_of(self.id);
            let (rows, cols) = two_d("slice_rows", &a)?;
            if start + len > rows {
                return Err(TensorError::Index {
                    op: "slice_rows",
                    index: start + len,
                    extent: rows,
                });
            }
            Tensor::new(&[len, cols], a.data()[start * cols..(start + len) * cols].to_vec())?
        };
        Ok(self.tape.push(out, Op::SliceRows(self.id, start)))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Var<'t>, TensorError> {
        let out = {
            let a = self.tape.value_of(self.id);
            let (rows, cols) = two_d("slice_cols", &a)?;
            if start + len > cols {
                return Err(TensorError::Index {
                    op: "slice_cols",
                    index: start + len,
                    extent: cols,
                });
            }
            let mut data = Vec::with_capacity(rows * len);
            for r in 0..rows {
                data.extend_from_slice(&a.data()[r * cols + start..r * cols + start + len]);
            }
            Tensor::new(&[rows, len], data)?
        };
        Ok(self.tape.push(out, Op::SliceCols(self.id, start)))
    }

    /// Select rows of a table by index (embedding lookup). An empty index
    /// list yields a `0 x cols` matrix.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Var<'t>, TensorError> {
        let out = {
            let a = self.tape.value_of(self.id);
            let (rows, cols) = two_d("gather_rows", &a)?;
            let mut data = Vec::with_capacity(idx.len() * cols);
            for &i in idx {
                if i >= rows {
                    return Err(TensorError::Index {
                        op: "gather_rows",
                        index: i,
                        extent: rows,
                    });
                }
                data.extend_from_slice(&a.data()[i * cols..(i + 1) * cols]);
            }
            Tensor::new(&[idx.len(), cols], data)?
        };
        Ok(self.tape.push(out, Op::GatherRows(self.id, idx.to_vec())))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(sigmoid, Op::Sigmoid(self.id))
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(f64::tanh, Op::Tanh(self.id))
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(|x| x.max(0.0), Op::Relu(self.id))
    }

    /// Natural log; inputs must be strictly positive to stay finite.
    pub fn log(&self) -> Var<'t> {
        self.unary(f64::ln, Op::Log(self.id))
    }

    /// Row-wise softmax, computed with the max-shift for stability.
    pub fn softmax_rows(&self) -> Result<Var<'t>, TensorError> {
        let out = {
            let a = self.tape.value_of(self.id);
            let (_, cols) = two_d("softmax_rows", &a)?;
            let mut data = a.data().to_vec();
            for row in data.chunks_mut(cols) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    z += *v;
                }
                for v in row.iter_mut() {
                    *v /= z;
                }
            }
            Tensor::new(a.shape(), data)?
        };
        Ok(self.tape.push(out, Op::SoftmaxRows(self.id)))
    }

    /// Normalize each row to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&self, eps: f64) -> Result<Var<'t>, TensorError> {
        let (out, inv_std) = {
            let a = self.tape.value_of(self.id);
            let (rows, cols) = two_d("layer_norm_rows", &a)?;
            let n = cols as f64;
            let mut data = a.data().to_vec();
            let mut inv_std = Vec::with_capacity(rows);
            for row in data.chunks_mut(cols) {
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let inv = 1.0 / (var + eps).sqrt();
                for v in row.iter_mut() {
                    *v = (*v - mean) * inv;
                }
                inv_std.push(inv);
            }
            (Tensor::new(a.shape(), data)?, inv_std)
        };
        Ok(self.tape.push(out, Op::LayerNormRows(self.id, inv_std)))
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.tape.value_of(self.id).data().iter().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    /// Mean over all entries. Empty tensors have mean 0.
    pub fn mean(&self) -> Var<'t> {
        let m = {
            let a = self.tape.value_of(self.id);
            if a.is_empty() {
                0.0
            } else {
                a.data().iter().sum::<f64>() / a.len() as f64
            }
        };
        self.tape.push(Tensor::scalar(m), Op::Mean(self.id))
    }

    /// Row-paired bilinear forms: for `self = X [n x d1]`, `w = [k x d1 x d2]`
    /// and `y = [n x d2]`, entry `(r, c)` is `X_r W_c Y_r^T`.
    pub fn bilinear(&self, w: &Var<'t>, y: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(w);
        self.same_tape(y);
        let out = {
            let xv = self.tape.value_of(self.id);
            let wv = self.tape.value_of(w.id);
            let yv = self.tape.value_of(y.id);
            let (n, d1) = two_d("bilinear", &xv)?;
            let (ny, d2) = two_d("bilinear", &yv)?;
            if wv.shape().len() != 3 || wv.shape()[1] != d1 || wv.shape()[2] != d2 || n != ny {
                return Err(TensorError::shape("bilinear", xv.shape(), wv.shape()));
            }
            let k = wv.shape()[0];
            let mut data = vec![0.0; n * k];
            for r in 0..n {
                let xr = &xv.data()[r * d1..(r + 1) * d1];
                let yr = &yv.data()[r * d2..(r + 1) * d2];
                for c in 0..k {
                    let wc = &wv.data()[c * d1 * d2..(c + 1) * d1 * d2];
                    let mut acc = 0.0;
                    for p in 0..d1 {
                        let dot: f64 = wc[p * d2..(p + 1) * d2].iter().zip(yr).map(|(a, b)| a * b).sum();
                        acc += xr[p] * dot;
                    }
                    data[r * k + c] = acc;
                }
            }
            Tensor::new(&[n, k], data)?
        };
        Ok(self.tape.push(out, Op::Bilinear(self.id, w.id, y.id)))
    }

    /// Mean binary cross-entropy of `sigmoid(self)` against `targets` in
    /// `[0, 1]`, using `max(x,0) - x t + ln(1 + e^{-|x|})`.
    pub fn bce_with_logits(&self, targets: &Tensor) -> Result<Var<'t>, TensorError> {
        let loss = {
            let x = self.tape.value_of(self.id);
            if x.shape() != targets.shape() {
                return Err(TensorError::shape("bce_with_logits", x.shape(), targets.shape()));
            }
            if x.is_empty() {
                0.0
            } else {
                let total: f64 = x
                    .data()
                    .iter()
                    .zip(targets.data())
                    .map(|(x, t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
                    .sum();
                total / x.len() as f64
            }
        };
        Ok(self
            .tape
            .push(Tensor::scalar(loss), Op::BceWithLogits(self.id, targets.clone())))
    }

    /// Mean softmax cross-entropy of rows of `self` against class indices.
    pub fn cross_entropy(&self, classes: &[usize]) -> Result<Var<'t>, TensorError> {
        let loss = {
            let x = self.tape.value_of(self.id);
            let (rows, k) = two_d("cross_entropy", &x)?;
            if rows != classes.len() {
                return Err(TensorError::shape("cross_entropy", x.shape(), &[classes.len()]));
            }
            let mut total = 0.0;
            for (row, &c) in x.data().chunks(k.max(1)).zip(classes) {
                if c >= k {
                    return Err(TensorError::Index {
                        op: "cross_entropy",
                        index: c,
                        extent: k,
                    });
                }
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += lse - row[c];
            }
            if rows == 0 {
                0.0
            } else {
                total / rows as f64
            }
        };
        Ok(self
            .tape
            .push(Tensor::scalar(loss), Op::CrossEntropy(self.id, classes.to_vec())))
    }

    /// Mean squared difference.
    pub fn mse(&self, other: &Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(other);
        let loss = {
            let a = self.tape.value_of(self.id);
            let b = self.tape.value_of(other.id);
            if a.shape() != b.shape() {
                return Err(TensorError::shape("mse", a.shape(), b.shape()));
            }
            if a.is_empty() {
                0.0
            } else {
                a.data()
                    .iter()
                    .zip(b.data())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    / a.len() as f64
            }
        };
        Ok(self.tape.push(Tensor::scalar(loss), Op::Mse(self.id, other.id)))
    }
}
