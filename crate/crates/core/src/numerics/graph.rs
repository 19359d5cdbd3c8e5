//! Reverse-mode automatic differentiation over a per-pass tape.
//!
//! A [`Graph`] records every operation of one forward pass in creation order,
//! which is already a topological order, so [`Graph::backward`] is a single
//! reverse sweep. Build a fresh graph for every forward pass and drop it after
//! reading the leaf gradients.
//!
//! Broadcasting is deliberately narrow. An operand may be broadcast against
//! the other operand's shape when it is a scalar, when its shape (after
//! dropping leading 1s) is a suffix of the output shape (`[D]` or `[1, D]`
//! against `[N, D]`), or when its shape (after dropping trailing 1s) is a
//! prefix of the output shape (`[N, 1]` against `[N, D]`).

use super::float::Float;
use super::tensor::{gemm_into, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise operations exposed through [`Graph::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Mul,
    Exp,
    Log,
    Relu,
    Square,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
}

/// How an operand element is located for output element `i`.
#[derive(Debug, Clone, Copy)]
enum Bcast {
    Same,
    Cycle(usize),
    Repeat(usize),
}

impl Bcast {
    #[inline(always)]
    fn at(self, i: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Cycle(n) => i % n,
            Bcast::Repeat(block) => i / block,
        }
    }

    fn plan(input: &[usize], out: &[usize]) -> Option<Bcast> {
        if input == out {
            return Some(Bcast::Same);
        }
        let n_in: usize = input.iter().product();
        let n_out: usize = out.iter().product();
        if n_in == 1 {
            return Some(Bcast::Cycle(1));
        }
        let lead = input.iter().take_while(|&&d| d == 1).count();
        let core = &input[lead..];
        if core.len() <= out.len() && out.ends_with(core) {
            return Some(Bcast::Cycle(n_in));
        }
        let trail = input.iter().rev().take_while(|&&d| d == 1).count();
        let core = &input[..input.len() - trail];
        if input.len() == out.len() && out.starts_with(core) && n_in > 0 {
            return Some(Bcast::Repeat(n_out / n_in));
        }
        None
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var, Bcast, Bcast),
    Sub(Var, Var, Bcast, Bcast),
    Mul(Var, Var, Bcast, Bcast),
    Div(Var, Var, Bcast, Bcast),
    Neg(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Square(Var),
    Sqrt(Var),
    Scale(Var, f64),
    Shift(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Sum(Var, Option<usize>),
    LogSoftmax(Var),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    tracked: bool,
    grad: Option<Tensor<T>>,
}

/// Tape of one forward pass.
pub struct Graph<T: Float = f64> {
    nodes: Vec<Node<T>>,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gradient-tracked leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Untracked leaf; receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor<T>, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        Ok(self.value(v).item()?.as_f64())
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Accumulated gradient of a tracked leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient of a tracked leaf, or zeros when the loss does not depend on it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor<T> {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.shape(v)))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op, inputs: &[Var], what: &str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!(
                "{what} produced non-finite values (shape {:?})",
                value.shape()
            )));
        }
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node {
            value,
            op,
            tracked,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn binary_plans(&self, a: Var, b: Var, what: &str) -> Result<(Vec<usize>, Bcast, Bcast)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let out = if sa.iter().product::<usize>() >= sb.iter().product::<usize>() {
            sa
        } else {
            sb
        };
        match (Bcast::plan(sa, out), Bcast::plan(sb, out)) {
            (Some(pa), Some(pb)) => Ok((out.to_vec(), pa, pb)),
            _ => Err(Error::Dimension(format!(
                "{what}: shapes {sa:?} and {sb:?} are not broadcast-compatible"
            ))),
        }
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(T, T) -> T,
        make: impl FnOnce(Var, Var, Bcast, Bcast) -> Op,
    ) -> Result<Var> {
        let (shape, pa, pb) = self.binary_plans(a, b, what)?;
        let n: usize = shape.iter().product();
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let data = match (pa, pb) {
            (Bcast::Same, Bcast::Same) => av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
            _ => (0..n).map(|i| f(av[pa.at(i)], bv[pb.at(i)])).collect(),
        };
        let value = Tensor::new(shape, data)?;
        self.push(value, make(a, b, pa, pb), &[a, b], what)
    }

    fn unary(&mut self, x: Var, what: &str, f: impl Fn(T) -> T, op: Op) -> Result<Var> {
        let value = self.value(x).map(f);
        self.push(value, op, &[x], what)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().iter().any(|v| v.is_zero()) {
            return Err(Error::Domain("division by zero".into()));
        }
        self.binary(a, b, "div", |x, y| x / y, Op::Div)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "neg", |v| -v, Op::Neg(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "exp", |v| v.exp(), Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|v| **v <= T::zero()) {
            return Err(Error::Domain(format!(
                "log of non-positive value {}",
                bad.as_f64()
            )));
        }
        self.unary(x, "log", |v| v.ln(), Op::Log(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "relu", |v| v.max(T::zero()), Op::Relu(x))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "square", |v| v * v, Op::Square(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|v| *v < T::zero()) {
            return Err(Error::Domain("sqrt of negative value".into()));
        }
        self.unary(x, "sqrt", |v| v.sqrt(), Op::Sqrt(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let ct = T::lit(c);
        self.unary(x, "scale", move |v| v * ct, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        let ct = T::lit(c);
        self.unary(x, "add_scalar", move |v| v + ct, Op::Shift(x))
    }

    /// Dispatches one of the named elementwise ops.
    pub fn elementwise(&mut self, op: ElemOp, inputs: &[Var]) -> Result<Var> {
        let want = match op {
            ElemOp::Add | ElemOp::Mul => 2,
            _ => 1,
        };
        if inputs.len() != want {
            return Err(Error::Contract(format!(
                "{op:?} takes {want} inputs, got {}",
                inputs.len()
            )));
        }
        match op {
            ElemOp::Add => self.add(inputs[0], inputs[1]),
            ElemOp::Mul => self.mul(inputs[0], inputs[1]),
            ElemOp::Exp => self.exp(inputs[0]),
            ElemOp::Log => self.log(inputs[0]),
            ElemOp::Relu => self.relu(inputs[0]),
            ElemOp::Square => self.square(inputs[0]),
            ElemOp::Neg => self.neg(inputs[0]),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose()?;
        self.push(value, Op::Transpose(x), &[x], "transpose")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        self.push(value, Op::Reshape(x), &[x], "reshape")
    }

    /// Sum over all elements, giving a scalar.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x, None), &[x], "sum")
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        if n == 0 {
            return Err(Error::Domain("mean of an empty tensor".into()));
        }
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Sum along `axis`; `keepdim` keeps the axis with length 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize, keepdim: bool) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Dimension(format!(
                "axis {axis} out of range for shape {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                let dst = &mut out[o * inner..(o + 1) * inner];
                for (d, s) in dst.iter_mut().zip(&src[base..base + inner]) {
                    *d += *s;
                }
            }
        }
        let mut out_shape = shape.clone();
        if keepdim {
            out_shape[axis] = 1;
        } else {
            out_shape.remove(axis);
        }
        let value = Tensor::new(out_shape, out)?;
        self.push(value, Op::Sum(x, Some(axis)), &[x], "sum_axis")
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize, keepdim: bool) -> Result<Var> {
        let len = *self.shape(x).get(axis).ok_or_else(|| {
            Error::Dimension(format!(
                "axis {axis} out of range for shape {:?}",
                self.shape(x)
            ))
        })?;
        let s = self.sum_axis(x, axis, keepdim)?;
        if len == 0 {
            return Ok(s);
        }
        self.scale(s, 1.0 / len as f64)
    }

    /// `axis = None` reduces over every element.
    pub fn reduce(&mut self, op: ReduceOp, x: Var, axis: Option<usize>) -> Result<Var> {
        match (op, axis) {
            (ReduceOp::Sum, None) => self.sum_all(x),
            (ReduceOp::Mean, None) => self.mean_all(x),
            (ReduceOp::Sum, Some(a)) => self.sum_axis(x, a, false),
            (ReduceOp::Mean, Some(a)) => self.mean_axis(x, a, false),
        }
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            for (o, &v) in out[i * c..(i + 1) * c].iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        let value = Tensor::new(vec![r, c], out)?;
        self.push(value, Op::LogSoftmax(x), &[x], "log_softmax")
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2()?;
        if start > end || end > c {
            return Err(Error::Dimension(format!(
                "column slice {start}..{end} out of range for {c} columns"
            )));
        }
        let w = end - start;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + end]);
        }
        let value = Tensor::new(vec![r, w], out)?;
        self.push(value, Op::SliceCols(x, start), &[x], "slice_cols")
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let (_, c) = self.value(*first).dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, pc) = self.value(p).dims2()?;
            if pc != c {
                return Err(Error::Dimension(format!(
                    "concat_rows: column counts {c} and {pc} differ"
                )));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::new(vec![rows, c], data)?;
        self.push(value, Op::ConcatRows(parts.to_vec()), parts, "concat_rows")
    }

    /// Back-propagates from a scalar loss, accumulating into every tracked
    /// leaf reachable from it.
    ///
    /// Calling `backward` again without [`zero_grad`](Self::zero_grad) adds
    /// to the existing leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].tracked {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(a, &b)| *a += b),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = node.value.data();
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b, pa, pb) => {
                self.acc_bcast(grads, *a, *pa, gd, |gi, _| gi);
                self.acc_bcast(grads, *b, *pb, gd, |gi, _| gi);
            }
            Op::Sub(a, b, pa, pb) => {
                self.acc_bcast(grads, *a, *pa, gd, |gi, _| gi);
                self.acc_bcast(grads, *b, *pb, gd, |gi, _| -gi);
            }
            Op::Mul(a, b, pa, pb) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let (pa, pb) = (*pa, *pb);
                self.acc_bcast(grads, *a, pa, gd, |gi, k| gi * bv[pb.at(k)]);
                self.acc_bcast(grads, *b, pb, gd, |gi, k| gi * av[pa.at(k)]);
            }
            Op::Div(a, b, pa, pb) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let (pa, pb) = (*pa, *pb);
                self.acc_bcast(grads, *a, pa, gd, |gi, k| gi / bv[pb.at(k)]);
                self.acc_bcast(grads, *b, pb, gd, |gi, k| {
                    let bk = bv[pb.at(k)];
                    -gi * av[pa.at(k)] / (bk * bk)
                });
            }
            Op::Neg(x) => self.acc_map(grads, *x, gd, |gi, _| -gi),
            Op::Exp(x) => self.acc_map(grads, *x, gd, |gi, k| gi * y[k]),
            Op::Log(x) => {
                let xv = self.value(*x).data();
                self.acc_map(grads, *x, gd, |gi, k| gi / xv[k])
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                self.acc_map(grads, *x, gd, |gi, k| {
                    if xv[k] > T::zero() {
                        gi
                    } else {
                        T::zero()
                    }
                })
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                let two = T::lit(2.0);
                self.acc_map(grads, *x, gd, |gi, k| two * xv[k] * gi)
            }
            Op::Sqrt(x) => {
                let half = T::lit(0.5);
                self.acc_map(grads, *x, gd, |gi, k| {
                    if y[k] > T::zero() {
                        half * gi / y[k]
                    } else {
                        T::zero()
                    }
                })
            }
            Op::Scale(x, c) => {
                let c = T::lit(*c);
                self.acc_map(grads, *x, gd, |gi, _| c * gi)
            }
            Op::Shift(x) | Op::Reshape(x) => self.acc_map(grads, *x, gd, |gi, _| gi),
            Op::Transpose(x) => {
                if self.is_tracked(*x) {
                    let gt = g.transpose()?;
                    self.acc_map(grads, *x, gt.data(), |gi, _| gi);
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2()?;
                let (_, n) = self.value(*b).dims2()?;
                if self.is_tracked(*a) {
                    // dA = G Bᵀ
                    let slot = self.slot(grads, *a);
                    gemm_into(m, n, k, gd, false, self.value(*b).data(), true, slot.data_mut(), true);
                }
                if self.is_tracked(*b) {
                    // dB = Aᵀ G
                    let slot = self.slot(grads, *b);
                    gemm_into(k, m, n, self.value(*a).data(), true, gd, false, slot.data_mut(), true);
                }
            }
            Op::Sum(x, None) => {
                let gi = gd[0];
                self.acc_map(grads, *x, &[], |_, _| gi)
            }
            Op::Sum(x, Some(axis)) => {
                let shape = self.shape(*x);
                let len = shape[*axis];
                let inner: usize = shape[axis + 1..].iter().product();
                self.acc_map(grads, *x, &[], |_, k| {
                    let o = k / (len * inner);
                    let j = k % inner;
                    gd[o * inner + j]
                })
            }
            Op::LogSoftmax(x) => {
                let (r, c) = node.value.dims2()?;
                let mut gx = vec![T::zero(); r * c];
                for row in 0..r {
                    let s = row * c;
                    let gsum: T = gd[s..s + c].iter().copied().sum();
                    for col in 0..c {
                        gx[s + col] = gd[s + col] - y[s + col].exp() * gsum;
                    }
                }
                self.acc_map(grads, *x, &gx, |gi, _| gi)
            }
            Op::SliceCols(x, start) => {
                if self.is_tracked(*x) {
                    let (r, w) = node.value.dims2()?;
                    let (_, c) = self.value(*x).dims2()?;
                    let slot = self.slot(grads, *x);
                    let sd = slot.data_mut();
                    for row in 0..r {
                        for col in 0..w {
                            sd[row * c + start + col] += gd[row * w + col];
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    let piece = &gd[offset..offset + n];
                    self.acc_map(grads, p, piece, |gi, _| gi);
                    offset += n;
                }
            }
        }
        Ok(())
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor<T>>], v: Var) -> &'g mut Tensor<T> {
        grads[v.0].get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.shape()))
    }

    /// `grad[v][k] += f(g[k], k)` over v's elements. When `g` is empty, `f`
    /// receives zero and computes the contribution from `k` alone.
    fn acc_map(
        &self,
        grads: &mut [Option<Tensor<T>>],
        v: Var,
        g: &[T],
        f: impl Fn(T, usize) -> T,
    ) {
        if !self.is_tracked(v) {
            return;
        }
        let slot = self.slot(grads, v);
        let sd = slot.data_mut();
        if g.is_empty() {
            for (k, s) in sd.iter_mut().enumerate() {
                *s += f(T::zero(), k);
            }
        } else {
            for (k, s) in sd.iter_mut().enumerate() {
                *s += f(g[k], k);
            }
        }
    }

    /// Reduces an output-shaped contribution into a broadcast operand.
    fn acc_bcast(
        &self,
        grads: &mut [Option<Tensor<T>>],
        v: Var,
        plan: Bcast,
        g: &[T],
        f: impl Fn(T, usize) -> T,
    ) {
        if !self.is_tracked(v) {
            return;
        }
        let slot = self.slot(grads, v);
        let sd = slot.data_mut();
        match plan {
            Bcast::Same => {
                for (k, s) in sd.iter_mut().enumerate() {
                    *s += f(g[k], k);
                }
            }
            _ => {
                for (k, &gk) in g.iter().enumerate() {
                    sd[plan.at(k)] += f(gk, k);
                }
            }
        }
    }
}
