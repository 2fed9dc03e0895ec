//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! Every operation appends a node holding its result. Nodes only reference
//! earlier nodes, so the record is already in topological order and a single
//! reverse sweep accumulates all gradients.

use crate::error::{Error, Result};
use crate::tensor::{mm_nn, mm_nt, mm_tn, sigmoid, softmax_in_place, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    MulBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    SwapLeading(Var),
    Reshape(Var),
    SumLast(Var),
    Sum(Var),
    Mix {
        alpha: Var,
        a: Var,
        b: Var,
    },
    Slice {
        src: Var,
        index: usize,
    },
    Stack(Vec<Var>),
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
        mask: Vec<bool>,
    },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Ordered record of operations and their results.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn trailing_matches(shape: &[usize], tail: &[usize]) -> bool {
    shape.len() >= tail.len() && &shape[shape.len() - tail.len()..] == tail
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Records an input. Parameters and constants are both leaves.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        self.check(&op)?;
        let value = compute(&op, |v| &self.nodes[v.0].value);
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    fn check(&self, op: &Op) -> Result<()> {
        match op {
            Op::Leaf => Ok(()),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                    return Err(Error::mismatch("matmul", format!("{sa:?} × {sb:?}")));
                }
                Ok(())
            }
            Op::BatchMatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
                    return Err(Error::mismatch("batch_matmul", format!("{sa:?} × {sb:?}")));
                }
                Ok(())
            }
            Op::Add(a, b) => {
                if self.shape(*a) != self.shape(*b) {
                    return Err(Error::mismatch(
                        "add",
                        format!("{:?} + {:?}", self.shape(*a), self.shape(*b)),
                    ));
                }
                Ok(())
            }
            Op::AddBias(a, b) | Op::MulBias(a, b) => {
                if !trailing_matches(self.shape(*a), self.shape(*b)) {
                    return Err(Error::mismatch(
                        "bias",
                        format!(
                            "{:?} does not end with {:?}",
                            self.shape(*a),
                            self.shape(*b)
                        ),
                    ));
                }
                Ok(())
            }
            Op::Scale(..) | Op::Relu(_) | Op::Sigmoid(_) | Op::Sum(_) => Ok(()),
            Op::SoftmaxRows(a) | Op::SumLast(a) => {
                if self.shape(*a).is_empty() {
                    return Err(Error::mismatch("rows", "scalar input"));
                }
                Ok(())
            }
            Op::Transpose(a) => {
                let r = self.shape(*a).len();
                if r != 2 && r != 3 {
                    return Err(Error::mismatch("transpose", format!("rank {r}")));
                }
                Ok(())
            }
            Op::SwapLeading(a) => {
                if self.shape(*a).len() != 3 {
                    return Err(Error::mismatch("swap_leading", "expected rank 3"));
                }
                Ok(())
            }
            // Reshape carries its target shape in the node value; validated by
            // the public constructor.
            Op::Reshape(_) => Ok(()),
            Op::Mix { alpha, a, b } => {
                if self.value(*alpha).len() != 1 {
                    return Err(Error::mismatch("mix", "alpha must be a single value"));
                }
                if self.shape(*a) != self.shape(*b) {
                    return Err(Error::mismatch(
                        "mix",
                        format!("{:?} vs {:?}", self.shape(*a), self.shape(*b)),
                    ));
                }
                Ok(())
            }
            Op::Slice { src, index } => {
                let s = self.shape(*src);
                if s.is_empty() || *index >= s[0] {
                    return Err(Error::mismatch(
                        "slice",
                        format!("index {index} into {s:?}"),
                    ));
                }
                Ok(())
            }
            Op::Stack(parts) => {
                let Some(first) = parts.first() else {
                    return Err(Error::mismatch("stack", "no inputs"));
                };
                let s = self.shape(*first);
                if parts.iter().any(|p| self.shape(*p) != s) {
                    return Err(Error::mismatch("stack", "inputs differ in shape"));
                }
                Ok(())
            }
            Op::BceWithLogits {
                logits,
                targets,
                mask,
            } => {
                let n = self.value(*logits).len();
                if targets.len() != n || mask.len() != n {
                    return Err(Error::mismatch(
                        "bce",
                        format!(
                            "{} logits, {} targets, {} mask",
                            n,
                            targets.len(),
                            mask.len()
                        ),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    /// Independent matrix products over the leading axis.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::BatchMatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    /// Adds `bias` to every trailing block of `a` whose shape equals `bias`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.push(Op::AddBias(a, bias))
    }

    /// Multiplies every trailing block of `a` elementwise by `weight`.
    pub fn mul_bias(&mut self, a: Var, weight: Var) -> Result<Var> {
        self.push(Op::MulBias(a, weight))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.push(Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sigmoid(a))
    }

    /// Softmax along the last axis.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.push(Op::SoftmaxRows(a))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Transpose(a))
    }

    /// Swaps the first two axes of a rank-3 tensor.
    pub fn swap_leading(&mut self, a: Var) -> Result<Var> {
        self.push(Op::SwapLeading(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        self.nodes.push(Node {
            op: Op::Reshape(a),
            value,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        self.push(Op::SumLast(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sum(a))
    }

    /// `alpha·a + (1 − alpha)·b` with a single-valued `alpha`.
    pub fn mix(&mut self, alpha: Var, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mix { alpha, a, b })
    }

    /// Selects `index` along the leading axis.
    pub fn slice(&mut self, src: Var, index: usize) -> Result<Var> {
        self.push(Op::Slice { src, index })
    }

    /// Stacks equally shaped values along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        self.push(Op::Stack(parts.to_vec()))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets` over
    /// the entries where `mask` is set. Zero when the mask is empty.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], mask: &[bool]) -> Result<Var> {
        self.push(Op::BceWithLogits {
            logits,
            targets: targets.to_vec(),
            mask: mask.to_vec(),
        })
    }

    /// Recomputes every node from the recorded leaves.
    pub fn replay(&self) -> Vec<Tensor> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::Reshape(a) => {
                    Tensor::new(node.value.shape().to_vec(), values[a.0].data().to_vec())
                        .expect("reshape preserves size")
                }
                op => compute(op, |v| &values[v.0]),
            };
            values.push(value);
        }
        values
    }

    /// Gradients of a single-valued `loss` with respect to each of `params`.
    ///
    /// A parameter the loss does not depend on receives a zero tensor.
    pub fn grad(&self, loss: Var, params: &[Var]) -> Result<Vec<Tensor>> {
        if self.value(loss).len() != 1 {
            return Err(Error::mismatch(
                "grad",
                format!("loss has shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backward_node(idx, &g, &mut grads);
            // Leaves keep their gradient for collection below.
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }

        Ok(params
            .iter()
            .map(|p| {
                let shape = self.shape(*p).to_vec();
                match grads.get(p.0).cloned().flatten() {
                    Some(g) => Tensor::new(shape, g).expect("gradient shape"),
                    None => Tensor::zeros(&shape),
                }
            })
            .collect())
    }

    fn backward_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let val = |v: &Var| self.nodes[v.0].value.data();

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let ga = acc(grads, *a, m * k);
                mm_nt(g, val(b), ga, m, n, k);
                let gb = acc(grads, *b, k * n);
                mm_tn(val(a), g, gb, k, m, n);
            }
            Op::BatchMatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                let (av, bv) = (val(a), val(b));
                {
                    let ga = acc(grads, *a, batch * m * k);
                    for s in 0..batch {
                        mm_nt(
                            &g[s * m * n..(s + 1) * m * n],
                            &bv[s * k * n..(s + 1) * k * n],
                            &mut ga[s * m * k..(s + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                }
                let gb = acc(grads, *b, batch * k * n);
                for s in 0..batch {
                    mm_tn(
                        &av[s * m * k..(s + 1) * m * k],
                        &g[s * m * n..(s + 1) * m * n],
                        &mut gb[s * k * n..(s + 1) * k * n],
                        k,
                        m,
                        n,
                    );
                }
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, g.len()), g);
                add_into(acc(grads, *b, g.len()), g);
            }
            Op::AddBias(a, b) => {
                add_into(acc(grads, *a, g.len()), g);
                let n = self.value(*b).len();
                let gb = acc(grads, *b, n);
                for block in g.chunks_exact(n) {
                    add_into(gb, block);
                }
            }
            Op::MulBias(a, w) => {
                let n = self.value(*w).len();
                let wv = val(w);
                let av = val(a);
                {
                    let ga = acc(grads, *a, g.len());
                    for (ga_block, g_block) in ga.chunks_exact_mut(n).zip(g.chunks_exact(n)) {
                        for ((x, gi), wi) in ga_block.iter_mut().zip(g_block).zip(wv) {
                            *x += gi * wi;
                        }
                    }
                }
                let gw = acc(grads, *w, n);
                for (a_block, g_block) in av.chunks_exact(n).zip(g.chunks_exact(n)) {
                    for ((x, gi), ai) in gw.iter_mut().zip(g_block).zip(a_block) {
                        *x += gi * ai;
                    }
                }
            }
            Op::Scale(a, s) => {
                let ga = acc(grads, *a, g.len());
                for (x, gi) in ga.iter_mut().zip(g) {
                    *x += s * gi;
                }
            }
            Op::Relu(a) => {
                let av = val(a);
                let ga = acc(grads, *a, g.len());
                for ((x, gi), ai) in ga.iter_mut().zip(g).zip(av) {
                    if *ai > 0.0 {
                        *x += gi;
                    }
                }
            }
            Op::Sigmoid(a) => {
                let ga = acc(grads, *a, g.len());
                for ((x, gi), y) in ga.iter_mut().zip(g).zip(out.data()) {
                    *x += gi * y * (1.0 - y);
                }
            }
            Op::SoftmaxRows(a) => {
                let n = *out.shape().last().expect("rank checked");
                let ga = acc(grads, *a, g.len());
                for ((ga_row, g_row), y_row) in ga
                    .chunks_exact_mut(n)
                    .zip(g.chunks_exact(n))
                    .zip(out.data().chunks_exact(n))
                {
                    let dot: f64 = g_row.iter().zip(y_row).map(|(gi, yi)| gi * yi).sum();
                    for ((x, gi), yi) in ga_row.iter_mut().zip(g_row).zip(y_row) {
                        *x += yi * (gi - dot);
                    }
                }
            }
            Op::Transpose(a) => {
                let s = self.shape(*a);
                let (batch, r, c) = batch_dims(s);
                let ga = acc(grads, *a, g.len());
                // out is batch×c×r
                for bi in 0..batch {
                    let base = bi * r * c;
                    for i in 0..r {
                        for j in 0..c {
                            ga[base + i * c + j] += g[base + j * r + i];
                        }
                    }
                }
            }
            Op::SwapLeading(a) => {
                let s = self.shape(*a);
                let (d0, d1, d2) = (s[0], s[1], s[2]);
                let ga = acc(grads, *a, g.len());
                for i in 0..d0 {
                    for j in 0..d1 {
                        let src = (j * d0 + i) * d2;
                        let dst = (i * d1 + j) * d2;
                        add_into(&mut ga[dst..dst + d2], &g[src..src + d2]);
                    }
                }
            }
            Op::Reshape(a) => add_into(acc(grads, *a, g.len()), g),
            Op::SumLast(a) => {
                let n = *self.shape(*a).last().expect("rank checked");
                let ga = acc(grads, *a, g.len() * n);
                for (row, gi) in ga.chunks_exact_mut(n).zip(g) {
                    for x in row {
                        *x += gi;
                    }
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                for x in acc(grads, *a, n) {
                    *x += g[0];
                }
            }
            Op::Mix { alpha, a, b } => {
                let al = val(alpha)[0];
                let (av, bv) = (val(a), val(b));
                let dalpha: f64 = g
                    .iter()
                    .zip(av.iter().zip(bv))
                    .map(|(gi, (x, y))| gi * (x - y))
                    .sum();
                acc(grads, *alpha, 1)[0] += dalpha;
                {
                    let ga = acc(grads, *a, g.len());
                    for (x, gi) in ga.iter_mut().zip(g) {
                        *x += al * gi;
                    }
                }
                let gb = acc(grads, *b, g.len());
                for (x, gi) in gb.iter_mut().zip(g) {
                    *x += (1.0 - al) * gi;
                }
            }
            Op::Slice { src, index } => {
                let n = g.len();
                let total = self.value(*src).len();
                let gs = acc(grads, *src, total);
                add_into(&mut gs[index * n..(index + 1) * n], g);
            }
            Op::Stack(parts) => {
                let n = g.len() / parts.len();
                for (i, p) in parts.iter().enumerate() {
                    add_into(acc(grads, *p, n), &g[i * n..(i + 1) * n]);
                }
            }
            Op::BceWithLogits {
                logits,
                targets,
                mask,
            } => {
                let count = mask.iter().filter(|m| **m).count();
                if count == 0 {
                    return;
                }
                let zv = val(logits);
                let gl = acc(grads, *logits, zv.len());
                let scale = g[0] / count as f64;
                for i in 0..zv.len() {
                    if mask[i] {
                        gl[i] += scale * (sigmoid(zv[i]) - targets[i]);
                    }
                }
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Splits a rank-2 or rank-3 shape into (batch, rows, cols).
fn batch_dims(shape: &[usize]) -> (usize, usize, usize) {
    match shape {
        [r, c] => (1, *r, *c),
        [b, r, c] => (*b, *r, *c),
        _ => unreachable!("rank checked"),
    }
}

fn compute<'a, F>(op: &Op, value: F) -> Tensor
where
    F: Fn(Var) -> &'a Tensor,
{
    match op {
        Op::Leaf | Op::Reshape(_) => unreachable!("handled by the caller"),
        Op::MatMul(a, b) => {
            let (a, b) = (value(*a), value(*b));
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut c = vec![0.0; m * n];
            mm_nn(a.data(), b.data(), &mut c, m, k, n);
            Tensor::new(vec![m, n], c).expect("matmul shape")
        }
        Op::BatchMatMul(a, b) => {
            let (a, b) = (value(*a), value(*b));
            let (batch, m, k, n) = (a.shape()[0], a.shape()[1], a.shape()[2], b.shape()[2]);
            let mut c = vec![0.0; batch * m * n];
            for s in 0..batch {
                mm_nn(
                    &a.data()[s * m * k..(s + 1) * m * k],
                    &b.data()[s * k * n..(s + 1) * k * n],
                    &mut c[s * m * n..(s + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
            Tensor::new(vec![batch, m, n], c).expect("batch matmul shape")
        }
        Op::Add(a, b) => {
            let (a, b) = (value(*a), value(*b));
            let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
            Tensor::new(a.shape().to_vec(), data).expect("add shape")
        }
        Op::AddBias(a, b) => {
            let (a, b) = (value(*a), value(*b));
            let n = b.len();
            let mut data = a.data().to_vec();
            for block in data.chunks_exact_mut(n) {
                add_into(block, b.data());
            }
            Tensor::new(a.shape().to_vec(), data).expect("bias shape")
        }
        Op::MulBias(a, w) => {
            let (a, w) = (value(*a), value(*w));
            let n = w.len();
            let mut data = a.data().to_vec();
            for block in data.chunks_exact_mut(n) {
                for (x, wi) in block.iter_mut().zip(w.data()) {
                    *x *= wi;
                }
            }
            Tensor::new(a.shape().to_vec(), data).expect("bias shape")
        }
        Op::Scale(a, s) => map(value(*a), |x| x * s),
        Op::Relu(a) => map(value(*a), |x| x.max(0.0)),
        Op::Sigmoid(a) => map(value(*a), sigmoid),
        Op::SoftmaxRows(a) => {
            let a = value(*a);
            let n = *a.shape().last().expect("rank checked");
            let mut data = a.data().to_vec();
            if n > 0 {
                for row in data.chunks_exact_mut(n) {
                    softmax_in_place(row);
                }
            }
            Tensor::new(a.shape().to_vec(), data).expect("softmax shape")
        }
        Op::Transpose(a) => {
            let a = value(*a);
            let (batch, r, c) = batch_dims(a.shape());
            let mut data = vec![0.0; a.len()];
            for bi in 0..batch {
                let base = bi * r * c;
                for i in 0..r {
                    for j in 0..c {
                        data[base + j * r + i] = a.data()[base + i * c + j];
                    }
                }
            }
            let mut shape = a.shape().to_vec();
            let k = shape.len();
            shape.swap(k - 2, k - 1);
            Tensor::new(shape, data).expect("transpose shape")
        }
        Op::SwapLeading(a) => {
            let a = value(*a);
            let (d0, d1, d2) = (a.shape()[0], a.shape()[1], a.shape()[2]);
            let mut data = vec![0.0; a.len()];
            for i in 0..d0 {
                for j in 0..d1 {
                    let src = (i * d1 + j) * d2;
                    let dst = (j * d0 + i) * d2;
                    data[dst..dst + d2].copy_from_slice(&a.data()[src..src + d2]);
                }
            }
            Tensor::new(vec![d1, d0, d2], data).expect("swap shape")
        }
        Op::SumLast(a) => {
            let a = value(*a);
            let n = *a.shape().last().expect("rank checked");
            let shape = a.shape()[..a.rank() - 1].to_vec();
            let data = if n == 0 {
                vec![0.0; shape.iter().product()]
            } else {
                a.data()
                    .chunks_exact(n)
                    .map(|row| row.iter().sum())
                    .collect()
            };
            Tensor::new(shape, data).expect("sum shape")
        }
        Op::Sum(a) => Tensor::scalar(value(*a).data().iter().sum()),
        Op::Mix { alpha, a, b } => {
            let al = value(*alpha).data()[0];
            let (a, b) = (value(*a), value(*b));
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| al * x + (1.0 - al) * y)
                .collect();
            Tensor::new(a.shape().to_vec(), data).expect("mix shape")
        }
        Op::Slice { src, index } => {
            let s = value(*src);
            let inner: usize = s.shape()[1..].iter().product();
            Tensor::new(
                s.shape()[1..].to_vec(),
                s.data()[index * inner..(index + 1) * inner].to_vec(),
            )
            .expect("slice shape")
        }
        Op::Stack(parts) => {
            let first = value(parts[0]);
            let mut shape = vec![parts.len()];
            shape.extend_from_slice(first.shape());
            let data = parts
                .iter()
                .flat_map(|p| value(*p).data().iter().copied())
                .collect();
            Tensor::new(shape, data).expect("stack shape")
        }
        Op::BceWithLogits {
            logits,
            targets,
            mask,
        } => {
            let z = value(*logits).data();
            let mut total = 0.0;
            let mut count = 0usize;
            for i in 0..z.len() {
                if mask[i] {
                    total += softplus(z[i]) - targets[i] * z[i];
                    count += 1;
                }
            }
            Tensor::scalar(if count == 0 {
                0.0
            } else {
                total / count as f64
            })
        }
    }
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect()).expect("map shape")
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}
