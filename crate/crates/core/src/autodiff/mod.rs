//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! Every primitive is evaluated eagerly when it is recorded. The backward pass
//! does not produce raw tensors: each local derivative is itself recorded as new
//! tape nodes, so a gradient can be differentiated again. The gradient-norm
//! penalty relies on this to obtain parameter gradients through `∇ₓD(x)`.
//!
//! Masks used by `relu` and `clamp_min` on the way back are recorded as
//! constants, so their second derivative is zero and the second pass reuses the
//! activation pattern of the first.

mod check;
mod tensor;

pub use check::{finite_diff_check, FiniteDiffReport};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op} expects a rank-{expected} tensor, got shape {shape:?}")]
    Rank { op: &'static str, expected: usize, shape: Vec<usize> },
    #[error("{op} domain error: input value {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("gradient output must be a scalar, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("node {0} does not belong to this tape")]
    UnknownNode(usize),
    #[error("output does not depend on node {0}")]
    NoDependency(usize),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive that produced a node.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulNT(NodeId, NodeId),
    /// `aᵀ · b`
    MatMulTN(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId, Vec<usize>),
    Relu(NodeId),
    Logistic(NodeId),
    Log(NodeId),
    /// `1/x`, defined as 0 at `x == 0`.
    Recip(NodeId),
    ClampMin(NodeId, f64),
    Square(NodeId),
    Sqrt(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    Sum(NodeId),
    Mean(NodeId),
    /// Scalar broadcast to the given shape.
    Expand(NodeId, Vec<usize>),
    /// `[m,n] + [n]`, the bias is added to every row.
    BroadcastAdd(NodeId, NodeId),
    /// `[m,n] -> [n]`
    SumRows(NodeId),
    /// `[n] -> [m,n]`
    BroadcastRows(NodeId, usize),
    /// `[m,n] -> [m]`
    SumCols(NodeId),
    /// `[m] -> [m,n]`
    BroadcastCols(NodeId, usize),
    /// Row-wise Euclidean norm, `[m,n] -> [m]`.
    L2Norm(NodeId),
}

impl Op {
    pub fn inputs(&self) -> impl Iterator<Item = NodeId> {
        use Op::*;
        let pair = match self {
            Constant => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | MatMulNT(a, b) | MatMulTN(a, b)
            | BroadcastAdd(a, b) => [Some(*a), Some(*b)],
            Transpose(a) | Reshape(a, _) | Relu(a) | Logistic(a) | Log(a) | Recip(a)
            | ClampMin(a, _) | Square(a) | Sqrt(a) | Scale(a, _) | AddScalar(a, _) | Sum(a)
            | Mean(a) | Expand(a, _) | SumRows(a) | BroadcastRows(a, _) | SumCols(a)
            | BroadcastCols(a, _) | L2Norm(a) => [Some(*a), None],
        };
        pair.into_iter().flatten()
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub value: Tensor,
}

/// Append-only computation graph. Inputs of a node always have smaller ids.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() == rank {
        Ok(())
    } else {
        Err(AutodiffError::Rank { op, expected: rank, shape: t.shape().to_vec() })
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(AutodiffError::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() })
    }
}

/// Forward evaluation of one primitive; shared by recording and replay.
fn eval_op<'a>(op: &Op, val: impl Fn(NodeId) -> &'a Tensor) -> Result<Tensor> {
    let out = match op {
        Op::Constant => unreachable!("constants carry their own value"),
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
            let (x, y) = (val(*a), val(*b));
            let name = match op {
                Op::Add(..) => "add",
                Op::Sub(..) => "sub",
                _ => "mul",
            };
            same_shape(name, x, y)?;
            match op {
                Op::Add(..) => x.zip_map(y, |p, q| p + q),
                Op::Sub(..) => x.zip_map(y, |p, q| p - q),
                _ => x.zip_map(y, |p, q| p * q),
            }
        }
        Op::MatMul(a, b) => {
            let (x, y) = (val(*a), val(*b));
            expect_rank("matmul", x, 2)?;
            expect_rank("matmul", y, 2)?;
            if x.cols() != y.rows() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "matmul",
                    lhs: x.shape().to_vec(),
                    rhs: y.shape().to_vec(),
                });
            }
            x.matmul(y)
        }
        Op::MatMulNT(a, b) | Op::MatMulTN(a, b) => {
            let (x, y) = (val(*a), val(*b));
            let nt = matches!(op, Op::MatMulNT(..));
            let name = if nt { "matmul_nt" } else { "matmul_tn" };
            expect_rank(name, x, 2)?;
            expect_rank(name, y, 2)?;
            let ok = if nt { x.cols() == y.cols() } else { x.rows() == y.rows() };
            if !ok {
                return Err(AutodiffError::ShapeMismatch {
                    op: name,
                    lhs: x.shape().to_vec(),
                    rhs: y.shape().to_vec(),
                });
            }
            if nt {
                x.matmul_nt(y)
            } else {
                x.matmul_tn(y)
            }
        }
        Op::Transpose(a) => {
            let x = val(*a);
            expect_rank("transpose", x, 2)?;
            x.transpose()
        }
        Op::Reshape(a, shape) => {
            let x = val(*a);
            if shape.iter().product::<usize>() != x.len() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "reshape",
                    lhs: x.shape().to_vec(),
                    rhs: shape.clone(),
                });
            }
            x.clone().reshaped(shape.clone())
        }
        Op::Relu(a) => val(*a).map(|v| if v > 0.0 { v } else { 0.0 }),
        Op::Logistic(a) => val(*a).map(logistic),
        Op::Log(a) => {
            let x = val(*a);
            if let Some(&bad) = x.data().iter().find(|&&v| !(v > 0.0)) {
                return Err(AutodiffError::Domain { op: "log", value: bad });
            }
            x.map(f64::ln)
        }
        Op::Recip(a) => val(*a).map(|v| if v == 0.0 { 0.0 } else { 1.0 / v }),
        Op::ClampMin(a, lo) => val(*a).map(|v| v.max(*lo)),
        Op::Square(a) => val(*a).map(|v| v * v),
        Op::Sqrt(a) => {
            let x = val(*a);
            if let Some(&bad) = x.data().iter().find(|&&v| v < 0.0) {
                return Err(AutodiffError::Domain { op: "sqrt", value: bad });
            }
            x.map(f64::sqrt)
        }
        Op::Scale(a, c) => val(*a).map(|v| v * c),
        Op::AddScalar(a, c) => val(*a).map(|v| v + c),
        Op::Sum(a) => Tensor::scalar(val(*a).data().iter().sum()),
        Op::Mean(a) => {
            let x = val(*a);
            Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64)
        }
        Op::Expand(a, shape) => {
            let x = val(*a);
            expect_rank("expand", x, 0)?;
            Tensor::full(shape, x.item())
        }
        Op::BroadcastAdd(a, b) => {
            let (x, bias) = (val(*a), val(*b));
            expect_rank("broadcast_add", x, 2)?;
            expect_rank("broadcast_add", bias, 1)?;
            if x.cols() != bias.len() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "broadcast_add",
                    lhs: x.shape().to_vec(),
                    rhs: bias.shape().to_vec(),
                });
            }
            let n = x.cols();
            let mut out = x.data().to_vec();
            for row in out.chunks_mut(n) {
                for (o, b) in row.iter_mut().zip(bias.data()) {
                    *o += b;
                }
            }
            Tensor::matrix(out.len() / n.max(1), n, out)
        }
        Op::SumRows(a) => {
            let x = val(*a);
            expect_rank("sum_rows", x, 2)?;
            let n = x.cols();
            let mut out = vec![0.0; n];
            for i in 0..x.rows() {
                for (o, v) in out.iter_mut().zip(x.row(i)) {
                    *o += v;
                }
            }
            Tensor::vector(out)
        }
        Op::BroadcastRows(a, m) => {
            let x = val(*a);
            expect_rank("broadcast_rows", x, 1)?;
            let n = x.len();
            let mut out = Vec::with_capacity(m * n);
            for _ in 0..*m {
                out.extend_from_slice(x.data());
            }
            Tensor::matrix(*m, n, out)
        }
        Op::SumCols(a) => {
            let x = val(*a);
            expect_rank("sum_cols", x, 2)?;
            Tensor::vector((0..x.rows()).map(|i| x.row(i).iter().sum()).collect())
        }
        Op::BroadcastCols(a, n) => {
            let x = val(*a);
            expect_rank("broadcast_cols", x, 1)?;
            let mut out = Vec::with_capacity(x.len() * n);
            for &v in x.data() {
                out.extend(std::iter::repeat(v).take(*n));
            }
            Tensor::matrix(x.len(), *n, out)
        }
        Op::L2Norm(a) => {
            let x = val(*a);
            expect_rank("l2norm", x, 2)?;
            Tensor::vector(
                (0..x.rows()).map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).collect(),
            )
        }
    };
    Ok(out)
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    /// The eagerly computed value of `id`.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(AutodiffError::UnknownNode(id.0))
        }
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        for i in op.inputs().collect::<Vec<_>>() {
            self.check(i)?;
        }
        let value = {
            let nodes = &self.nodes;
            eval_op(&op, |id| &nodes[id.0].value)?
        };
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Records a leaf.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Constant, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMulNT(a, b))
    }
    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMulTN(a, b))
    }
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose(a))
    }
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::Reshape(a, shape.to_vec()))
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(a))
    }
    pub fn logistic(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Logistic(a))
    }
    /// Natural log; errors on any non-positive entry.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Log(a))
    }
    pub fn recip(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Recip(a))
    }
    pub fn clamp_min(&mut self, a: NodeId, lo: f64) -> Result<NodeId> {
        self.push(Op::ClampMin(a, lo))
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Square(a))
    }
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sqrt(a))
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::Scale(a, c))
    }
    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::AddScalar(a, c))
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(a))
    }
    pub fn expand(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::Expand(a, shape.to_vec()))
    }
    pub fn broadcast_add(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::BroadcastAdd(a, bias))
    }
    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SumRows(a))
    }
    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        self.push(Op::BroadcastRows(a, rows))
    }
    pub fn sum_cols(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SumCols(a))
    }
    pub fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> Result<NodeId> {
        self.push(Op::BroadcastCols(a, cols))
    }
    pub fn l2norm(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::L2Norm(a))
    }

    /// Recomputes every non-constant node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Constant => node.value.clone(),
                ref op => eval_op(op, |id| &values[id.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// True if `output` is reachable from `input` through recorded ops.
    pub fn depends_on(&self, output: NodeId, input: NodeId) -> bool {
        if input.0 > output.0 {
            return false;
        }
        let mut reach = vec![false; output.0 + 1];
        reach[input.0] = true;
        for i in input.0 + 1..=output.0 {
            reach[i] = self.nodes[i].op.inputs().any(|p| reach[p.0]);
        }
        reach[output.0]
    }

    /// Reverse-mode gradient of the scalar `output` with respect to each of
    /// `wrt`. The returned gradients are nodes on this tape and can be
    /// differentiated again. Inputs that `output` does not depend on get a
    /// zero constant.
    pub fn gradient(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        self.check(output)?;
        for &w in wrt {
            self.check(w)?;
        }
        if !self.value(output).is_scalar() {
            return Err(AutodiffError::NonScalarOutput(self.value(output).shape().to_vec()));
        }
        let n = output.0 + 1;
        let mut needs = vec![false; n];
        for &w in wrt {
            if w.0 < n {
                needs[w.0] = true;
            }
        }
        let start = wrt.iter().map(|w| w.0).min().unwrap_or(n);
        for i in start..n {
            if !needs[i] {
                needs[i] = self.nodes[i].op.inputs().any(|p| needs[p.0]);
            }
        }

        let mut grads: Vec<Option<NodeId>> = vec![None; n];
        if needs[output.0] {
            grads[output.0] = Some(self.constant(Tensor::scalar(1.0)));
        }
        for i in (start..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !needs[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (input, contrib) in self.backward_rule(NodeId(i), &op, g, &needs)? {
                grads[input.0] = Some(match grads[input.0] {
                    None => contrib,
                    Some(prev) => self.add(prev, contrib)?,
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.value(w).shape().to_vec();
                    self.constant(Tensor::zeros(&shape))
                }
            })
            .collect())
    }

    /// `∇ₓ Σᵢ out[i]`. Rows of a batch are independent, so row `i` of the
    /// result is the input gradient of `out[i]` with respect to row `i` of `x`.
    pub fn input_gradient_node(&mut self, out: NodeId, x: NodeId) -> Result<NodeId> {
        self.check(out)?;
        self.check(x)?;
        if !self.depends_on(out, x) {
            return Err(AutodiffError::NoDependency(x.0));
        }
        let total = if self.value(out).is_scalar() { out } else { self.sum(out)? };
        Ok(self.gradient(total, &[x])?[0])
    }

    fn mask(&mut self, of: NodeId, pred: impl Fn(f64) -> bool) -> NodeId {
        let m = self.value(of).map(|v| if pred(v) { 1.0 } else { 0.0 });
        self.constant(m)
    }

    /// Records the vector-Jacobian products of node `id` for upstream `g`.
    fn backward_rule(
        &mut self,
        id: NodeId,
        op: &Op,
        g: NodeId,
        needs: &[bool],
    ) -> Result<Vec<(NodeId, NodeId)>> {
        let want = |n: NodeId| needs[n.0];
        let mut out = Vec::with_capacity(2);
        match *op {
            Op::Constant => {}
            Op::Add(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, self.scale(g, -1.0)?));
                }
            }
            Op::Mul(a, b) => {
                if want(a) {
                    out.push((a, self.mul(g, b)?));
                }
                if want(b) {
                    out.push((b, self.mul(g, a)?));
                }
            }
            Op::MatMul(a, b) => {
                if want(a) {
                    out.push((a, self.matmul_nt(g, b)?));
                }
                if want(b) {
                    out.push((b, self.matmul_tn(a, g)?));
                }
            }
            Op::MatMulNT(a, b) => {
                if want(a) {
                    out.push((a, self.matmul(g, b)?));
                }
                if want(b) {
                    out.push((b, self.matmul_tn(g, a)?));
                }
            }
            Op::MatMulTN(a, b) => {
                if want(a) {
                    out.push((a, self.matmul_nt(b, g)?));
                }
                if want(b) {
                    out.push((b, self.matmul(a, g)?));
                }
            }
            Op::Transpose(a) => out.push((a, self.transpose(g)?)),
            Op::Reshape(a, _) => {
                let shape = self.value(a).shape().to_vec();
                out.push((a, self.reshape(g, &shape)?));
            }
            Op::Relu(a) => {
                let m = self.mask(a, |v| v > 0.0);
                out.push((a, self.mul(g, m)?));
            }
            Op::ClampMin(a, lo) => {
                let m = self.mask(a, |v| v > lo);
                out.push((a, self.mul(g, m)?));
            }
            Op::Logistic(a) => {
                let neg = self.scale(id, -1.0)?;
                let one_minus = self.add_scalar(neg, 1.0)?;
                let ds = self.mul(id, one_minus)?;
                out.push((a, self.mul(g, ds)?));
            }
            Op::Log(a) => {
                let r = self.recip(a)?;
                out.push((a, self.mul(g, r)?));
            }
            Op::Recip(a) => {
                let sq = self.square(id)?;
                let neg = self.scale(sq, -1.0)?;
                out.push((a, self.mul(g, neg)?));
            }
            Op::Square(a) => {
                let two = self.scale(a, 2.0)?;
                out.push((a, self.mul(g, two)?));
            }
            Op::Sqrt(a) => {
                let r = self.recip(id)?;
                let half = self.scale(r, 0.5)?;
                out.push((a, self.mul(g, half)?));
            }
            Op::Scale(a, c) => out.push((a, self.scale(g, c)?)),
            Op::AddScalar(a, _) => out.push((a, g)),
            Op::Sum(a) => {
                let shape = self.value(a).shape().to_vec();
                out.push((a, self.expand(g, &shape)?));
            }
            Op::Mean(a) => {
                let shape = self.value(a).shape().to_vec();
                let n = self.value(a).len() as f64;
                let e = self.expand(g, &shape)?;
                out.push((a, self.scale(e, 1.0 / n)?));
            }
            Op::Expand(a, _) => out.push((a, self.sum(g)?)),
            Op::BroadcastAdd(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, self.sum_rows(g)?));
                }
            }
            Op::SumRows(a) => {
                let m = self.value(a).rows();
                out.push((a, self.broadcast_rows(g, m)?));
            }
            Op::BroadcastRows(a, _) => out.push((a, self.sum_rows(g)?)),
            Op::SumCols(a) => {
                let n = self.value(a).cols();
                out.push((a, self.broadcast_cols(g, n)?));
            }
            Op::BroadcastCols(a, _) => out.push((a, self.sum_cols(g)?)),
            Op::L2Norm(a) => {
                // d‖x‖/dx = x/‖x‖, taken as 0 for a zero row.
                let n = self.value(a).cols();
                let r = self.recip(id)?;
                let scaled = self.mul(g, r)?;
                let wide = self.broadcast_cols(scaled, n)?;
                out.push((a, self.mul(wide, a)?));
            }
        }
        Ok(out)
    }
}
