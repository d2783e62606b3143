use crate::linalg::{LinalgError, Matrix};

use super::AutodiffError;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `op(a) · op(b)`, `op` transposing when the flag is set.
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    /// Adds a 1×m row to every row of an n×m matrix.
    AddBias { x: NodeId, bias: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product.
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    /// `max(x, c)` elementwise.
    MaxConst(NodeId, f64),
    /// `g ⊙ 1[x > c]`; the indicator is treated as a constant.
    Mask { g: NodeId, x: NodeId, c: f64 },
    Square(NodeId),
    /// `1/x` elementwise, defined as 0 where `x == 0`.
    SafeRecip(NodeId),
    /// Per-row Euclidean norm, n×m → n×1.
    RowNorm(NodeId),
    /// Sum of all entries, → 1×1.
    Sum(NodeId),
    /// 1×1 → rows×cols.
    Broadcast(NodeId),
    /// Column sums, n×m → 1×m.
    SumRows(NodeId),
    /// 1×m → n×m.
    BroadcastRows(NodeId),
    /// Row sums, n×m → n×1.
    SumCols(NodeId),
    /// n×1 → n×m.
    BroadcastCols(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Append-only record of matrix operations supporting reverse-mode
/// differentiation. Gradients are themselves recorded as nodes, so they can
/// be differentiated again.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.shape(), (1, 1), "node is not scalar");
        v.data()[0]
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    /// Records a constant or parameter.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: NodeId, ta: bool, b: NodeId, tb: bool) -> Result<NodeId, LinalgError> {
        let value = Matrix::gemm(self.value(a), ta, self.value(b), tb)?;
        Ok(self.push(Op::MatMul { a, b, ta, tb }, value))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, LinalgError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(LinalgError::Shape {
                op: "add_bias",
                left: xv.shape(),
                right: bv.shape(),
            });
        }
        let mut out = xv.clone();
        let b = bv.data();
        for i in 0..out.rows() {
            for (o, bj) in out.row_mut(i).iter_mut().zip(b) {
                *o += bj;
            }
        }
        Ok(self.push(Op::AddBias { x, bias }, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, LinalgError> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, LinalgError> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, LinalgError> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).scale(c);
        self.push(Op::Scale(a, c), value)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).map(|v| v + c);
        self.push(Op::AddConst(a), value)
    }

    pub fn max_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).map(|v| v.max(c));
        self.push(Op::MaxConst(a, c), value)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.max_const(a, 0.0)
    }

    fn mask(&mut self, g: NodeId, x: NodeId, c: f64) -> NodeId {
        let value = self
            .value(g)
            .zip_map(self.value(x), "mask", |gv, xv| if xv > c { gv } else { 0.0 })
            .expect("mask operands share the shape of the masked node");
        self.push(Op::Mask { g, x, c }, value)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| v * v);
        self.push(Op::Square(a), value)
    }

    pub fn safe_recip(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| if v == 0.0 { 0.0 } else { 1.0 / v });
        self.push(Op::SafeRecip(a), value)
    }

    pub fn row_norm(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let norms = av.row_norms();
        let value = Matrix::from_raw(av.rows(), 1, norms);
        self.push(Op::RowNorm(a), value)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Matrix::from_raw(1, 1, vec![self.value(a).sum()]);
        self.push(Op::Sum(a), value)
    }

    /// Mean of all entries.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    fn broadcast(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let value = Matrix::filled(rows, cols, self.scalar(a));
        self.push(Op::Broadcast(a), value)
    }

    fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut out = vec![0.0; av.cols()];
        for i in 0..av.rows() {
            for (o, v) in out.iter_mut().zip(av.row(i)) {
                *o += v;
            }
        }
        let value = Matrix::from_raw(1, av.cols(), out);
        self.push(Op::SumRows(a), value)
    }

    fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> NodeId {
        let av = self.value(a);
        let value = Matrix::from_raw(rows, av.cols(), av.data().repeat(rows));
        self.push(Op::BroadcastRows(a), value)
    }

    fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let out = (0..av.rows()).map(|i| av.row(i).iter().sum()).collect();
        let value = Matrix::from_raw(av.rows(), 1, out);
        self.push(Op::SumCols(a), value)
    }

    fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().flat_map(|&v| std::iter::repeat(v).take(cols)).collect();
        let value = Matrix::from_raw(av.rows(), cols, data);
        self.push(Op::BroadcastCols(a), value)
    }

    /// Differentiable inputs of a node (mask indicators excluded).
    fn inputs(op: &Op) -> Vec<NodeId> {
        match *op {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } => vec![a, b],
            Op::AddBias { x, bias } => vec![x, bias],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::MaxConst(a, _)
            | Op::Square(a)
            | Op::SafeRecip(a)
            | Op::RowNorm(a)
            | Op::Sum(a)
            | Op::SumRows(a)
            | Op::SumCols(a) => vec![a],
            Op::Mask { g, .. } => vec![g],
            Op::Broadcast(a) | Op::BroadcastRows(a) | Op::BroadcastCols(a) => vec![a],
        }
    }

    /// Reverse-mode gradients of the scalar `root` with respect to `wrt`.
    ///
    /// The adjoints are recorded on this tape, so the returned nodes can be
    /// used in further expressions and differentiated again. Entries are
    /// `None` when `root` does not depend on the corresponding node.
    pub fn gradients(&mut self, root: NodeId, wrt: &[NodeId]) -> Result<Vec<Option<NodeId>>, AutodiffError> {
        let shape = self.shape(root);
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarRoot { shape });
        }
        let end = root.0 + 1;
        let mut depends = vec![false; end];
        for &w in wrt {
            if w.0 < end {
                depends[w.0] = true;
            }
        }
        for i in 0..end {
            if !depends[i] {
                depends[i] = Self::inputs(&self.nodes[i].op).iter().any(|j| depends[j.0]);
            }
        }

        let mut adjoint: Vec<Option<NodeId>> = vec![None; end];
        if depends[root.0] {
            adjoint[root.0] = Some(self.leaf(Matrix::filled(1, 1, 1.0)));
        }
        for i in (0..end).rev() {
            let Some(g) = adjoint[i] else { continue };
            if !depends[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (input, contrib) in self.vjp(&op, NodeId(i), g, &depends)? {
                adjoint[input.0] = Some(match adjoint[input.0] {
                    Some(prev) => self.add(prev, contrib)?,
                    None => contrib,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|w| if w.0 < end { adjoint[w.0] } else { None })
            .collect())
    }

    /// Vector-Jacobian products of `node` for each input that needs one.
    fn vjp(&mut self, op: &Op, node: NodeId, g: NodeId, depends: &[bool]) -> Result<Vec<(NodeId, NodeId)>, LinalgError> {
        let needs = |id: NodeId| depends[id.0];
        let mut out = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                if needs(a) {
                    let da = if ta { self.matmul(b, tb, g, true)? } else { self.matmul(g, false, b, !tb)? };
                    out.push((a, da));
                }
                if needs(b) {
                    let db = if tb { self.matmul(g, true, a, ta)? } else { self.matmul(a, !ta, g, false)? };
                    out.push((b, db));
                }
            }
            Op::AddBias { x, bias } => {
                if needs(x) {
                    out.push((x, g));
                }
                if needs(bias) {
                    out.push((bias, self.sum_rows(g)));
                }
            }
            Op::Add(a, b) => {
                if needs(a) {
                    out.push((a, g));
                }
                if needs(b) {
                    out.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if needs(a) {
                    out.push((a, g));
                }
                if needs(b) {
                    out.push((b, self.scale(g, -1.0)));
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    out.push((a, self.mul(g, b)?));
                }
                if needs(b) {
                    out.push((b, self.mul(g, a)?));
                }
            }
            Op::Scale(a, c) => out.push((a, self.scale(g, c))),
            Op::AddConst(a) => out.push((a, g)),
            Op::MaxConst(a, c) => out.push((a, self.mask(g, a, c))),
            Op::Mask { x, c, g: inner } => {
                debug_assert!(needs(inner));
                out.push((inner, self.mask(g, x, c)));
            }
            Op::Square(a) => {
                let ga = self.mul(g, a)?;
                out.push((a, self.scale(ga, 2.0)));
            }
            Op::SafeRecip(a) => {
                let r2 = self.square(node);
                let gr = self.mul(g, r2)?;
                out.push((a, self.scale(gr, -1.0)));
            }
            Op::RowNorm(a) => {
                let cols = self.value(a).cols();
                let inv = self.safe_recip(node);
                let scaled = self.mul(g, inv)?;
                let wide = self.broadcast_cols(scaled, cols);
                out.push((a, self.mul(wide, a)?));
            }
            Op::Sum(a) => {
                let (rows, cols) = self.shape(a);
                out.push((a, self.broadcast(g, rows, cols)));
            }
            Op::Broadcast(a) => out.push((a, self.sum(g))),
            Op::SumRows(a) => {
                let rows = self.value(a).rows();
                out.push((a, self.broadcast_rows(g, rows)));
            }
            Op::BroadcastRows(a) => out.push((a, self.sum_rows(g))),
            Op::SumCols(a) => {
                let cols = self.value(a).cols();
                out.push((a, self.broadcast_cols(g, cols)));
            }
            Op::BroadcastCols(a) => out.push((a, self.sum_cols(g))),
        }
        Ok(out)
    }
}
