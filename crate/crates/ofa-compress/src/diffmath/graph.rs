//! Reverse-mode gradient tape.
//!
//! Operations are recorded eagerly into an arena of nodes; [`Graph::backward`]
//! replays them in reverse, accumulating vector-Jacobian products into every
//! ancestor. One scalar loss, many parameters, so reverse mode is the right
//! trade. A graph is single-owner: evaluate concurrently by giving each task
//! its own graph over read-only parameter matrices.

use crate::cif::{self, CifLayout};
use crate::error::{Error, Result};

use super::matrix::{matmul_into, sigmoid, Matrix};

/// Handle to a node on a [`Graph`]. Only meaningful for the graph that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    /// a * b^T
    MatmulTB(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Broadcast a 1 x cols row vector over every row of the left operand.
    AddRowVec(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    /// Multiply every entry by a 1x1 node.
    MulScalar(NodeId, NodeId),
    /// Add a 1x1 node to every entry.
    AddScalar(NodeId, NodeId),
    Recip(NodeId),
    Min(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Abs(NodeId),
    Log(NodeId),
    Clamp(NodeId, f64, f64),
    Sum(NodeId),
    Mean(NodeId),
    SoftmaxRows(NodeId),
    /// Row-wise cosine similarity of two equally shaped matrices -> n x 1.
    CosineRows(NodeId, NodeId),
    GatherRows(NodeId, Vec<usize>),
    /// CIF pooling weights from an alpha vector under a fixed segmentation.
    CifWeights(NodeId, CifLayout),
}

struct Node {
    value: Matrix,
    op: Op,
    grad: Option<Vec<f64>>,
}

/// The gradient context: records operations and runs the backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    macs: u64,
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    /// Register a leaf (parameter or constant input). The graph owns a copy.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.leaf(Matrix::scalar(value))
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Multiply-accumulate count of all matmuls recorded so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op, grad: None });
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        (self.nodes[id.0].value.rows(), self.nodes[id.0].value.cols())
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn expect_scalar(&self, id: NodeId, what: &str) -> Result<()> {
        if self.shape(id) != (1, 1) {
            return Err(Error::Dimension(format!(
                "{what}: expected 1x1, got {:?}",
                self.shape(id)
            )));
        }
        Ok(())
    }

    // ── Recorded operations ─────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::Dimension(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = Matrix::zeros(m, n);
        matmul_into(
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            out.data_mut(),
            m,
            k,
            n,
        );
        self.macs += (m * k * n) as u64;
        Ok(self.push(out, Op::Matmul(a, b)))
    }

    /// a * b^T where a is m x k and b is n x k.
    pub fn matmul_tb(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(Error::Dimension(format!("matmul_tb {m}x{k} by ({n}x{k2})^T")));
        }
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut out = Matrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += av[i * k + p] * bv[j * k + p];
                }
                out.data_mut()[i * n + j] = acc;
            }
        }
        self.macs += (m * k * n) as u64;
        Ok(self.push(out, Op::MatmulTB(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let out = self.zip(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn add_row_vec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (_, cols) = self.shape(m);
        if self.shape(v) != (1, cols) {
            return Err(Error::Dimension(format!(
                "add_row_vec {:?} with {:?}",
                self.shape(m),
                self.shape(v)
            )));
        }
        let out = self.nodes[m.0].value.add_row_vec(&self.nodes[v.0].value)?;
        Ok(self.push(out, Op::AddRowVec(m, v)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.nodes[x.0].value.map(|v| c * v);
        self.push(out, Op::Scale(x, c))
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        let out = self.nodes[x.0].value.map(|v| v + c);
        self.push(out, Op::AddConst(x))
    }

    pub fn mul_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        self.expect_scalar(s, "mul_scalar")?;
        let sv = self.nodes[s.0].value.get(0, 0);
        let out = self.nodes[x.0].value.map(|v| v * sv);
        Ok(self.push(out, Op::MulScalar(x, s)))
    }

    pub fn add_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        self.expect_scalar(s, "add_scalar")?;
        let sv = self.nodes[s.0].value.get(0, 0);
        let out = self.nodes[x.0].value.map(|v| v + sv);
        Ok(self.push(out, Op::AddScalar(x, s)))
    }

    pub fn recip(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.map(|v| 1.0 / v);
        self.push(out, Op::Recip(x))
    }

    /// Elementwise minimum; gradient routes to whichever side is smaller
    /// (ties go left).
    pub fn min(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "min")?;
        let out = self.zip(a, b, f64::min);
        Ok(self.push(out, Op::Min(a, b)))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.map(f64::abs);
        self.push(out, Op::Abs(x))
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].value.map(f64::ln);
        self.push(out, Op::Log(x))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = self.nodes[x.0].value.map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp(x, lo, hi))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        self.push(Matrix::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x.0].value.numel() as f64;
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        self.push(Matrix::scalar(s / n), Op::Mean(x))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x.0].value;
        let (rows, cols) = (v.rows(), v.cols());
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row = v.row(r);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for c in 0..cols {
                let e = (row[c] - mx).exp();
                out.data_mut()[r * cols + c] = e;
                denom += e;
            }
            for c in 0..cols {
                out.data_mut()[r * cols + c] /= denom;
            }
        }
        self.push(out, Op::SoftmaxRows(x))
    }

    /// Per-row cosine similarity, guarded by `eps` against zero norms.
    pub fn cosine_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "cosine_rows")?;
        let (rows, _) = self.shape(a);
        let mut out = Matrix::zeros(rows, 1);
        for r in 0..rows {
            let (x, y) = (self.nodes[a.0].value.row(r), self.nodes[b.0].value.row(r));
            out.data_mut()[r] = cosine(x, y);
        }
        Ok(self.push(out, Op::CosineRows(a, b)))
    }

    /// Select rows of `x` by index; indices may repeat.
    pub fn gather_rows(&mut self, x: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        let (rows, cols) = self.shape(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::InvalidArg(format!(
                "gather_rows index {bad} out of {rows}"
            )));
        }
        let mut out = Matrix::zeros(indices.len(), cols);
        for (k, &i) in indices.iter().enumerate() {
            let src = self.nodes[x.0].value.row(i).to_vec();
            out.data_mut()[k * cols..(k + 1) * cols].copy_from_slice(&src);
        }
        Ok(self.push(out, Op::GatherRows(x, indices)))
    }

    /// Dense N x T matrix of effective CIF pooling weights for `alpha`
    /// (a T x 1 or 1 x T node) under the fixed segmentation `layout`.
    /// Event positions are piecewise-constant: gradients flow through the
    /// weights only.
    pub fn cif_weights(&mut self, alpha: NodeId, layout: CifLayout) -> Result<NodeId> {
        let v = &self.nodes[alpha.0].value;
        if v.rows() != 1 && v.cols() != 1 {
            return Err(Error::Dimension(format!(
                "cif_weights: alpha must be a vector, got {}x{}",
                v.rows(),
                v.cols()
            )));
        }
        if v.numel() != layout.source_len {
            return Err(Error::Length(format!(
                "cif_weights: alpha length {} vs layout length {}",
                v.numel(),
                layout.source_len
            )));
        }
        let out = cif::dense_weight_matrix(v.data(), &layout);
        Ok(self.push(out, Op::CifWeights(alpha, layout)))
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Matrix::from_vec(av.rows(), av.cols(), data).expect("zip shape")
    }

    // ── Backward pass ───────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients of nodes the loss does
    /// not depend on stay `None` (read as zeros).
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Unrecorded(loss.0));
        }
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarLoss { rows: r, cols: c });
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        // Tape order is topological: parents always precede children.
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            self.backprop_one(i, &g, &op);
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    /// Gradient of the last backward pass w.r.t. node `id`, or `None` if the
    /// loss did not depend on it.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Gradient as a matrix shaped like the node, zeros when absent.
    pub fn grad_matrix(&self, id: NodeId) -> Matrix {
        let (r, c) = self.shape(id);
        match self.grad(id) {
            Some(g) => Matrix::from_vec(r, c, g.to_vec()).expect("grad shape"),
            None => Matrix::zeros(r, c),
        }
    }

    fn accumulate(&mut self, id: NodeId, delta: &[f64]) {
        let numel = self.nodes[id.0].value.numel();
        debug_assert_eq!(delta.len(), numel);
        match &mut self.nodes[id.0].grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => self.nodes[id.0].grad = Some(delta.to_vec()),
        }
    }

    fn backprop_one(&mut self, i: usize, g: &[f64], op: &Op) {
        match op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).1;
                // d_a = g * b^T
                let bv = self.nodes[b.0].value.data().to_vec();
                let mut da = vec![0.0; m * k];
                for r in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[r * n + j] * bv[p * n + j];
                        }
                        da[r * k + p] = acc;
                    }
                }
                self.accumulate(*a, &da);
                // d_b = a^T * g
                let av = self.nodes[a.0].value.data().to_vec();
                let mut db = vec![0.0; k * n];
                for p in 0..k {
                    for r in 0..m {
                        let av_rp = av[r * k + p];
                        if av_rp == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            db[p * n + j] += av_rp * g[r * n + j];
                        }
                    }
                }
                self.accumulate(*b, &db);
            }
            Op::MatmulTB(a, b) => {
                // out = a * b^T, a: m x k, b: n x k, g: m x n
                let (m, k) = self.shape(*a);
                let n = self.shape(*b).0;
                let bv = self.nodes[b.0].value.data().to_vec();
                let mut da = vec![0.0; m * k];
                for r in 0..m {
                    for j in 0..n {
                        let grj = g[r * n + j];
                        if grj == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[r * k + p] += grj * bv[j * k + p];
                        }
                    }
                }
                self.accumulate(*a, &da);
                let av = self.nodes[a.0].value.data().to_vec();
                let mut db = vec![0.0; n * k];
                for j in 0..n {
                    for r in 0..m {
                        let grj = g[r * n + j];
                        if grj == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            db[j * k + p] += grj * av[r * k + p];
                        }
                    }
                }
                self.accumulate(*b, &db);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, g);
                self.accumulate(*b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                self.accumulate(*b, &neg);
            }
            Op::Mul(a, b) => {
                let bv = self.nodes[b.0].value.data().to_vec();
                let da: Vec<f64> = g.iter().zip(&bv).map(|(gi, bi)| gi * bi).collect();
                self.accumulate(*a, &da);
                let av = self.nodes[a.0].value.data().to_vec();
                let db: Vec<f64> = g.iter().zip(&av).map(|(gi, ai)| gi * ai).collect();
                self.accumulate(*b, &db);
            }
            Op::AddRowVec(m_id, v_id) => {
                self.accumulate(*m_id, g);
                let (rows, cols) = self.shape(*m_id);
                let mut dv = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        dv[c] += g[r * cols + c];
                    }
                }
                self.accumulate(*v_id, &dv);
            }
            Op::Scale(x, c) => {
                let dx: Vec<f64> = g.iter().map(|v| v * c).collect();
                self.accumulate(*x, &dx);
            }
            Op::AddConst(x) => self.accumulate(*x, g),
            Op::MulScalar(x, s) => {
                let sv = self.nodes[s.0].value.get(0, 0);
                let dx: Vec<f64> = g.iter().map(|v| v * sv).collect();
                self.accumulate(*x, &dx);
                let xv = self.nodes[x.0].value.data().to_vec();
                let ds: f64 = g.iter().zip(&xv).map(|(gi, xi)| gi * xi).sum();
                self.accumulate(*s, &[ds]);
            }
            Op::AddScalar(x, s) => {
                self.accumulate(*x, g);
                let ds: f64 = g.iter().sum();
                self.accumulate(*s, &[ds]);
            }
            Op::Recip(x) => {
                let xv = self.nodes[x.0].value.data().to_vec();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&xv)
                    .map(|(gi, xi)| -gi / (xi * xi))
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Min(a, b) => {
                let av = self.nodes[a.0].value.data().to_vec();
                let bv = self.nodes[b.0].value.data().to_vec();
                let da: Vec<f64> = g
                    .iter()
                    .zip(av.iter().zip(&bv))
                    .map(|(gi, (x, y))| if x <= y { *gi } else { 0.0 })
                    .collect();
                let db: Vec<f64> = g
                    .iter()
                    .zip(av.iter().zip(&bv))
                    .map(|(gi, (x, y))| if x <= y { 0.0 } else { *gi })
                    .collect();
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::Sigmoid(x) => {
                let yv = self.nodes[i].value.data().to_vec();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&yv)
                    .map(|(gi, yi)| gi * yi * (1.0 - yi))
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Tanh(x) => {
                let yv = self.nodes[i].value.data().to_vec();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&yv)
                    .map(|(gi, yi)| gi * (1.0 - yi * yi))
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Relu(x) => {
                let xv = self.nodes[x.0].value.data().to_vec();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&xv)
                    .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Abs(x) => {
                let xv = self.nodes[x.0].value.data().to_vec();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&xv)
                    .map(|(gi, xi)| gi * xi.signum() * (*xi != 0.0) as i32 as f64)
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Log(x) => {
                let xv = self.nodes[x.0].value.data().to_vec();
                let dx: Vec<f64> = g.iter().zip(&xv).map(|(gi, xi)| gi / xi).collect();
                self.accumulate(*x, &dx);
            }
            Op::Clamp(x, lo, hi) => {
                let xv = self.nodes[x.0].value.data().to_vec();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&xv)
                    .map(|(gi, xi)| if *xi > *lo && *xi < *hi { *gi } else { 0.0 })
                    .collect();
                self.accumulate(*x, &dx);
            }
            Op::Sum(x) => {
                let n = self.nodes[x.0].value.numel();
                let dx = vec![g[0]; n];
                self.accumulate(*x, &dx);
            }
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.numel();
                let dx = vec![g[0] / n as f64; n];
                self.accumulate(*x, &dx);
            }
            Op::SoftmaxRows(x) => {
                let (rows, cols) = self.shape(*x);
                let yv = self.nodes[i].value.data().to_vec();
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    let mut dot = 0.0;
                    for c in 0..cols {
                        dot += g[r * cols + c] * yv[r * cols + c];
                    }
                    for c in 0..cols {
                        let idx = r * cols + c;
                        dx[idx] = yv[idx] * (g[idx] - dot);
                    }
                }
                self.accumulate(*x, &dx);
            }
            Op::CosineRows(a, b) => {
                let (rows, cols) = self.shape(*a);
                let av = self.nodes[a.0].value.data().to_vec();
                let bv = self.nodes[b.0].value.data().to_vec();
                let mut da = vec![0.0; rows * cols];
                let mut db = vec![0.0; rows * cols];
                for r in 0..rows {
                    let x = &av[r * cols..(r + 1) * cols];
                    let y = &bv[r * cols..(r + 1) * cols];
                    let gr = g[r];
                    cosine_grad(
                        x,
                        y,
                        gr,
                        &mut da[r * cols..(r + 1) * cols],
                        &mut db[r * cols..(r + 1) * cols],
                    );
                }
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }
            Op::GatherRows(x, indices) => {
                let (_, cols) = self.shape(*x);
                let mut dx = vec![0.0; self.nodes[x.0].value.numel()];
                for (k, &idx) in indices.iter().enumerate() {
                    for c in 0..cols {
                        dx[idx * cols + c] += g[k * cols + c];
                    }
                }
                self.accumulate(*x, &dx);
            }
            Op::CifWeights(alpha, layout) => {
                let av = self.nodes[alpha.0].value.data().to_vec();
                let da = cif::weight_matrix_grad_alpha(&av, layout, g);
                self.accumulate(*alpha, &da);
            }
        }
    }

    // ── Composite helpers ───────────────────────────────────────────

    /// Mean absolute error between two equally shaped nodes.
    pub fn l1_loss(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let d = self.sub(a, b)?;
        let ad = self.abs(d);
        Ok(self.mean(ad))
    }
}

const COSINE_EPS: f64 = 1e-8;

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (nx * ny).max(COSINE_EPS)
}

fn cosine_grad(x: &[f64], y: &[f64], g: f64, dx: &mut [f64], dy: &mut [f64]) {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let denom = nx * ny;
    if denom <= COSINE_EPS {
        // Denominator pinned at the guard constant: only the dot term varies.
        for i in 0..x.len() {
            dx[i] = g * y[i] / COSINE_EPS;
            dy[i] = g * x[i] / COSINE_EPS;
        }
        return;
    }
    let c = dot / denom;
    for i in 0..x.len() {
        dx[i] = g * (y[i] / denom - c * x[i] / (nx * nx));
        dy[i] = g * (x[i] / denom - c * y[i] / (ny * ny));
    }
}
