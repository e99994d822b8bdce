//! Tape-based reverse-mode differentiation over a small, closed op set.
//!
//! Values are dense row-major matrices; a vector is an `n x 1` matrix.
//! Build a graph by calling op methods on a [`Tape`], then call
//! [`Tape::backward`] on a scalar node to get gradients for every
//! registered parameter.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape does not match data");
        Tensor { rows, cols, data }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn scalar(x: f64) -> Self {
        Self::vector(vec![x])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    /// `W x` with `W: r x c`, `x: c x 1`.
    MatVec(NodeId, NodeId),
    /// `A B` with `A: m x k`, `B: k x n`.
    MatMul(NodeId, NodeId),
    /// `a^T M` as a column vector, `a: m x 1`, `M: m x n`.
    VecMat(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Adds the `n x 1` vector to every row of an `m x n` matrix.
    AddRows(NodeId, NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    Concat(Vec<NodeId>),
    /// Row `r` of a matrix as a column vector.
    Row(NodeId, usize),
    /// Column vectors of equal length stacked as matrix rows.
    Stack(Vec<NodeId>),
    /// Label-smoothing loss head; stores `softmax(logits) - target`.
    LsHead(NodeId, Vec<f64>),
    Sum(Vec<NodeId>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradient buffers for parameters, indexed by parameter id.
pub type ParamGrads = Vec<Tensor>;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    num_params: usize,
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..w.rows)
        .map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant input; receives no gradient.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// A trainable parameter with id `pid`.
    pub fn param(&mut self, pid: usize, value: Tensor) -> NodeId {
        self.num_params = self.num_params.max(pid + 1);
        self.push(value, Op::Param(pid))
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let (wv, xv) = (self.value(w), self.value(x));
        assert_eq!((wv.cols, xv.cols), (xv.rows, 1), "matvec shape");
        let out = Tensor::vector(matvec(wv, &xv.data));
        self.push(out, Op::MatVec(w, x))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols, bv.rows, "matmul shape");
        let mut out = Tensor::zeros(av.rows, bv.cols);
        for i in 0..av.rows {
            for k in 0..av.cols {
                let x = av.at(i, k);
                let brow = bv.row(k);
                let orow = &mut out.data[i * bv.cols..(i + 1) * bv.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += x * b;
                }
            }
        }
        self.push(out, Op::MatMul(a, b))
    }

    pub fn vecmat(&mut self, a: NodeId, m: NodeId) -> NodeId {
        let (av, mv) = (self.value(a), self.value(m));
        assert_eq!((av.rows, av.cols), (mv.rows, 1), "vecmat shape");
        let mut out = vec![0.0; mv.cols];
        for (r, &w) in av.data.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(mv.row(r)) {
                *o += w * x;
            }
        }
        self.push(Tensor::vector(out), Op::VecMat(a, m))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add shape");
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(av.rows, av.cols, data);
        self.push(out, Op::Add(a, b))
    }

    pub fn add_rows(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (mv, vv) = (self.value(m), self.value(v));
        assert_eq!((mv.cols, vv.cols), (vv.rows, 1), "add_rows shape");
        let mut out = mv.clone();
        for r in 0..out.rows {
            for (o, x) in out.data[r * out.cols..(r + 1) * out.cols].iter_mut().zip(&vv.data) {
                *o += x;
            }
        }
        self.push(out, Op::AddRows(m, v))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let out = Tensor::from_vec(av.rows, av.cols, av.data.iter().map(|x| x.tanh()).collect());
        self.push(out, Op::Tanh(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        assert_eq!(av.cols, 1, "softmax expects a vector");
        let max = av.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = av.data.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let out = Tensor::vector(exps.into_iter().map(|e| e / z).collect());
        self.push(out, Op::Softmax(a))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols, 1, "concat expects vectors");
            data.extend_from_slice(&v.data);
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    pub fn row(&mut self, m: NodeId, r: usize) -> NodeId {
        let out = Tensor::vector(self.value(m).row(r).to_vec());
        self.push(out, Op::Row(m, r))
    }

    pub fn stack(&mut self, rows: &[NodeId]) -> NodeId {
        assert!(!rows.is_empty(), "stack of nothing");
        let n = self.value(rows[0]).rows;
        let mut data = Vec::with_capacity(n * rows.len());
        for &r in rows {
            let v = self.value(r);
            assert_eq!((v.rows, v.cols), (n, 1), "stack expects equal vectors");
            data.extend_from_slice(&v.data);
        }
        self.push(Tensor::from_vec(rows.len(), n, data), Op::Stack(rows.to_vec()))
    }

    /// Scalar loss node computing [`crate::loss::ls_loss`] on `logits`.
    pub fn ls_head(
        &mut self,
        logits: NodeId,
        k0: usize,
        prior: &crate::prior::SmoothingDistribution,
        beta: f64,
    ) -> Result<NodeId> {
        let z = &self.value(logits).data;
        let (loss, grad) = crate::loss::ls_loss_and_grad(z, k0, prior, beta)?;
        Ok(self.push(Tensor::scalar(loss), Op::LsHead(logits, grad)))
    }

    pub fn sum(&mut self, scalars: &[NodeId]) -> NodeId {
        let total = scalars.iter().map(|&s| self.value(s).data[0]).sum();
        self.push(Tensor::scalar(total), Op::Sum(scalars.to_vec()))
    }

    /// Backpropagates from the scalar `root` and returns one gradient per
    /// parameter id; parameters absent from the graph get empty tensors.
    pub fn backward(&self, root: NodeId) -> Result<ParamGrads> {
        if self.value(root).len() != 1 {
            return Err(Error::InvalidArgument("backward from a non-scalar".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        let mut out: ParamGrads = vec![Tensor::zeros(0, 0); self.num_params];

        fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
            grads[id.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(pid) => {
                    let v = &node.value;
                    let slot = &mut out[*pid];
                    if slot.is_empty() {
                        *slot = Tensor::from_vec(v.rows, v.cols, g);
                    } else {
                        for (s, x) in slot.data.iter_mut().zip(&g) {
                            *s += x;
                        }
                    }
                }
                Op::MatVec(w, x) => {
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    let gw = acc(&mut grads, *w, wv.len());
                    for r in 0..wv.rows {
                        for (c, xc) in xv.data.iter().enumerate() {
                            gw[r * wv.cols + c] += g[r] * xc;
                        }
                    }
                    let gx = acc(&mut grads, *x, xv.len());
                    for r in 0..wv.rows {
                        for (c, gxc) in gx.iter_mut().enumerate() {
                            *gxc += wv.data[r * wv.cols + c] * g[r];
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let n = bv.cols;
                    // dA = G B^T, dB = A^T G
                    let ga = acc(&mut grads, *a, av.len());
                    for i in 0..av.rows {
                        for k in 0..av.cols {
                            ga[i * av.cols + k] +=
                                (0..n).map(|j| g[i * n + j] * bv.data[k * n + j]).sum::<f64>();
                        }
                    }
                    let gb = acc(&mut grads, *b, bv.len());
                    for i in 0..av.rows {
                        for k in 0..av.cols {
                            let x = av.data[i * av.cols + k];
                            for j in 0..n {
                                gb[k * n + j] += x * g[i * n + j];
                            }
                        }
                    }
                }
                Op::VecMat(a, m) => {
                    let (av, mv) = (self.value(*a), self.value(*m));
                    let ga = acc(&mut grads, *a, av.len());
                    for (r, gar) in ga.iter_mut().enumerate() {
                        *gar += mv.row(r).iter().zip(&g).map(|(x, y)| x * y).sum::<f64>();
                    }
                    let gm = acc(&mut grads, *m, mv.len());
                    for (r, &w) in av.data.iter().enumerate() {
                        for c in 0..mv.cols {
                            gm[r * mv.cols + c] += w * g[c];
                        }
                    }
                }
                Op::Add(a, b) => {
                    for p in [a, b] {
                        let gp = acc(&mut grads, *p, g.len());
                        for (s, x) in gp.iter_mut().zip(&g) {
                            *s += x;
                        }
                    }
                }
                Op::AddRows(m, v) => {
                    let cols = self.value(*m).cols;
                    let gm = acc(&mut grads, *m, g.len());
                    for (s, x) in gm.iter_mut().zip(&g) {
                        *s += x;
                    }
                    let gv = acc(&mut grads, *v, cols);
                    for (idx, x) in g.iter().enumerate() {
                        gv[idx % cols] += x;
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value.data;
                    let ga = acc(&mut grads, *a, y.len());
                    for ((s, gy), yy) in ga.iter_mut().zip(&g).zip(y) {
                        *s += gy * (1.0 - yy * yy);
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value.data;
                    let dot: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
                    let ga = acc(&mut grads, *a, y.len());
                    for ((s, gy), yy) in ga.iter_mut().zip(&g).zip(y) {
                        *s += yy * (gy - dot);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        let gp = acc(&mut grads, *p, n);
                        for (s, x) in gp.iter_mut().zip(&g[off..off + n]) {
                            *s += x;
                        }
                        off += n;
                    }
                }
                Op::Row(m, r) => {
                    let mv = self.value(*m);
                    let cols = mv.cols;
                    let gm = acc(&mut grads, *m, mv.len());
                    for (s, x) in gm[r * cols..(r + 1) * cols].iter_mut().zip(&g) {
                        *s += x;
                    }
                }
                Op::Stack(rows) => {
                    let n = node.value.cols;
                    for (i, r) in rows.iter().enumerate() {
                        let gr = acc(&mut grads, *r, n);
                        for (s, x) in gr.iter_mut().zip(&g[i * n..(i + 1) * n]) {
                            *s += x;
                        }
                    }
                }
                Op::LsHead(logits, dz) => {
                    let gl = acc(&mut grads, *logits, dz.len());
                    for (s, d) in gl.iter_mut().zip(dz) {
                        *s += g[0] * d;
                    }
                }
                Op::Sum(parts) => {
                    for p in parts {
                        acc(&mut grads, *p, 1)[0] += g[0];
                    }
                }
            }
        }
        Ok(out)
    }
}
