use super::params::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;
use super::AdError;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    Relu(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    MaskedSoftmax(Var),
    MeanRows(Var),
    Sum(Var),
    WeightedSum(Var, Tensor),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor, inv_std: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Arena tape for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid topological order for the backward sweep.
pub struct Graph<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    bound: Vec<Option<Var>>,
    grads: Vec<Option<Tensor>>,
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self { store: Some(store), nodes: Vec::new(), bound: vec![None; store.len()], grads: Vec::new() }
    }

    /// A graph with no parameter store, for pure tensor computations.
    pub fn detached() -> Graph<'static> {
        Graph { store: None, nodes: Vec::new(), bound: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input that receives a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let store = self.store.expect("graph has no parameter store");
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.bound[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMulT(a, b), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(v, Op::Transpose(a), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    /// Adds the `1 × c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(b), (1, c), "add_row expects a 1x{c} row");
        let mut v = self.value(a).clone();
        let row = self.value(b).data().to_vec();
        for i in 0..r {
            for (x, y) in v.data_mut()[i * c..(i + 1) * c].iter_mut().zip(&row) {
                *x += y;
            }
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::AddRow(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, s), ng)
    }

    /// `a` times the `1 × 1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let k = self.value(s).item();
        let v = self.value(a).scale(k);
        let ng = self.ng(a) || self.ng(s);
        self.push(v, Op::MulScalar(a, s), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (r, c) = x.shape();
        let mut out = Tensor::zeros(r, c);
        for i in 0..r {
            let row = x.row_slice(i);
            let mask = vec![true; c];
            let p = softmax_masked(row, &mask);
            out.data_mut()[i * c..(i + 1) * c].copy_from_slice(&p);
        }
        let ng = self.ng(a);
        self.push(out, Op::SoftmaxRows(a), ng)
    }

    /// Softmax over every entry of `a` restricted to entries with `mask = true`.
    /// Masked entries come out exactly zero.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var, AdError> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(AdError::Shape(format!("mask of length {} for {} scores", mask.len(), x.len())));
        }
        if !mask.iter().any(|&m| m) {
            return Err(AdError::AllMasked);
        }
        let (r, c) = x.shape();
        let out = Tensor::new(r, c, softmax_masked(x.data(), mask));
        let ng = self.ng(a);
        Ok(self.push(out, Op::MaskedSoftmax(a), ng))
    }

    /// Mean over rows, giving `1 × c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let n = x.rows() as f64;
        let v = x.col_sums().scale(1.0 / n);
        let ng = self.ng(a);
        self.push(v, Op::MeanRows(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(v, Op::Sum(a), ng)
    }

    /// `Σ a ⊙ w` for a constant weight tensor.
    pub fn weighted_sum(&mut self, a: Var, w: Tensor) -> Var {
        assert_eq!(self.shape(a), w.shape(), "weighted_sum shape mismatch");
        let v = Tensor::scalar(self.value(a).data().iter().zip(w.data()).map(|(x, y)| x * y).sum());
        let ng = self.ng(a);
        self.push(v, Op::WeightedSum(a, w), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let r = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(r, total);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows(), r, "concat_cols row mismatch");
            for i in 0..r {
                out.data_mut()[i * total + off..i * total + off + t.cols()].copy_from_slice(t.row_slice(i));
            }
            off += t.cols();
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let c = self.shape(parts[0]).1;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), c, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
        }
        let r = data.len() / c.max(1);
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Tensor::new(r, c, data), Op::ConcatRows(parts.to_vec()), ng)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        let (r, c) = x.shape();
        assert!(start <= end && end <= c, "slice {start}..{end} out of {c} columns");
        let w = end - start;
        let mut out = Tensor::zeros(r, w);
        for i in 0..r {
            out.data_mut()[i * w..(i + 1) * w].copy_from_slice(&x.row_slice(i)[start..end]);
        }
        let ng = self.ng(a);
        self.push(out, Op::SliceCols(a, start), ng)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(x.row_slice(i));
        }
        let ng = self.ng(a);
        self.push(Tensor::new(idx.len(), c, data), Op::GatherRows(a, idx.to_vec()), ng)
    }

    /// Per-column normalization over rows followed by `γ x̂ + β`.
    /// Requires at least two rows.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (r, c) = xv.shape();
        assert!(r >= 2, "batch_norm needs at least two rows");
        let mean = xv.col_sums().scale(1.0 / r as f64);
        let mut var = vec![0.0; c];
        for i in 0..r {
            for (j, v) in var.iter_mut().enumerate() {
                let d = xv.get(i, j) - mean.data()[j];
                *v += d * d;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v / r as f64 + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                xhat.set(i, j, (xv.get(i, j) - mean.data()[j]) * inv_std[j]);
            }
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut y = Tensor::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                y.set(i, j, g[j] * xhat.get(i, j) + b[j]);
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(y, Op::BatchNorm { x, gamma, beta, xhat, inv_std }, ng)
    }

    fn acc(&mut self, v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(t) => t.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse sweep from a `1 × 1` output. Gradients from earlier calls are
    /// discarded.
    pub fn backward(&mut self, out: Var) {
        assert_eq!(self.shape(out), (1, 1), "backward expects a scalar output");
        self.grads = vec![None; self.nodes.len()];
        self.grads[out.0] = Some(Tensor::scalar(1.0));
        for i in (0..=out.0).rev() {
            let Some(gy) = self.grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            let pending = self.local_grads(i, &gy);
            self.grads[i] = Some(gy);
            for (v, g) in pending {
                self.acc(v, g);
            }
        }
    }

    fn local_grads(&self, i: usize, gy: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let mut out = Vec::new();
                if self.ng(*a) {
                    out.push((*a, gy.matmul_t(val(*b))));
                }
                if self.ng(*b) {
                    out.push((*b, val(*a).t_matmul(gy)));
                }
                out
            }
            Op::MatMulT(a, b) => {
                let mut out = Vec::new();
                if self.ng(*a) {
                    out.push((*a, gy.matmul(val(*b))));
                }
                if self.ng(*b) {
                    out.push((*b, gy.t_matmul(val(*a))));
                }
                out
            }
            Op::Transpose(a) => vec![(*a, gy.transpose())],
            Op::Add(a, b) => vec![(*a, gy.clone()), (*b, gy.clone())],
            Op::AddRow(a, b) => vec![(*a, gy.clone()), (*b, gy.col_sums())],
            Op::Sub(a, b) => vec![(*a, gy.clone()), (*b, gy.scale(-1.0))],
            Op::Mul(a, b) => vec![
                (*a, gy.zip_map(val(*b), |g, y| g * y)),
                (*b, gy.zip_map(val(*a), |g, x| g * x)),
            ],
            Op::Scale(a, s) => vec![(*a, gy.scale(*s))],
            Op::MulScalar(a, s) => {
                let k = val(*s).item();
                let ds: f64 = gy.data().iter().zip(val(*a).data()).map(|(g, x)| g * x).sum();
                vec![(*a, gy.scale(k)), (*s, Tensor::scalar(ds))]
            }
            Op::Relu(a) => vec![(*a, gy.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 }))],
            Op::Tanh(a) => vec![(*a, gy.zip_map(&node.value, |g, y| g * (1.0 - y * y)))],
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let (r, c) = y.shape();
                let mut dx = Tensor::zeros(r, c);
                for i in 0..r {
                    let yr = y.row_slice(i);
                    let gr = gy.row_slice(i);
                    let dot: f64 = yr.iter().zip(gr).map(|(p, g)| p * g).sum();
                    for j in 0..c {
                        dx.set(i, j, yr[j] * (gr[j] - dot));
                    }
                }
                vec![(*a, dx)]
            }
            Op::MaskedSoftmax(a) => {
                let y = node.value.data();
                let dot: f64 = y.iter().zip(gy.data()).map(|(p, g)| p * g).sum();
                let (r, c) = node.value.shape();
                let d = y.iter().zip(gy.data()).map(|(p, g)| p * (g - dot)).collect();
                vec![(*a, Tensor::new(r, c, d))]
            }
            Op::MeanRows(a) => {
                let (r, c) = val(*a).shape();
                let mut dx = Tensor::zeros(r, c);
                let s = 1.0 / r as f64;
                for i in 0..r {
                    for j in 0..c {
                        dx.set(i, j, gy.data()[j] * s);
                    }
                }
                vec![(*a, dx)]
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                vec![(*a, Tensor::filled(r, c, gy.item()))]
            }
            Op::WeightedSum(a, w) => vec![(*a, w.scale(gy.item()))],
            Op::ConcatCols(parts) => {
                let r = gy.rows();
                let mut off = 0;
                let mut out = Vec::new();
                for &p in parts {
                    let w = val(p).cols();
                    if self.ng(p) {
                        let mut d = Tensor::zeros(r, w);
                        for i in 0..r {
                            d.data_mut()[i * w..(i + 1) * w].copy_from_slice(&gy.row_slice(i)[off..off + w]);
                        }
                        out.push((p, d));
                    }
                    off += w;
                }
                out
            }
            Op::ConcatRows(parts) => {
                let c = gy.cols();
                let mut off = 0;
                let mut out = Vec::new();
                for &p in parts {
                    let n = val(p).len();
                    if self.ng(p) {
                        out.push((p, Tensor::new(n / c.max(1), c, gy.data()[off..off + n].to_vec())));
                    }
                    off += n;
                }
                out
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).shape();
                let w = gy.cols();
                let mut dx = Tensor::zeros(r, c);
                for i in 0..r {
                    dx.data_mut()[i * c + start..i * c + start + w].copy_from_slice(gy.row_slice(i));
                }
                vec![(*a, dx)]
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = val(*a).shape();
                let mut dx = Tensor::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    for (d, g) in dx.data_mut()[i * c..(i + 1) * c].iter_mut().zip(gy.row_slice(k)) {
                        *d += g;
                    }
                }
                vec![(*a, dx)]
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std } => {
                let (r, c) = xhat.shape();
                let g = val(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        let d = gy.get(i, j);
                        dgamma[j] += d * xhat.get(i, j);
                        dbeta[j] += d;
                    }
                }
                let mut dx = Tensor::zeros(r, c);
                let m = r as f64;
                for j in 0..c {
                    let sum_dxh = g[j] * dbeta[j];
                    let sum_dxh_xh = g[j] * dgamma[j];
                    for i in 0..r {
                        let dxh = gy.get(i, j) * g[j];
                        dx.set(i, j, inv_std[j] / m * (m * dxh - sum_dxh - xhat.get(i, j) * sum_dxh_xh));
                    }
                }
                vec![(*x, dx), (*gamma, Tensor::row(dgamma)), (*beta, Tensor::row(dbeta))]
            }
        }
    }

    /// Gradient of the last backward output with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients for every bound parameter; unbound parameters get zeros.
    pub fn param_grads(&self) -> Grads {
        let store = self.store.expect("graph has no parameter store");
        let tensors = (0..store.len())
            .map(|k| {
                self.bound[k]
                    .and_then(|v| self.grad(v).cloned())
                    .unwrap_or_else(|| {
                        let (r, c) = store.get(ParamId::from_index(k)).shape();
                        Tensor::zeros(r, c)
                    })
            })
            .collect();
        Grads::new(tensors)
    }
}

/// Max-subtracted softmax restricted to `mask`; masked entries are exactly 0.
pub fn softmax_masked(x: &[f64], mask: &[bool]) -> Vec<f64> {
    let m = x.iter().zip(mask).filter(|(_, &k)| k).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().zip(mask).map(|(&v, &k)| if k { (v - m).exp() } else { 0.0 }).collect();
    let z: f64 = out.iter().sum();
    for o in &mut out {
        *o /= z;
    }
    out
}
