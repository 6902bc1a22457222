use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::AdError;

pub const BN_EPS: f64 = 1e-5;

/// Row-wise affine map `x W + b` with `W: in × out`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, bias: bool, rng: &mut R) -> Self {
        let w = store.fan_in_uniform(&format!("{name}.w"), in_dim, out_dim, in_dim, rng);
        let b = bias.then(|| store.fan_in_uniform(&format!("{name}.b"), 1, out_dim, in_dim, rng));
        Self { w, b, in_dim, out_dim }
    }

    /// Forward pass on plain tensors, without recording a graph.
    pub fn eval(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut y = x.matmul(store.get(self.w));
        if let Some(b) = self.b {
            let b = store.get(b).data();
            let c = y.cols();
            for (k, v) in y.data_mut().iter_mut().enumerate() {
                *v += b[k % c];
            }
        }
        y
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, AdError> {
        let (_, c) = g.shape(x);
        if c != self.in_dim {
            return Err(AdError::Shape(format!("linear expects {} inputs, got {c}", self.in_dim)));
        }
        let w = g.param(self.w);
        let y = g.matmul(x, w);
        Ok(match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        })
    }
}

/// `Linear → ReLU → Linear`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.l1"), dim, hidden, true, rng),
            l2: Linear::new(store, &format!("{name}.l2"), hidden, dim, true, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, AdError> {
        let h = self.l1.forward(g, x)?;
        let h = g.relu(h);
        self.l2.forward(g, h)
    }
}

/// Stack of linear layers with ReLU between them and none after the last.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]`.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output sizes");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn eval(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut h = self.layers[0].eval(store, x);
        for l in &self.layers[1..] {
            h = l.eval(store, &h.map(|v| v.max(0.0)));
        }
        h
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, AdError> {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(g, h)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

/// Scaled dot-product self-attention over the rows of its input.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Result<Self, AdError> {
        if heads == 0 || dim % heads != 0 {
            return Err(AdError::Shape(format!("model width {dim} is not divisible by {heads} heads")));
        }
        Ok(Self {
            wq: Linear::new(store, &format!("{name}.q"), dim, dim, true, rng),
            wk: Linear::new(store, &format!("{name}.k"), dim, dim, true, rng),
            wv: Linear::new(store, &format!("{name}.v"), dim, dim, true, rng),
            wo: Linear::new(store, &format!("{name}.o"), dim, dim, true, rng),
            heads,
            dim,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, AdError> {
        let q = self.wq.forward(g, x)?;
        let k = self.wk.forward(g, x)?;
        let v = self.wv.forward(g, x)?;
        let dk = self.dim / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dk, (h + 1) * dk);
            let qh = g.slice_cols(q, lo, hi);
            let kh = g.slice_cols(k, lo, hi);
            let vh = g.slice_cols(v, lo, hi);
            let s = g.matmul_t(qh, kh);
            let s = g.scale(s, scale);
            let a = g.softmax_rows(s);
            outs.push(g.matmul(a, vh));
        }
        let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        self.wo.forward(g, cat)
    }
}

/// Per-feature normalization across rows with learned scale and shift.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.constant(&format!("{name}.gamma"), 1, dim, 1.0),
            beta: store.constant(&format!("{name}.beta"), 1, dim, 0.0),
            dim,
        }
    }

    /// With a single row the statistics are undefined and the input passes through.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        if g.shape(x).0 < 2 {
            warn!("batch norm over a single row; passing input through unchanged");
            return x;
        }
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.batch_norm(x, gamma, beta, BN_EPS)
    }
}

pub fn skip_add(g: &mut Graph, x: Var, fx: Var) -> Var {
    g.add(x, fx)
}

/// `x ← BN(x ⊕ MHA(x)); x ← BN(x ⊕ FF(x))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub mha: MultiHeadAttention,
    pub bn1: BatchNorm,
    pub ff: FeedForward,
    pub bn2: BatchNorm,
}

impl EncoderBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, ff_hidden: usize, rng: &mut R) -> Result<Self, AdError> {
        Ok(Self {
            mha: MultiHeadAttention::new(store, &format!("{name}.mha"), dim, heads, rng)?,
            bn1: BatchNorm::new(store, &format!("{name}.bn1"), dim),
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, ff_hidden, rng),
            bn2: BatchNorm::new(store, &format!("{name}.bn2"), dim),
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, AdError> {
        let a = self.mha.forward(g, x)?;
        let x = skip_add(g, x, a);
        let x = self.bn1.forward(g, x);
        let f = self.ff.forward(g, x)?;
        let x = skip_add(g, x, f);
        Ok(self.bn2.forward(g, x))
    }
}
