use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::AdError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn from_index(i: usize) -> Self {
        Self(i)
    }
}

/// How a parameter was initialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`.
    FanInUniform { fan_in: usize },
    Constant { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub init: Init,
    pub value: Tensor,
}

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
    /// Seeds and stream labels that produced the initial values.
    pub seed_lineage: Vec<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    fn push(&mut self, name: &str, init: Init, value: Tensor) -> ParamId {
        assert!(self.find(name).is_none(), "duplicate parameter name {name}");
        self.params.push(Param { name: name.to_string(), init, value });
        ParamId(self.params.len() - 1)
    }

    pub fn fan_in_uniform<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        self.push(name, Init::FanInUniform { fan_in }, Tensor::new(rows, cols, data))
    }

    pub fn constant(&mut self, name: &str, rows: usize, cols: usize, value: f64) -> ParamId {
        self.push(name, Init::Constant { value }, Tensor::filled(rows, cols, value))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.all_finite())
    }

    /// Overwrites values from `other`, which must have identical names and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<(), AdError> {
        if other.params.len() != self.params.len() {
            return Err(AdError::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                other.params.len(),
                self.params.len()
            )));
        }
        for (mine, theirs) in self.params.iter().zip(&other.params) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(AdError::Checkpoint(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    theirs.name,
                    theirs.value.shape(),
                    mine.name,
                    mine.value.shape()
                )));
            }
        }
        for (mine, theirs) in self.params.iter_mut().zip(&other.params) {
            mine.value = theirs.value.clone();
        }
        self.seed_lineage = other.seed_lineage.clone();
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), AdError> {
        let ck = Checkpoint { format: CHECKPOINT_FORMAT.to_string(), store: self.clone() };
        let text = serde_json::to_string(&ck).map_err(|e| AdError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AdError> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| AdError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(AdError::Checkpoint(format!("unknown checkpoint format {}", ck.format)));
        }
        Ok(ck.store)
    }
}

pub const CHECKPOINT_FORMAT: &str = "tgms-params/1";

/// On-disk layout: `{"format", "store": {"params": [{name, init, value: {rows, cols, data}}], "seed_lineage"}}`.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    store: ParamStore,
}

/// One gradient tensor per parameter, indexed like the store.
#[derive(Clone, Debug)]
pub struct Grads(Vec<Tensor>);

impl Grads {
    pub fn new(t: Vec<Tensor>) -> Self {
        Self(t)
    }

    pub fn zeros_like(store: &ParamStore) -> Self {
        Self(store.params.iter().map(|p| Tensor::zeros(p.value.rows(), p.value.cols())).collect())
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.0
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.0 {
            for x in t.data_mut() {
                *x *= s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(Tensor::all_finite)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients whose global norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: None }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let z = Grads::zeros_like(store).0;
        Self { config, m: z.clone(), v: z, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        assert_eq!(grads.0.len(), store.len(), "gradient count does not match parameters");
        let c = &self.config;
        let mut scale = 1.0;
        if let Some(max) = c.clip_norm {
            let n = grads.norm();
            if n > max {
                scale = max / n;
            }
        }
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (k, p) in store.params.iter_mut().enumerate() {
            let g = grads.0[k].data();
            assert_eq!(g.len(), p.value.len(), "gradient shape mismatch for {}", p.name);
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (i, x) in p.value.data_mut().iter_mut().enumerate() {
                let gi = g[i] * scale;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                *x -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}
