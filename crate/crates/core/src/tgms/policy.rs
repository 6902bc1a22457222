use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_masked, EncoderBlock, Graph, Linear, Mlp, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::povm::{FamilyKind, PovmFamily};
use crate::seeds::Provenance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub d_h: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub history_hidden: usize,
    /// Bound `C` on the scores `C·tanh(·)`.
    pub clip: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { d_h: 64, layers: 3, heads: 4, ff_hidden: 128, history_hidden: 64, clip: 10.0 }
    }
}

/// Encoder over the measurement family plus the history decoder and scorer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyModel {
    pub config: PolicyConfig,
    pub family: Option<FamilyKind>,
    pub store: ParamStore,
    input: Linear,
    blocks: Vec<EncoderBlock>,
    history: Mlp,
    h0: ParamId,
    wq: ParamId,
    wk: ParamId,
    stats_width: usize,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Family encoding and scorer keys, computed once and reused across episodes.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub h: Tensor,
    pub keys: Tensor,
}

pub const POLICY_FORMAT: &str = "tgms-policy/1";

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format: String,
    model: PolicyModel,
}

impl PolicyModel {
    /// Fresh policy. The query projection starts at zero, so every score is
    /// equal and the first selection distribution is uniform.
    pub fn new<R: Rng>(family: &PovmFamily, config: PolicyConfig, rng: &mut R) -> Result<Self> {
        Self::with_features(Some(family.kind().clone()), family.feature_matrix(), family.stats_width(), config, rng)
    }

    /// Policy over an explicit feature matrix, for families outside [`FamilyKind`].
    pub fn with_features<R: Rng>(
        family: Option<FamilyKind>,
        features: Vec<Vec<f64>>,
        stats_width: usize,
        config: PolicyConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let feature_dim = features.first().map_or(0, Vec::len);
        if features.is_empty() || feature_dim == 0 || features.iter().any(|f| f.len() != feature_dim) {
            return Err(Error::Config("policy needs a nonempty rectangular feature matrix".into()));
        }
        if config.d_h == 0 || config.heads == 0 || config.d_h % config.heads != 0 {
            return Err(Error::Config(format!("d_h={} is not divisible by heads={}", config.d_h, config.heads)));
        }
        let mut store = ParamStore::new();
        let d = config.d_h;
        let input = Linear::new(&mut store, "enc.in", feature_dim, d, true, rng);
        let blocks = (0..config.layers)
            .map(|l| EncoderBlock::new(&mut store, &format!("enc.{l}"), d, config.heads, config.ff_hidden, rng))
            .collect::<Result<Vec<_>, _>>()?;
        let history = Mlp::new(&mut store, "dec.history", &[d + stats_width, config.history_hidden, d], rng);
        let h0 = store.fan_in_uniform("dec.h0", 1, d, d, rng);
        let wq = store.constant("dec.wq", d, d, 0.0);
        let wk = store.fan_in_uniform("dec.wk", d, d, d, rng);
        Ok(Self {
            config,
            family,
            store,
            input,
            blocks,
            history,
            h0,
            wq,
            wk,
            stats_width,
            features,
            provenance: None,
        })
    }

    pub fn n_settings(&self) -> usize {
        self.features.len()
    }

    pub fn stats_width(&self) -> usize {
        self.stats_width
    }

    pub fn features(&self) -> Tensor {
        Tensor::from_rows(&self.features)
    }

    pub fn h0(&self) -> &Tensor {
        self.store.get(self.h0)
    }

    pub fn h0_id(&self) -> ParamId {
        self.h0
    }

    pub fn wq_id(&self) -> ParamId {
        self.wq
    }

    /// `{h_θ}` for a feature matrix (one row per setting).
    pub fn encode(&self, g: &mut Graph, features: Var) -> Result<Var> {
        let mut h = self.input.forward(g, features)?;
        for b in &self.blocks {
            h = b.forward(g, h)?;
        }
        Ok(h)
    }

    /// Encoding of an arbitrary feature matrix on plain tensors.
    pub fn encode_features(&self, features: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new(&self.store);
        let x = g.constant(features.clone());
        let h = self.encode(&mut g, x)?;
        Ok(g.value(h).clone())
    }

    pub fn prepare(&self) -> Result<Prepared> {
        let h = self.encode_features(&self.features())?;
        let keys = h.matmul(self.store.get(self.wk));
        Ok(Prepared { h, keys })
    }

    fn padded(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() > self.stats_width {
            return Err(Error::Config(format!("record width {} exceeds {}", values.len(), self.stats_width)));
        }
        let mut v = values.to_vec();
        v.resize(self.stats_width, 0.0);
        Ok(v)
    }

    /// `ĥ = MLP(h_θ ⊕ d)` for one record, on plain tensors.
    pub fn record_embedding(&self, h: &Tensor, setting: usize, values: &[f64]) -> Result<Tensor> {
        let mut row = h.row_slice(setting).to_vec();
        row.extend(self.padded(values)?);
        Ok(self.history.eval(&self.store, &Tensor::row(row)))
    }

    /// History embeddings for several records at once, recorded on `g`.
    pub fn record_embeddings_var(&self, g: &mut Graph, h: Var, records: &[(usize, &[f64])]) -> Result<Var> {
        let settings: Vec<usize> = records.iter().map(|r| r.0).collect();
        let rows = g.gather_rows(h, &settings);
        let mut data = Vec::with_capacity(records.len() * self.stats_width);
        for (_, v) in records {
            data.extend(self.padded(v)?);
        }
        let d = g.constant(Tensor::new(records.len(), self.stats_width, data));
        let x = g.concat_cols(&[rows, d]);
        Ok(self.history.forward(g, x)?)
    }

    /// `h_x`: the learned `h₀` for an empty history, otherwise the mean of the record embeddings.
    pub fn state_summary(&self, h: &Tensor, history: &[(usize, &[f64])]) -> Result<Tensor> {
        if history.is_empty() {
            return Ok(self.h0().clone());
        }
        let mut sum = Tensor::zeros(1, self.config.d_h);
        for (s, v) in history {
            sum.add_assign(&self.record_embedding(h, *s, v)?);
        }
        Ok(sum.scale(1.0 / history.len() as f64))
    }

    /// `u_θ = C·tanh(⟨W_q h_x, W_k h_θ⟩/√d_h)` for every setting.
    pub fn scores(&self, hx: &Tensor, keys: &Tensor) -> Vec<f64> {
        let q = hx.matmul(self.store.get(self.wq));
        let s = 1.0 / (self.config.d_h as f64).sqrt();
        q.matmul_t(keys).data().iter().map(|v| self.config.clip * (v * s).tanh()).collect()
    }

    pub fn scores_var(&self, g: &mut Graph, hx: Var, keys: Var) -> Var {
        let wq = g.param(self.wq);
        let q = g.matmul(hx, wq);
        let raw = g.matmul_t(q, keys);
        let raw = g.scale(raw, 1.0 / (self.config.d_h as f64).sqrt());
        let t = g.tanh(raw);
        g.scale(t, self.config.clip)
    }

    pub fn keys_var(&self, g: &mut Graph, h: Var) -> Var {
        let wk = g.param(self.wk);
        g.matmul(h, wk)
    }

    /// Selection probabilities over unused settings.
    pub fn selection_distribution(&self, hx: &Tensor, keys: &Tensor, used: &[bool]) -> Result<Vec<f64>> {
        selection_from_scores(&self.scores(hx, keys), used)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = PolicyFile { format: POLICY_FORMAT.into(), model: self.clone() };
        std::fs::write(path, serde_json::to_string(&f)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: PolicyFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if f.format != POLICY_FORMAT {
            return Err(Error::Config(format!("unsupported policy format {}", f.format)));
        }
        Ok(f.model)
    }
}

/// Masked softmax of scores; errors when every setting is used.
pub fn selection_from_scores(scores: &[f64], used: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != used.len() {
        return Err(Error::Config(format!("{} scores for {} settings", scores.len(), used.len())));
    }
    let mask: Vec<bool> = used.iter().map(|u| !u).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::Guard("every setting has already been used".into()));
    }
    Ok(softmax_masked(scores, &mask))
}
