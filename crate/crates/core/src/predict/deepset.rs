use std::path::Path;

use log::info;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, Graph, Mlp, ParamStore, Tensor};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::povm::{FamilyKind, PovmFamily};
use crate::seeds::{stream, Provenance};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepSetConfig {
    pub latent: usize,
    pub hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Learning rate at the last step, reached by exponential decay.
    pub lr_final: f64,
    pub clip_norm: Option<f64>,
    /// Subset lengths drawn uniformly from `t_min..=t_max`; `0` means the family size.
    pub t_min: usize,
    pub t_max: usize,
    /// Per-target loss weights; all ones when absent.
    pub loss_weights: Option<Vec<f64>>,
}

impl Default for DeepSetConfig {
    fn default() -> Self {
        Self {
            latent: 64,
            hidden: 96,
            steps: 3000,
            batch: 32,
            lr: 2e-3,
            lr_final: 1e-4,
            clip_norm: Some(5.0),
            t_min: 1,
            t_max: 0,
            loss_weights: None,
        }
    }
}

/// Mean-pooled set regressor: `head(mean_i φ(feature(θ_i) ⊕ d_i))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeepSetModel {
    pub config: DeepSetConfig,
    pub family: FamilyKind,
    pub target_names: Vec<String>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    pub store: ParamStore,
    pub record: Mlp,
    pub head: Mlp,
    stats_width: usize,
    features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Predicted targets in physical units.
    pub y: Vec<f64>,
    /// Predicted targets in standardized units.
    pub y_std: Vec<f64>,
    /// Pooled record embedding.
    pub latent: Vec<f64>,
}

pub const PREDICTOR_FORMAT: &str = "tgms-predictor/1";

#[derive(Serialize, Deserialize)]
struct PredictorFile {
    format: String,
    model: DeepSetModel,
}

impl DeepSetModel {
    pub fn new<R: Rng>(
        family: &PovmFamily,
        target_names: Vec<String>,
        target_mean: Vec<f64>,
        target_std: Vec<f64>,
        config: DeepSetConfig,
        rng: &mut R,
    ) -> Self {
        let width = family.stats_width();
        let in_dim = family.feature_dim() + width;
        let mut store = ParamStore::new();
        let record = Mlp::new(&mut store, "record", &[in_dim, config.hidden, config.hidden, config.latent], rng);
        let head = Mlp::new(&mut store, "head", &[config.latent, config.hidden, target_names.len()], rng);
        Self {
            config,
            family: family.kind().clone(),
            target_names,
            target_mean,
            target_std,
            store,
            record,
            head,
            stats_width: width,
            features: family.feature_matrix(),
            provenance: None,
        }
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent
    }

    pub fn stats_width(&self) -> usize {
        self.stats_width
    }

    fn input_row(&self, setting: usize, values: &[f64], out: &mut Vec<f64>) -> Result<()> {
        let f = self.features.get(setting).ok_or_else(|| {
            Error::Config(format!("setting {setting} outside the predictor's family of {}", self.features.len()))
        })?;
        if values.len() > self.stats_width {
            return Err(Error::Config(format!(
                "record width {} exceeds the predictor's {}",
                values.len(),
                self.stats_width
            )));
        }
        out.extend_from_slice(f);
        out.extend_from_slice(values);
        out.extend(std::iter::repeat_n(0.0, self.stats_width - values.len()));
        Ok(())
    }

    /// Stacked input rows for a list of `(setting, outcome values)` records.
    pub fn inputs(&self, records: &[(usize, &[f64])]) -> Result<Tensor> {
        let cols = self.features.first().map_or(0, Vec::len) + self.stats_width;
        let mut data = Vec::with_capacity(records.len() * cols);
        for (s, v) in records {
            self.input_row(*s, v, &mut data)?;
        }
        Ok(Tensor::new(records.len(), cols, data))
    }

    /// Per-record embeddings, one row each.
    pub fn embed(&self, records: &[(usize, &[f64])]) -> Result<Tensor> {
        Ok(self.record.eval(&self.store, &self.inputs(records)?))
    }

    /// Standardized predictions from pooled embeddings (`B × latent`).
    pub fn head_std(&self, pooled: &Tensor) -> Tensor {
        self.head.eval(&self.store, pooled)
    }

    pub fn unstandardize(&self, y_std: &[f64]) -> Vec<f64> {
        y_std.iter().zip(&self.target_mean).zip(&self.target_std).map(|((y, m), s)| y * s + m).collect()
    }

    pub fn standardize(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.target_mean).zip(&self.target_std).map(|((y, m), s)| (y - m) / s).collect()
    }

    pub fn predict(&self, records: &[(usize, &[f64])]) -> Result<Prediction> {
        if records.is_empty() {
            return Err(Error::Config("prediction needs at least one record".into()));
        }
        let e = self.embed(records)?;
        let latent = e.col_sums().scale(1.0 / records.len() as f64);
        let y_std = self.head_std(&latent).into_data();
        Ok(Prediction { y: self.unstandardize(&y_std), y_std, latent: latent.into_data() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = PredictorFile { format: PREDICTOR_FORMAT.into(), model: self.clone() };
        std::fs::write(path, serde_json::to_string(&f)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: PredictorFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if f.format != PREDICTOR_FORMAT {
            return Err(Error::Config(format!("unsupported predictor format {}", f.format)));
        }
        Ok(f.model)
    }
}

/// Weighted mean squared error in standardized units, `Σ w_j (ŷ_j − y_j)² / Σ w_j`.
pub fn weighted_sq_error(pred_std: &[f64], truth_std: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    let e: f64 = pred_std.iter().zip(truth_std).zip(weights).map(|((p, t), w)| w * (p - t).powi(2)).sum();
    e / wsum.max(f64::MIN_POSITIVE)
}

#[derive(Clone, Debug, Serialize)]
pub struct PredictorLog {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Fits a [`DeepSetModel`] on random measurement subsets of the given states.
pub fn train_predictor(
    ds: &Dataset,
    ids: &[usize],
    config: &DeepSetConfig,
    seed: u64,
    mut on_log: impl FnMut(&PredictorLog),
) -> Result<DeepSetModel> {
    if ids.is_empty() {
        return Err(Error::Config("predictor training set is empty".into()));
    }
    let family = ds.family()?;
    let n_settings = family.len();
    let t_max = if config.t_max == 0 { n_settings } else { config.t_max.min(n_settings) };
    let t_min = config.t_min.max(1);
    if t_min > t_max {
        return Err(Error::Config(format!("subset lengths {t_min}..={t_max} are empty")));
    }
    let m = ds.header.target_names.len();
    let weights = config.loss_weights.clone().unwrap_or_else(|| vec![1.0; m]);
    if weights.len() != m {
        return Err(Error::Config(format!("{} loss weights for {m} targets", weights.len())));
    }
    let (mean, std) = ds.target_moments(ids);
    let mut model = DeepSetModel::new(
        &family,
        ds.header.target_names.clone(),
        mean,
        std,
        config.clone(),
        &mut stream(seed, "init/predictor"),
    );
    model.store.seed_lineage = vec![format!("root={seed}"), "init/predictor".into(), "train/predictor".into()];
    let mut rng = stream(seed, "train/predictor");
    let mut opt = Adam::new(&model.store, AdamConfig { lr: config.lr, clip_norm: config.clip_norm, ..Default::default() });
    let targets_std: Vec<Vec<f64>> = ds.records.iter().map(|r| model.standardize(&r.targets)).collect();
    let decay = if config.steps > 1 { (config.lr_final / config.lr).ln() / (config.steps - 1) as f64 } else { 0.0 };
    let mut running = 0.0;
    for step in 0..config.steps {
        let mut rows: Vec<(usize, &[f64])> = Vec::new();
        let mut seg = Vec::with_capacity(config.batch);
        let mut tgt = Vec::with_capacity(config.batch * m);
        for _ in 0..config.batch {
            let id = ids[rng.random_range(0..ids.len())];
            let t = rng.random_range(t_min..=t_max);
            let rec = &ds.records[id];
            for k in sample(&mut rng, n_settings, t) {
                rows.push((k, rec.stats[k].as_slice()));
            }
            seg.push(t);
            tgt.extend_from_slice(&targets_std[id]);
        }
        let x = model.inputs(&rows)?;
        let mut pool = Tensor::zeros(config.batch, rows.len());
        let mut off = 0;
        for (b, &t) in seg.iter().enumerate() {
            for k in off..off + t {
                pool.set(b, k, 1.0 / t as f64);
            }
            off += t;
        }
        let mut wmat = Tensor::zeros(config.batch, m);
        let wsum: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        for b in 0..config.batch {
            for j in 0..m {
                wmat.set(b, j, weights[j] / wsum / config.batch as f64);
            }
        }

        let mut g = Graph::new(&model.store);
        let xv = g.constant(x);
        let h = model.record.forward(&mut g, xv)?;
        let pv = g.constant(pool);
        let pooled = g.matmul(pv, h);
        let y = model.head.forward(&mut g, pooled)?;
        let tv = g.constant(Tensor::new(config.batch, m, tgt));
        let d = g.sub(y, tv);
        let sq = g.mul(d, d);
        let loss = g.weighted_sum(sq, wmat);
        let lv = g.value(loss).item();
        if !lv.is_finite() {
            return Err(Error::Numerical(format!("predictor loss became {lv} at step {step}")));
        }
        g.backward(loss);
        let grads = g.param_grads();
        drop(g);
        opt.config.lr = config.lr * (decay * step as f64).exp();
        opt.step(&mut model.store, &grads);

        running = if step == 0 { lv } else { 0.98 * running + 0.02 * lv };
        if step % 100 == 0 || step + 1 == config.steps {
            let log = PredictorLog { step, loss: running, lr: opt.config.lr };
            info!("predictor step {step}: loss {running:.4e}");
            on_log(&log);
        }
    }
    Ok(model)
}
