use nalgebra::{DMatrix, DVector};

use crate::autodiff::Tensor;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::povm::FamilyKind;
use crate::predict::{weighted_sq_error, DeepSetModel};
use crate::qsim::{coherent_amplitudes, C64};

/// States with precomputed outcome statistics and a frozen loss for measurement histories.
pub trait EpisodeEnv {
    fn n_settings(&self) -> usize;
    fn stats(&self, state: usize, setting: usize) -> &[f64];
    /// Prediction loss after measuring `history` on `state`.
    fn loss(&self, state: usize, history: &[usize]) -> Result<f64>;
}

/// Loss from a frozen deep-set predictor: weighted squared error in standardized units.
///
/// Record embeddings are cached per state, so each loss is a mean over rows
/// plus one pass through the head.
pub struct PredictorEnv<'a> {
    model: &'a DeepSetModel,
    dataset: &'a Dataset,
    weights: Vec<f64>,
    embeddings: Vec<Option<Tensor>>,
    targets: Vec<Option<Vec<f64>>>,
}

impl<'a> PredictorEnv<'a> {
    pub fn new(model: &'a DeepSetModel, dataset: &'a Dataset, states: &[usize], weights: Vec<f64>) -> Result<Self> {
        if weights.len() != model.n_targets() {
            return Err(Error::Config(format!("{} weights for {} targets", weights.len(), model.n_targets())));
        }
        if model.target_names != dataset.header.target_names {
            return Err(Error::Config("predictor and dataset disagree on targets".into()));
        }
        let n = dataset.records.len();
        let mut embeddings = vec![None; n];
        let mut targets = vec![None; n];
        for &id in states {
            let rec = dataset.records.get(id).ok_or_else(|| Error::Config(format!("state {id} not in dataset")))?;
            let rows: Vec<(usize, &[f64])> = rec.stats.iter().enumerate().map(|(k, v)| (k, v.as_slice())).collect();
            embeddings[id] = Some(model.embed(&rows)?);
            targets[id] = Some(model.standardize(&rec.targets));
        }
        Ok(Self { model, dataset, weights, embeddings, targets })
    }

    pub fn model(&self) -> &DeepSetModel {
        self.model
    }

    /// Pooled latent vector of a history.
    pub fn latent(&self, state: usize, history: &[usize]) -> Result<Tensor> {
        let e = self.embeddings[state]
            .as_ref()
            .ok_or_else(|| Error::Config(format!("state {state} was not prepared")))?;
        if history.is_empty() {
            return Err(Error::Config("loss needs at least one record".into()));
        }
        let mut pooled = Tensor::zeros(1, e.cols());
        for &s in history {
            for (p, v) in pooled.data_mut().iter_mut().zip(e.row_slice(s)) {
                *p += v;
            }
        }
        Ok(pooled.scale(1.0 / history.len() as f64))
    }

    /// Standardized prediction for a history.
    pub fn predict_std(&self, state: usize, history: &[usize]) -> Result<Vec<f64>> {
        Ok(self.model.head_std(&self.latent(state, history)?).into_data())
    }
}

impl EpisodeEnv for PredictorEnv<'_> {
    fn n_settings(&self) -> usize {
        self.dataset.records.first().map_or(0, |r| r.stats.len())
    }

    fn stats(&self, state: usize, setting: usize) -> &[f64] {
        &self.dataset.records[state].stats[setting]
    }

    fn loss(&self, state: usize, history: &[usize]) -> Result<f64> {
        let y = self.predict_std(state, history)?;
        let t = self.targets[state].as_ref().ok_or_else(|| Error::Config(format!("state {state} was not prepared")))?;
        Ok(weighted_sq_error(&y, t, &self.weights))
    }
}

/// Pure-state Cramér–Rao bound on the infidelity of Husimi-Q tomography.
///
/// With tangent directions `δ_k ⟂ ψ` (real and imaginary), `J_ik = 2 Re(conj⟨α_i|ψ⟩ ⟨α_i|δ_k⟩)`
/// and binomial variances `Q_i(1 − Q_i)/shots`, the loss of a history is
/// `tr((Σ_i J_i J_iᵀ / var_i + λI)⁻¹)` with `λ = 2(d − 1)`, so an empty history scores 1.
/// Targets must hold the Fock amplitudes as `re_0.., im_0..`.
pub struct FisherEnv<'a> {
    dataset: &'a Dataset,
    rows: Vec<Option<DMatrix<f64>>>,
    prior: f64,
}

impl<'a> FisherEnv<'a> {
    /// Noise follows the dataset's shot count; exact data is treated as `1e4` shots.
    pub fn new(dataset: &'a Dataset, states: &[usize]) -> Result<Self> {
        let family = dataset.family()?;
        let d = match family.kind() {
            FamilyKind::HusimiGrid { d_trunc, .. } => *d_trunc,
            other => return Err(Error::Config(format!("Fisher loss needs a Husimi grid, got {}", other.name()))),
        };
        let shots = dataset.header.shots.map_or(1e4, |s| s as f64);
        let probes: Vec<DVector<C64>> = family
            .settings()
            .iter()
            .map(|s| coherent_amplitudes(s.alpha().expect("Husimi settings carry a phase-space point"), d))
            .collect();
        let mut rows = vec![None; dataset.records.len()];
        for &id in states {
            let rec = dataset.records.get(id).ok_or_else(|| Error::Config(format!("state {id} not in dataset")))?;
            if rec.targets.len() != 2 * d {
                return Err(Error::Config(format!("expected {} amplitude targets, got {}", 2 * d, rec.targets.len())));
            }
            let psi = DVector::from_iterator(d, (0..d).map(|k| C64::new(rec.targets[k], rec.targets[d + k])));
            let psi = psi.normalize();
            let tangent = tangent_directions(&psi);
            let mut m = DMatrix::zeros(probes.len(), tangent.len());
            for (i, a) in probes.iter().enumerate() {
                let c = a.dotc(&psi);
                let q = c.norm_sqr().min(1.0);
                let var = (q * (1.0 - q) / shots).max(1.0 / (shots * shots));
                let w = 1.0 / var.sqrt();
                for (k, delta) in tangent.iter().enumerate() {
                    m[(i, k)] = 2.0 * (c.conj() * a.dotc(delta)).re * w;
                }
            }
            rows[id] = Some(m);
        }
        Ok(Self { dataset, rows, prior: 2.0 * (d as f64 - 1.0) })
    }
}

/// Orthonormal basis of the complement of `psi`, each vector also multiplied by `i`.
fn tangent_directions(psi: &DVector<C64>) -> Vec<DVector<C64>> {
    let d = psi.len();
    let skip = (0..d).max_by(|&a, &b| psi[a].norm_sqr().total_cmp(&psi[b].norm_sqr())).unwrap_or(0);
    let mut basis: Vec<DVector<C64>> = vec![psi.clone()];
    for j in (0..d).filter(|&j| j != skip) {
        let mut v = DVector::from_element(d, C64::new(0.0, 0.0));
        v[j] = C64::new(1.0, 0.0);
        for b in &basis {
            let p = b.dotc(&v);
            v -= b * p;
        }
        basis.push(v.normalize());
    }
    let i = C64::new(0.0, 1.0);
    basis.into_iter().skip(1).flat_map(|u| [u.clone(), u * i]).collect()
}

impl EpisodeEnv for FisherEnv<'_> {
    fn n_settings(&self) -> usize {
        self.dataset.records.first().map_or(0, |r| r.stats.len())
    }

    fn stats(&self, state: usize, setting: usize) -> &[f64] {
        &self.dataset.records[state].stats[setting]
    }

    fn loss(&self, state: usize, history: &[usize]) -> Result<f64> {
        let m = self.rows[state].as_ref().ok_or_else(|| Error::Config(format!("state {state} was not prepared")))?;
        let n = m.ncols();
        let mut f = DMatrix::from_diagonal_element(n, n, self.prior);
        for &s in history {
            let r = m.row(s);
            f += r.transpose() * r;
        }
        let chol = f.cholesky().ok_or_else(|| Error::Numerical("Fisher matrix is not positive definite".into()))?;
        Ok(chol.inverse().trace())
    }
}
