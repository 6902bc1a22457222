//! Interchangeable selection strategies and estimators, registered by name.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::RngCore;

use crate::dataset::StateRecord;
use crate::error::{Error, Result};
use crate::povm::PovmFamily;
use crate::predict::{imle_reconstruct, weighted_sq_error, DeepSetModel, ImleConfig};
use crate::qsim::{fidelity, Space, StateVector, C64};
use crate::registry::Registry;
use crate::tgms::{run_episode, sample_index, argmax, Mode, PolicyModel, Prepared, Step, Summary, Trajectory};

pub type Acquire<'a> = dyn FnMut(usize) -> Result<Vec<f64>> + 'a;

/// Picks `budget` distinct settings for one state, acquiring data as it goes.
pub trait Selector: Send + Sync {
    fn name(&self) -> &'static str;
    fn select(&self, budget: usize, rng: &mut dyn RngCore, acquire: &mut Acquire) -> Result<Trajectory>;
}

#[derive(Clone)]
pub struct SelectorContext {
    pub family: PovmFamily,
    pub policy: Option<Arc<PolicyModel>>,
    pub mode: Mode,
    /// Site shift used by `shifted`; `n/4` when absent.
    pub shift: Option<usize>,
}

impl SelectorContext {
    pub fn new(family: PovmFamily) -> Self {
        Self { family, policy: None, mode: Mode::Sample, shift: None }
    }

    fn policy(&self) -> Result<Arc<PolicyModel>> {
        let p = self.policy.clone().ok_or_else(|| Error::Config("this selector needs a trained policy".into()))?;
        if p.family.as_ref() != Some(self.family.kind()) {
            return Err(Error::Config(format!(
                "policy family {:?} does not match {:?}",
                p.family,
                self.family.kind()
            )));
        }
        Ok(p)
    }
}

/// Uniform sampling without replacement.
pub struct RandomSelector {
    n: usize,
}

impl Selector for RandomSelector {
    fn name(&self) -> &'static str {
        "random"
    }

    fn select(&self, budget: usize, rng: &mut dyn RngCore, acquire: &mut Acquire) -> Result<Trajectory> {
        if budget > self.n {
            return Err(Error::Config(format!("budget {budget} exceeds the family size {}", self.n)));
        }
        let mut traj = Trajectory::new(self.n);
        let p = 1.0 / self.n as f64;
        for (t, s) in sample(rng, self.n, budget).into_iter().enumerate() {
            let values = acquire(s)?;
            traj.push(Step { setting: s, values, prob: p / (1.0 - t as f64 * p), forced: false })?;
        }
        Ok(traj)
    }
}

pub struct TgmsSelector {
    policy: Arc<PolicyModel>,
    prep: Prepared,
    mode: Mode,
}

impl Selector for TgmsSelector {
    fn name(&self) -> &'static str {
        "tgms"
    }

    fn select(&self, budget: usize, rng: &mut dyn RngCore, acquire: &mut Acquire) -> Result<Trajectory> {
        run_episode(&self.policy, &self.prep, budget, self.mode, rng, &[], acquire)
    }
}

/// Runs the policy on its own data but measures every choice `shift` sites to the left.
///
/// Choices that collide after clamping at the chain edge are skipped; if the
/// policy runs out of settings the remainder is filled uniformly.
pub struct ShiftedSelector {
    inner: TgmsSelector,
    family: PovmFamily,
    shift: usize,
}

impl Selector for ShiftedSelector {
    fn name(&self) -> &'static str {
        "shifted"
    }

    fn select(&self, budget: usize, rng: &mut dyn RngCore, acquire: &mut Acquire) -> Result<Trajectory> {
        let n = self.family.len();
        if budget > n {
            return Err(Error::Config(format!("budget {budget} exceeds the family size {n}")));
        }
        let policy = &self.inner.policy;
        let prep = &self.inner.prep;
        let mut own_used = vec![false; n];
        let mut summary = Summary::new(policy);
        let mut traj = Trajectory::new(n);
        let mut rounds = 0;
        while traj.len() < budget && rounds < n {
            let p = summary.distribution(policy, prep, &own_used)?;
            let s = match self.inner.mode {
                Mode::Sample => sample_index(&p, rng),
                Mode::Argmax => argmax(&p),
            };
            own_used[s] = true;
            rounds += 1;
            let target = self.family.shifted_left(s, self.shift)?;
            let values = acquire(target)?;
            // The policy sees the data it asked for in its own frame.
            summary.add(policy, prep, s, &values)?;
            if !traj.used[target] {
                traj.push(Step { setting: target, values, prob: p[s], forced: false })?;
            }
        }
        if traj.len() < budget {
            let free: Vec<usize> = (0..n).filter(|&k| !traj.used[k]).collect();
            for i in sample(rng, free.len(), budget - traj.len()) {
                let values = acquire(free[i])?;
                traj.push(Step { setting: free[i], values, prob: 0.0, forced: true })?;
            }
        }
        Ok(traj)
    }
}

pub type SelectorRegistry = Registry<dyn Selector, SelectorContext>;

pub fn selector_registry() -> SelectorRegistry {
    let mut r = SelectorRegistry::new("selector");
    r.register("random", |c| Ok(Box::new(RandomSelector { n: c.family.len() })));
    r.register("tgms", |c| {
        let policy = c.policy()?;
        let prep = policy.prepare()?;
        Ok(Box::new(TgmsSelector { policy, prep, mode: c.mode }))
    });
    r.register("shifted", |c| {
        let policy = c.policy()?;
        let prep = policy.prepare()?;
        let n = match c.family.kind() {
            crate::povm::FamilyKind::TripletPauli { n, .. } => *n,
            _ => return Err(Error::Config("shifted selection needs a triplet family".into())),
        };
        let shift = c.shift.unwrap_or(n / 4);
        Ok(Box::new(ShiftedSelector {
            inner: TgmsSelector { policy, prep, mode: c.mode },
            family: c.family.clone(),
            shift,
        }))
    });
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    /// Scalar error: weighted standardized squared error, or infidelity for tomography.
    pub error: f64,
    /// Predicted targets in physical units (empty for tomography).
    pub prediction: Vec<f64>,
    pub latent: Vec<f64>,
    pub fidelity: Option<f64>,
}

/// Turns a set of measurement records into an estimate and scores it against the state's targets.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, state: &StateRecord, records: &[(usize, &[f64])]) -> Result<Estimate>;
}

#[derive(Clone)]
pub struct EstimatorContext {
    pub family: PovmFamily,
    pub predictor: Option<Arc<DeepSetModel>>,
    pub weights: Vec<f64>,
    pub imle: ImleConfig,
}

pub struct DeepSetEstimator {
    model: Arc<DeepSetModel>,
    weights: Vec<f64>,
}

impl Estimator for DeepSetEstimator {
    fn name(&self) -> &'static str {
        "deepset"
    }

    fn estimate(&self, state: &StateRecord, records: &[(usize, &[f64])]) -> Result<Estimate> {
        let p = self.model.predict(records)?;
        let truth = self.model.standardize(&state.targets);
        Ok(Estimate {
            error: weighted_sq_error(&p.y_std, &truth, &self.weights),
            prediction: p.y,
            latent: p.latent,
            fidelity: None,
        })
    }
}

/// Iterative maximum likelihood on Husimi values; targets hold the state's Fock amplitudes.
pub struct ImleEstimator {
    family: PovmFamily,
    config: ImleConfig,
}

impl Estimator for ImleEstimator {
    fn name(&self) -> &'static str {
        "imle"
    }

    fn estimate(&self, state: &StateRecord, records: &[(usize, &[f64])]) -> Result<Estimate> {
        let d = self.config.d_trunc;
        if state.targets.len() != 2 * d {
            return Err(Error::Config(format!("expected {} amplitude targets, got {}", 2 * d, state.targets.len())));
        }
        let points = records
            .iter()
            .map(|(s, v)| {
                let alpha = self
                    .family
                    .setting(*s)?
                    .alpha()
                    .ok_or_else(|| Error::Config("iMLE needs phase-space settings".into()))?;
                Ok((alpha, v[0]))
            })
            .collect::<Result<Vec<_>>>()?;
        let result = imle_reconstruct(&points, &self.config)?;
        let amps: Vec<C64> = (0..d).map(|k| C64::new(state.targets[k], state.targets[d + k])).collect();
        let psi = StateVector::normalized(amps, Space::Fock(d))?;
        let f = fidelity(&result.rho_hat, &psi)?;
        Ok(Estimate { error: 1.0 - f, prediction: Vec::new(), latent: Vec::new(), fidelity: Some(f) })
    }
}

pub type EstimatorRegistry = Registry<dyn Estimator, EstimatorContext>;

pub fn estimator_registry() -> EstimatorRegistry {
    let mut r = EstimatorRegistry::new("estimator");
    r.register("deepset", |c| {
        let model = c.predictor.clone().ok_or_else(|| Error::Config("deepset estimation needs a predictor".into()))?;
        if model.family != *c.family.kind() {
            return Err(Error::Config("predictor was trained on a different family".into()));
        }
        if c.weights.len() != model.n_targets() {
            return Err(Error::Config(format!("{} weights for {} targets", c.weights.len(), model.n_targets())));
        }
        Ok(Box::new(DeepSetEstimator { model, weights: c.weights.clone() }))
    });
    r.register("imle", |c| {
        if !matches!(c.family.kind(), crate::povm::FamilyKind::HusimiGrid { .. }) {
            return Err(Error::Config("iMLE needs a Husimi grid family".into()));
        }
        Ok(Box::new(ImleEstimator { family: c.family.clone(), config: c.imle.clone() }))
    });
    r
}
