use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use tgms_core::dataset::{generate, Dataset, GenOptions};
use tgms_core::eval::{curve, evaluate, site_histogram, tv_from_uniform, CurvePoint, EvalRun};
use tgms_core::povm::PovmFamily;
use tgms_core::predict::metrics::{basis_histogram, correlation_matrix, silhouette};
use tgms_core::predict::{imle_reconstruct, train_predictor, DeepSetModel, PredictorLog};
use tgms_core::qsim::{fidelity, Space, StateVector, C64};
use tgms_core::seeds::{derive_seed, stream, Provenance};
use tgms_core::strategy::{estimator_registry, selector_registry, EstimatorContext, SelectorContext};
use tgms_core::tasks::{task_registry, Task};
use tgms_core::tgms::{train_selector, EpisodeEnv, FisherEnv, PolicyModel, PredictorEnv, SelectorEpochLog};
use tgms_core::{Error, Result};

use crate::config::{ExperimentConfig, StateSplit};

/// A validated config together with its hash.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    task: Box<dyn Task>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SiteReport {
    pub budget: usize,
    pub counts: Vec<usize>,
    pub tv_from_uniform: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationReport {
    pub budget: usize,
    pub seed: u64,
    pub states: Vec<usize>,
    pub labels: Vec<Option<String>>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub run: EvalRun,
    pub curve: Vec<CurvePoint>,
    pub sites: Option<SiteReport>,
    pub correlation: Option<CorrelationReport>,
    /// Silhouette of the latent vectors grouped by phase label.
    pub silhouette: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityDump {
    pub state: usize,
    pub seed: u64,
    pub budget: usize,
    pub fidelity: f64,
    pub iterations: usize,
    pub shape: [usize; 2],
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let task = task_registry().build(&config.task, &config.task_config)?;
        let family = PovmFamily::new(task.family())?;
        if let Some(&b) = config.eval.budgets.iter().find(|&&b| b > family.len()) {
            return Err(Error::Config(format!("budget {b} exceeds the family size {}", family.len())));
        }
        let hash = config.hash();
        Ok(Self { config, hash, task })
    }

    pub fn task(&self) -> &dyn Task {
        &*self.task
    }

    /// Config hash plus the root seed and the derived seeds of the named streams.
    pub fn provenance(&self, streams: &[&str]) -> Provenance {
        let root = self.config.seed;
        let mut seeds = BTreeMap::new();
        seeds.insert("root".to_string(), root);
        for s in streams {
            seeds.insert(s.to_string(), derive_seed(root, s));
        }
        for &s in &self.config.eval.seeds {
            seeds.insert(format!("eval/{s}"), s);
        }
        Provenance { config_hash: self.hash.clone(), seeds }
    }

    pub fn gen_data(&self) -> Result<Dataset> {
        let d = &self.config.data;
        let opts = GenOptions {
            n_states: d.n_states,
            seed: self.config.seed,
            shots: d.shots,
            train_fraction: d.train_fraction,
        };
        let mut ds = generate(self.task(), &self.config.task_config, &opts)?;
        ds.header.provenance = Some(self.provenance(&["data/params", "data/shots", "data/split"]));
        Ok(ds)
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.header.family != self.task.family() {
            return Err(Error::Config(format!(
                "dataset family {:?} does not match task {} ({:?})",
                ds.header.family,
                self.config.task,
                self.task.family()
            )));
        }
        Ok(())
    }

    pub fn train_predictor(&self, ds: &Dataset, on_log: impl FnMut(&PredictorLog)) -> Result<DeepSetModel> {
        self.check_dataset(ds)?;
        let mut model = train_predictor(ds, ds.train(), &self.config.predictor, self.config.seed, on_log)?;
        model.provenance = Some(self.provenance(&["init/predictor", "train/predictor"]));
        Ok(model)
    }

    /// Training states for the selector and the held-out validation tail.
    pub fn selector_split(&self, ds: &Dataset) -> (Vec<usize>, Vec<usize>) {
        let train = ds.train();
        let n_val = (train.len() as f64 * self.config.val_fraction).round() as usize;
        let n_val = n_val.min(train.len().saturating_sub(1));
        let (a, b) = train.split_at(train.len() - n_val);
        (a.to_vec(), b.to_vec())
    }

    fn weights(&self, ds: &Dataset, predictor: Option<&DeepSetModel>) -> Vec<f64> {
        predictor
            .and_then(|p| p.config.loss_weights.clone())
            .unwrap_or_else(|| ds.header.loss_weights.clone())
    }

    pub fn train_selector(
        &self,
        ds: &Dataset,
        predictor: Option<&DeepSetModel>,
        on_log: impl FnMut(&SelectorEpochLog),
    ) -> Result<(PolicyModel, Vec<SelectorEpochLog>)> {
        self.check_dataset(ds)?;
        let family = ds.family()?;
        let (train, val) = self.selector_split(ds);
        let env: Box<dyn EpisodeEnv + '_> = match (self.config.selector_env.as_str(), predictor) {
            ("predictor", Some(p)) => Box::new(PredictorEnv::new(p, ds, ds.train(), self.weights(ds, Some(p)))?),
            ("predictor", None) => return Err(Error::Config("the predictor environment needs a predictor".into())),
            ("fisher", _) => Box::new(FisherEnv::new(ds, ds.train())?),
            (other, _) => return Err(Error::Config(format!("unknown selector environment '{other}'"))),
        };
        let mut policy =
            PolicyModel::new(&family, self.config.policy.clone(), &mut stream(self.config.seed, "init/policy"))?;
        let logs = train_selector(&mut policy, &*env, &train, &val, &self.config.selector, self.config.seed, on_log)?;
        policy.provenance = Some(self.provenance(&["init/policy", "train/selector"]));
        Ok((policy, logs))
    }

    pub fn eval_states(&self, ds: &Dataset) -> Vec<usize> {
        match self.config.eval.states {
            StateSplit::Train => ds.train().to_vec(),
            StateSplit::Test => ds.test().to_vec(),
            StateSplit::All => (0..ds.records.len()).collect(),
        }
    }

    fn selector_context(&self, ds: &Dataset, policy: Option<Arc<PolicyModel>>) -> Result<SelectorContext> {
        let mut ctx = SelectorContext::new(ds.family()?);
        ctx.policy = policy;
        ctx.mode = self.config.eval.mode;
        ctx.shift = self.config.eval.shift;
        Ok(ctx)
    }

    /// Runs `selector` with `estimator` over the configured states, budgets and seeds.
    pub fn evaluate(
        &self,
        ds: &Dataset,
        selector: &str,
        estimator: &str,
        policy: Option<Arc<PolicyModel>>,
        predictor: Option<Arc<DeepSetModel>>,
    ) -> Result<EvalReport> {
        self.check_dataset(ds)?;
        let family = ds.family()?;
        let sel = selector_registry().build(selector, &self.selector_context(ds, policy)?)?;
        let ectx = EstimatorContext {
            family: family.clone(),
            weights: self.weights(ds, predictor.as_deref()),
            predictor,
            imle: self.config.imle.clone(),
        };
        let est = estimator_registry().build(estimator, &ectx)?;
        let e = &self.config.eval;
        let states = self.eval_states(ds);
        let run = evaluate(ds, &states, &*sel, &*est, &e.budgets, &e.seeds, true)?;
        let points = curve(&run);
        let max_budget = e.budgets.iter().copied().max().unwrap_or(0);
        let cb = e.cluster_budget.min(max_budget);

        let sites = match family.n_sites() {
            Some(_) => {
                let counts = site_histogram(&family, &run.sequences, cb)?;
                Some(SiteReport { budget: cb, tv_from_uniform: tv_from_uniform(&counts), counts })
            }
            None => None,
        };

        let seed0 = e.seeds[0];
        let correlation = if family.settings().first().and_then(|s| s.basis_code()).is_some() {
            let chosen: Vec<_> =
                run.sequences.iter().filter(|s| s.seed == seed0).take(e.correlation_states).collect();
            let hists: Vec<Vec<f64>> =
                chosen.iter().map(|s| basis_histogram(&family, &s.settings[..cb.min(s.settings.len())])).collect();
            Some(CorrelationReport {
                budget: cb,
                seed: seed0,
                states: chosen.iter().map(|s| s.state).collect(),
                labels: chosen.iter().map(|s| ds.records[s.state].label.clone()).collect(),
                matrix: correlation_matrix(&hists),
            })
        } else {
            None
        };

        let (points_l, labels): (Vec<Vec<f64>>, Vec<String>) = run
            .rows
            .iter()
            .filter(|r| r.seed == seed0 && r.budget == cb && !r.latent.is_empty())
            .filter_map(|r| ds.records[r.state].label.clone().map(|l| (r.latent.clone(), l)))
            .unzip();
        let silhouette = silhouette(&points_l, &labels);

        Ok(EvalReport { run, curve: points, sites, correlation, silhouette })
    }

    /// Reconstructs density matrices for the first `count` evaluation states at the largest budget.
    pub fn density_dumps(
        &self,
        ds: &Dataset,
        selector: &str,
        policy: Option<Arc<PolicyModel>>,
        count: usize,
    ) -> Result<Vec<DensityDump>> {
        self.check_dataset(ds)?;
        let family = ds.family()?;
        let sel = selector_registry().build(selector, &self.selector_context(ds, policy)?)?;
        let budget = self.config.eval.budgets.iter().copied().max().unwrap_or(0);
        let seed = self.config.eval.seeds[0];
        let d = self.config.imle.d_trunc;
        let mut out = Vec::new();
        for state in self.eval_states(ds).into_iter().take(count) {
            let rec = &ds.records[state];
            let mut rng = stream(seed, &format!("rollout/{state}"));
            let mut acquire = |k: usize| Ok(rec.stats[k].clone());
            let traj = sel.select(budget, &mut rng, &mut acquire)?;
            let points = traj
                .records()
                .iter()
                .map(|(s, v)| {
                    let alpha = family
                        .setting(*s)?
                        .alpha()
                        .ok_or_else(|| Error::Config("density dumps need phase-space settings".into()))?;
                    Ok((alpha, v[0]))
                })
                .collect::<Result<Vec<_>>>()?;
            let res = imle_reconstruct(&points, &self.config.imle)?;
            if rec.targets.len() != 2 * d {
                return Err(Error::Config(format!("expected {} amplitude targets", 2 * d)));
            }
            let psi = StateVector::normalized(
                (0..d).map(|k| C64::new(rec.targets[k], rec.targets[d + k])).collect(),
                Space::Fock(d),
            )?;
            let f = fidelity(&res.rho_hat, &psi)?;
            let m = res.rho_hat.entries();
            out.push(DensityDump {
                state,
                seed,
                budget,
                fidelity: f,
                iterations: res.iterations,
                shape: [m.nrows(), m.ncols()],
                re: m.transpose().iter().map(|z| z.re).collect(),
                im: m.transpose().iter().map(|z| z.im).collect(),
            });
        }
        Ok(out)
    }
}
