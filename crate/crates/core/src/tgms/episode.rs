use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{selection_from_scores, PolicyModel, Prepared};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::povm::{outcome_probabilities, sample_outcomes, PovmFamily, Shots};
use crate::qsim::StateVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sample,
    Argmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub setting: usize,
    pub values: Vec<f64>,
    /// Probability the policy assigned to `setting` (1 for forced choices).
    pub prob: f64,
    pub forced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub used: Vec<bool>,
}

impl Trajectory {
    pub fn new(n_settings: usize) -> Self {
        Self { steps: Vec::new(), used: vec![false; n_settings] }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn settings(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.setting).collect()
    }

    pub fn records(&self) -> Vec<(usize, &[f64])> {
        self.steps.iter().map(|s| (s.setting, s.values.as_slice())).collect()
    }

    pub fn push(&mut self, step: Step) -> Result<()> {
        match self.used.get(step.setting) {
            None => return Err(Error::Config(format!("setting {} outside a family of {}", step.setting, self.used.len()))),
            Some(true) => return Err(Error::Guard(format!("setting {} selected twice", step.setting))),
            Some(false) => {}
        }
        self.used[step.setting] = true;
        self.steps.push(step);
        Ok(())
    }
}

/// Running history summary: the sum of record embeddings and their count.
#[derive(Clone, Debug)]
pub struct Summary {
    sum: Tensor,
    count: usize,
}

impl Summary {
    pub fn new(policy: &PolicyModel) -> Self {
        Self { sum: Tensor::zeros(1, policy.config.d_h), count: 0 }
    }

    pub fn add(&mut self, policy: &PolicyModel, prep: &Prepared, setting: usize, values: &[f64]) -> Result<()> {
        self.sum.add_assign(&policy.record_embedding(&prep.h, setting, values)?);
        self.count += 1;
        Ok(())
    }

    pub fn current(&self, policy: &PolicyModel) -> Tensor {
        if self.count == 0 {
            policy.h0().clone()
        } else {
            self.sum.scale(1.0 / self.count as f64)
        }
    }

    pub fn distribution(&self, policy: &PolicyModel, prep: &Prepared, used: &[bool]) -> Result<Vec<f64>> {
        policy.selection_distribution(&self.current(policy), &prep.keys, used)
    }
}

/// Index drawn from a probability vector by inversion.
pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi <= 0.0 {
            continue;
        }
        last = i;
        if u < pi {
            return i;
        }
        u -= pi;
    }
    last
}

/// `k` distinct indices, each drawn from `p` renormalized over the indices not yet taken.
pub fn sample_without_replacement<R: Rng + ?Sized>(p: &[f64], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let support = p.iter().filter(|&&x| x > 0.0).count();
    if k > support {
        return Err(Error::Config(format!("cannot draw {k} distinct settings from {support} available")));
    }
    let mut q = p.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let i = sample_index(&q, rng);
        out.push(i);
        q[i] = 0.0;
    }
    Ok(out)
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Alternates selection and acquisition for `t` rounds.
///
/// `forced` lists `(round, setting)` pairs (rounds counted from 0) that
/// override the policy. `acquire` returns the outcome statistics of a setting.
pub fn run_episode<R: Rng + ?Sized>(
    policy: &PolicyModel,
    prep: &Prepared,
    t: usize,
    mode: Mode,
    rng: &mut R,
    forced: &[(usize, usize)],
    acquire: &mut dyn FnMut(usize) -> Result<Vec<f64>>,
) -> Result<Trajectory> {
    let n = policy.n_settings();
    if t > n {
        return Err(Error::Config(format!("budget {t} exceeds the family size {n}")));
    }
    let mut traj = Trajectory::new(n);
    let mut summary = Summary::new(policy);
    for round in 0..t {
        let p = summary.distribution(policy, prep, &traj.used)?;
        let (setting, prob, is_forced) = match forced.iter().find(|f| f.0 == round) {
            Some(&(_, s)) => (s, 1.0, true),
            None => {
                let s = match mode {
                    Mode::Sample => sample_index(&p, rng),
                    Mode::Argmax => argmax(&p),
                };
                (s, p[s], false)
            }
        };
        let values = acquire(setting)?;
        traj.push(Step { setting, values, prob, forced: is_forced })?;
        if round + 1 < t {
            let values = &traj.steps[round].values;
            summary.add(policy, prep, setting, values)?;
        }
    }
    Ok(traj)
}

/// Acquisition from a simulated state: exact probabilities or finite-shot frequencies.
pub fn state_acquirer<'a>(
    psi: &'a StateVector,
    family: &'a PovmFamily,
    shots: Shots,
    seed: u64,
) -> impl FnMut(usize) -> Result<Vec<f64>> + 'a {
    move |k| {
        let stats = match shots {
            Shots::Exact => outcome_probabilities(psi, family, k)?,
            Shots::Finite(_) => sample_outcomes(psi, family, k, shots, seed.wrapping_add(k as u64))?,
        };
        Ok(stats.values)
    }
}

/// Selection probabilities are only needed for diagnostics; this recomputes them for a fixed sequence.
pub fn sequence_probabilities(
    policy: &PolicyModel,
    prep: &Prepared,
    records: &[(usize, &[f64])],
) -> Result<Vec<f64>> {
    let mut used = vec![false; policy.n_settings()];
    let mut summary = Summary::new(policy);
    let mut out = Vec::with_capacity(records.len());
    for (s, v) in records {
        let p = selection_from_scores(&policy.scores(&summary.current(policy), &prep.keys), &used)?;
        out.push(p[*s]);
        used[*s] = true;
        summary.add(policy, prep, *s, v)?;
    }
    Ok(out)
}
