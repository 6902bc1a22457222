use log::info;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::EpisodeEnv;
use super::episode::{argmax, entropy, sample_index, sample_without_replacement, Summary};
use super::policy::PolicyModel;
use crate::autodiff::{Adam, AdamConfig, Grads, Graph, Tensor};
use crate::error::{Error, Result};
use crate::seeds::stream;

/// Score offset that removes used settings from the softmax.
const MASK_OFFSET: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `Σ_k p_k (l_k − mean_k l)`.
    Advantage,
    /// `Σ_k u_k l_k`.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    /// Branches per windowed step.
    pub k: usize,
    /// Number of steps in the window `[T₁, T₂]`.
    pub window: usize,
    /// Window shift on a plateau; `ceil(window/2)` when absent.
    pub window_shift: Option<usize>,
    /// Shift after this many epochs regardless of the validation loss.
    pub shift_every: Option<usize>,
    /// Last step the window may reach.
    pub t_max: usize,
    pub plateau: usize,
    /// Relative improvement below which an epoch counts towards the plateau.
    pub plateau_tol: f64,
    pub loss_mode: LossMode,
    pub lr: f64,
    pub clip_norm: Option<f64>,
}

impl Default for SelectorTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch: 16,
            k: 4,
            window: 5,
            window_shift: None,
            shift_every: None,
            t_max: 10,
            plateau: 3,
            plateau_tol: 1e-3,
            loss_mode: LossMode::Advantage,
            lr: 1e-3,
            clip_norm: Some(1.0),
        }
    }
}

impl SelectorTrainConfig {
    pub fn shift(&self) -> usize {
        self.window_shift.unwrap_or(self.window.div_ceil(2))
    }

    fn validate(&self, n_settings: usize) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k = {} but at least 2 branches are needed", self.k)));
        }
        if self.window == 0 || self.batch == 0 {
            return Err(Error::Config("window and batch must be positive".into()));
        }
        if self.t_max < self.window || self.t_max > n_settings {
            return Err(Error::Config(format!(
                "t_max {} must lie in [{}, {n_settings}]",
                self.t_max, self.window
            )));
        }
        if self.t_max - 1 + self.k > n_settings {
            return Err(Error::Config(format!(
                "k = {} exceeds the {} settings left at step {}",
                self.k,
                n_settings + 1 - self.t_max,
                self.t_max
            )));
        }
        Ok(())
    }
}

/// Sliding window `[t1, t2]` over 1-based steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub t1: usize,
    pub t2: usize,
}

impl Window {
    pub fn first(width: usize) -> Self {
        Self { t1: 1, t2: width }
    }

    pub fn len(&self) -> usize {
        self.t2 + 1 - self.t1
    }

    pub fn is_empty(&self) -> bool {
        self.t2 < self.t1
    }

    /// Moves right by `shift`, stopping with `t2 = t_max`.
    pub fn shifted(&self, shift: usize, t_max: usize) -> Self {
        let t2 = (self.t2 + shift).min(t_max);
        Self { t1: t2 + 1 - self.len(), t2 }
    }
}

/// One windowed step: the branches drawn and their one-step losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchStep {
    /// 1-based step index; the history is `path[..t-1]`.
    pub t: usize,
    pub branches: Vec<usize>,
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSample {
    pub state: usize,
    /// Main trajectory up to `t2`; windowed steps continue from their first branch.
    pub path: Vec<usize>,
    pub steps: Vec<BranchStep>,
}

/// Episodes collected under a fixed policy snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeBatch {
    pub window: Window,
    pub episodes: Vec<EpisodeSample>,
}

impl EpisodeBatch {
    pub fn windowed_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.steps.len()).sum()
    }

    pub fn mean_branch_loss(&self) -> f64 {
        let (s, c) = self
            .episodes
            .iter()
            .flat_map(|e| &e.steps)
            .flat_map(|s| &s.losses)
            .fold((0.0, 0usize), |(s, c), l| (s + l, c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    }
}

/// Rolls out every state up to `window.t2`, sampling from the policy and
/// drawing `k` branches at each windowed step.
pub fn collect_batch<R: Rng + ?Sized>(
    policy: &PolicyModel,
    env: &dyn EpisodeEnv,
    states: &[usize],
    window: Window,
    k: usize,
    rng: &mut R,
) -> Result<EpisodeBatch> {
    let prep = policy.prepare()?;
    let n = policy.n_settings();
    let mut episodes = Vec::with_capacity(states.len());
    for &state in states {
        let mut used = vec![false; n];
        let mut path = Vec::with_capacity(window.t2);
        let mut steps = Vec::with_capacity(window.len());
        let mut summary = Summary::new(policy);
        for t in 1..=window.t2 {
            let p = summary.distribution(policy, &prep, &used)?;
            let chosen = if t >= window.t1 {
                let branches = sample_without_replacement(&p, k, rng)?;
                let mut losses = Vec::with_capacity(k);
                for &b in &branches {
                    path.push(b);
                    losses.push(env.loss(state, &path)?);
                    path.pop();
                }
                let first = branches[0];
                steps.push(BranchStep { t, branches, losses });
                first
            } else {
                sample_index(&p, rng)
            };
            used[chosen] = true;
            path.push(chosen);
            if t < window.t2 {
                summary.add(policy, &prep, chosen, env.stats(state, chosen))?;
            }
        }
        episodes.push(EpisodeSample { state, path, steps });
    }
    Ok(EpisodeBatch { window, episodes })
}

#[derive(Clone, Debug)]
pub struct SurrogateOutput {
    pub loss: f64,
    pub grads: Grads,
    /// Mean selection entropy over windowed steps.
    pub entropy: f64,
}

/// Surrogate loss of a batch (mean over episodes of the sum over windowed steps) and its gradient.
///
/// Branch losses enter as constants.
pub fn surrogate(policy: &PolicyModel, env: &dyn EpisodeEnv, batch: &EpisodeBatch, mode: LossMode) -> Result<SurrogateOutput> {
    let n = policy.n_settings();
    let mut g = Graph::new(&policy.store);
    let fx = g.constant(policy.features());
    let h = policy.encode(&mut g, fx)?;
    let keys = policy.keys_var(&mut g, h);

    // Rows at t = 1 read h0; later rows average record embeddings.
    let mut first_rows = Vec::new();
    let mut later_rows = Vec::new();
    let mut records: Vec<(usize, &[f64])> = Vec::new();
    let mut averaging: Vec<(usize, usize)> = Vec::new();
    for ep in &batch.episodes {
        let offset = records.len();
        let needed = ep.steps.iter().map(|s| s.t - 1).max().unwrap_or(0);
        for &s in &ep.path[..needed] {
            records.push((s, env.stats(ep.state, s)));
        }
        for step in &ep.steps {
            if step.t == 1 {
                first_rows.push((ep, step));
            } else {
                averaging.push((offset, step.t - 1));
                later_rows.push((ep, step));
            }
        }
    }
    let mut parts = Vec::new();
    if !first_rows.is_empty() {
        let h0 = g.param(policy.h0_id());
        parts.push(g.gather_rows(h0, &vec![0; first_rows.len()]));
    }
    if !later_rows.is_empty() {
        let e = policy.record_embeddings_var(&mut g, h, &records)?;
        let mut a = Tensor::zeros(averaging.len(), records.len());
        for (r, &(off, len)) in averaging.iter().enumerate() {
            for c in off..off + len {
                a.set(r, c, 1.0 / len as f64);
            }
        }
        let av = g.constant(a);
        parts.push(g.matmul(av, e));
    }
    let rows: Vec<_> = first_rows.into_iter().chain(later_rows).collect();
    if rows.is_empty() {
        return Err(Error::Config("batch has no windowed steps".into()));
    }
    let hx = g.concat_rows(&parts);
    let u = policy.scores_var(&mut g, hx, keys);

    let mut mask = Tensor::zeros(rows.len(), n);
    let mut weights = Tensor::zeros(rows.len(), n);
    let scale = 1.0 / batch.episodes.len() as f64;
    for (r, (ep, step)) in rows.iter().enumerate() {
        for &s in &ep.path[..step.t - 1] {
            mask.set(r, s, MASK_OFFSET);
        }
        // Mean relative to the first loss.
        let l0 = step.losses[0];
        let mean = l0 + step.losses.iter().map(|l| l - l0).sum::<f64>() / step.losses.len() as f64;
        for (&b, &l) in step.branches.iter().zip(&step.losses) {
            let w = match mode {
                LossMode::Advantage => l - mean,
                LossMode::Literal => l,
            };
            weights.set(r, b, weights.get(r, b) + w * scale);
        }
    }
    let mv = g.constant(mask);
    let masked = g.add(u, mv);
    let p = g.softmax_rows(masked);
    let entropy_mean =
        (0..rows.len()).map(|r| entropy(g.value(p).row_slice(r))).sum::<f64>() / rows.len() as f64;
    let out = match mode {
        LossMode::Advantage => g.weighted_sum(p, weights),
        LossMode::Literal => g.weighted_sum(u, weights),
    };
    let loss = g.value(out).item();
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("selector surrogate became {loss}")));
    }
    g.backward(out);
    Ok(SurrogateOutput { loss, grads: g.param_grads(), entropy: entropy_mean })
}

/// Mean loss at the end of argmax rollouts of length `t`.
pub fn validation_loss(policy: &PolicyModel, env: &dyn EpisodeEnv, states: &[usize], t: usize) -> Result<f64> {
    if states.is_empty() {
        return Ok(f64::NAN);
    }
    let prep = policy.prepare()?;
    let mut total = 0.0;
    for &state in states {
        let mut used = vec![false; policy.n_settings()];
        let mut path = Vec::with_capacity(t);
        let mut summary = Summary::new(policy);
        for step in 0..t {
            let s = argmax(&summary.distribution(policy, &prep, &used)?);
            used[s] = true;
            path.push(s);
            if step + 1 < t {
                summary.add(policy, &prep, s, env.stats(state, s))?;
            }
        }
        total += env.loss(state, &path)?;
    }
    Ok(total / states.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorEpochLog {
    pub epoch: usize,
    pub window: Window,
    pub mean_loss: f64,
    pub mean_branch_loss: f64,
    pub mean_entropy: f64,
    pub val_loss: f64,
    pub windowed_steps: usize,
}

/// Sliding-window training of `policy` against a frozen environment.
pub fn train_selector(
    policy: &mut PolicyModel,
    env: &dyn EpisodeEnv,
    train: &[usize],
    val: &[usize],
    config: &SelectorTrainConfig,
    seed: u64,
    mut on_log: impl FnMut(&SelectorEpochLog),
) -> Result<Vec<SelectorEpochLog>> {
    if train.is_empty() {
        return Err(Error::Config("selector training set is empty".into()));
    }
    if env.n_settings() != policy.n_settings() {
        return Err(Error::Config(format!(
            "environment has {} settings, policy {}",
            env.n_settings(),
            policy.n_settings()
        )));
    }
    config.validate(policy.n_settings())?;
    policy.store.seed_lineage.push(format!("train/selector root={seed}"));
    let mut rng = stream(seed, "train/selector");
    let mut opt = Adam::new(&policy.store, AdamConfig { lr: config.lr, clip_norm: config.clip_norm, ..Default::default() });
    let mut window = Window::first(config.window);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut since_shift = 0;
    let mut logs = Vec::with_capacity(config.epochs);
    let mut order = train.to_vec();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut branch_sum, mut ent_sum, mut steps, mut batches) = (0.0, 0.0, 0.0, 0, 0);
        for chunk in order.chunks(config.batch) {
            let batch = collect_batch(policy, env, chunk, window, config.k, &mut rng)?;
            let out = surrogate(policy, env, &batch, config.loss_mode)?;
            if !out.grads.all_finite() {
                return Err(Error::Numerical(format!("non-finite selector gradient in epoch {epoch}")));
            }
            opt.step(&mut policy.store, &out.grads);
            loss_sum += out.loss;
            branch_sum += batch.mean_branch_loss();
            ent_sum += out.entropy;
            steps += batch.windowed_steps();
            batches += 1;
        }
        let val_loss = validation_loss(policy, env, val, window.t2)?;
        let log = SelectorEpochLog {
            epoch,
            window,
            mean_loss: loss_sum / batches as f64,
            mean_branch_loss: branch_sum / batches as f64,
            mean_entropy: ent_sum / batches as f64,
            val_loss,
            windowed_steps: steps,
        };
        info!(
            "selector epoch {epoch} window [{}, {}]: surrogate {:.3e}, branch loss {:.4}, val {:.4}",
            window.t1, window.t2, log.mean_loss, log.mean_branch_loss, val_loss
        );
        on_log(&log);
        logs.push(log);

        since_shift += 1;
        if val_loss.is_finite() && val_loss < best * (1.0 - config.plateau_tol) {
            best = val_loss;
            stale = 0;
        } else {
            stale += 1;
        }
        let due = match config.shift_every {
            Some(e) => since_shift >= e,
            None => stale >= config.plateau,
        };
        if due && window.t2 < config.t_max {
            window = window.shifted(config.shift(), config.t_max);
            best = f64::INFINITY;
            stale = 0;
            since_shift = 0;
        }
    }
    Ok(logs)
}
