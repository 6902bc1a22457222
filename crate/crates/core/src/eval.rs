//! Accuracy-versus-budget curves, selection histograms and paired comparisons.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::povm::PovmFamily;
use crate::predict::metrics::{accuracy, mean_std, rmse};
use crate::seeds::stream;
use crate::strategy::{Estimator, Selector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub state: usize,
    pub seed: u64,
    pub budget: usize,
    pub error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    pub prediction: Vec<f64>,
    pub targets: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub latent: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub state: usize,
    pub seed: u64,
    pub settings: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub selector: String,
    pub estimator: String,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub rows: Vec<EvalRow>,
    pub sequences: Vec<SequenceRecord>,
}

/// Selects up to the largest budget once per `(state, seed)` and scores every budget prefix.
pub fn evaluate(
    ds: &Dataset,
    states: &[usize],
    selector: &dyn Selector,
    estimator: &dyn Estimator,
    budgets: &[usize],
    seeds: &[u64],
    keep_latent: bool,
) -> Result<EvalRun> {
    let max_budget = budgets.iter().copied().max().ok_or_else(|| Error::Config("no budgets given".into()))?;
    if budgets.contains(&0) {
        return Err(Error::Config("budgets must be positive".into()));
    }
    let n = ds.records.first().map_or(0, |r| r.stats.len());
    if max_budget > n {
        return Err(Error::Config(format!("budget {max_budget} exceeds the family size {n}")));
    }
    let mut rows = Vec::with_capacity(states.len() * seeds.len() * budgets.len());
    let mut sequences = Vec::with_capacity(states.len() * seeds.len());
    for &seed in seeds {
        for &state in states {
            let rec = ds.records.get(state).ok_or_else(|| Error::Config(format!("state {state} not in dataset")))?;
            let mut rng = stream(seed, &format!("rollout/{state}"));
            let mut acquire = |k: usize| Ok(rec.stats[k].clone());
            let traj = selector.select(max_budget, &mut rng, &mut acquire)?;
            let records = traj.records();
            for &b in budgets {
                let e = estimator.estimate(rec, &records[..b])?;
                rows.push(EvalRow {
                    state,
                    seed,
                    budget: b,
                    error: e.error,
                    fidelity: e.fidelity,
                    prediction: e.prediction,
                    targets: rec.targets.clone(),
                    latent: if keep_latent { e.latent } else { Vec::new() },
                });
            }
            sequences.push(SequenceRecord { state, seed, settings: traj.settings() });
        }
    }
    Ok(EvalRun {
        selector: selector.name().into(),
        estimator: estimator.name().into(),
        budgets: budgets.to_vec(),
        seeds: seeds.to_vec(),
        rows,
        sequences,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: usize,
    pub mean_error: f64,
    /// Spread of the per-seed mean error across seeds.
    pub std_error: f64,
    pub per_seed_error: Vec<f64>,
    /// Per-target RMSE over states, averaged over seeds.
    pub rmse: Vec<f64>,
    /// `1 − rmse / range`, the range taken over the evaluated states.
    pub accuracy: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_fidelity: Option<f64>,
}

pub fn curve(run: &EvalRun) -> Vec<CurvePoint> {
    run.budgets
        .iter()
        .map(|&b| {
            let at: Vec<_> = run.rows.iter().filter(|r| r.budget == b).collect();
            let per_seed: Vec<f64> = run
                .seeds
                .iter()
                .map(|&s| {
                    let e: Vec<f64> = at.iter().filter(|r| r.seed == s).map(|r| r.error).collect();
                    mean_std(&e).0
                })
                .collect();
            let all: Vec<f64> = at.iter().map(|r| r.error).collect();
            let m = at.first().map_or(0, |r| r.prediction.len());
            let mut rmse_sum = vec![0.0; m];
            let mut range = vec![0.0; m];
            for j in 0..m {
                let t: Vec<f64> = at.iter().map(|r| r.targets[j]).collect();
                let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                range[j] = hi - lo;
                for &s in &run.seeds {
                    let (p, t): (Vec<f64>, Vec<f64>) =
                        at.iter().filter(|r| r.seed == s).map(|r| (r.prediction[j], r.targets[j])).unzip();
                    rmse_sum[j] += rmse(&p, &t) / run.seeds.len() as f64;
                }
            }
            let fids: Vec<f64> = at.iter().filter_map(|r| r.fidelity).collect();
            CurvePoint {
                budget: b,
                mean_error: mean_std(&all).0,
                std_error: mean_std(&per_seed).1,
                per_seed_error: per_seed,
                accuracy: rmse_sum.iter().zip(&range).map(|(r, g)| accuracy(*r, *g)).collect(),
                rmse: rmse_sum,
                mean_fidelity: if fids.is_empty() { None } else { Some(mean_std(&fids).0) },
            }
        })
        .collect()
}

/// Selection counts per leftmost triplet site over the first `budget` choices of each sequence.
pub fn site_histogram(family: &PovmFamily, sequences: &[SequenceRecord], budget: usize) -> Result<Vec<usize>> {
    let sites = family.n_sites().ok_or_else(|| Error::Config("site histograms need a triplet family".into()))?;
    let mut h = vec![0; sites];
    for seq in sequences {
        for &k in seq.settings.iter().take(budget) {
            if let Some(s) = family.setting(k)?.site() {
                h[s] += 1;
            }
        }
    }
    Ok(h)
}

/// Total-variation distance of a count histogram from uniform.
pub fn tv_from_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 || counts.is_empty() {
        return 0.0;
    }
    let u = 1.0 / counts.len() as f64;
    0.5 * counts.iter().map(|&c| (c as f64 / total as f64 - u).abs()).sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

/// Paired sign test that `a` is smaller than `b`; exact ties are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let ties = a.len().min(b.len()) - wins - losses;
    let n = wins + losses;
    let mut p = 0.0;
    let mut c = 1.0f64;
    for k in 0..=n {
        if k >= wins {
            p += c;
        }
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    SignTest { wins, losses, ties, p_value: p / 2f64.powi(n as i32) }
}
