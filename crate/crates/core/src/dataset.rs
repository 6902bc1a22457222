//! Generated state collections: parameters, full per-setting outcome
//! statistics, targets and the train/test split.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::povm::{all_outcome_probabilities, sample_outcomes, FamilyKind, PovmFamily, Shots};
use crate::seeds::{derive_seed, stream, Provenance};
use crate::tasks::{Task, TaskConfig};

pub const DATASET_FORMAT: &str = "tgms-dataset/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub id: usize,
    pub params: Vec<f64>,
    /// Outcome statistics for every setting of the family, in enumeration order.
    pub stats: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub task: String,
    pub task_config: TaskConfig,
    pub family: FamilyKind,
    pub param_names: Vec<String>,
    pub target_names: Vec<String>,
    pub loss_weights: Vec<f64>,
    pub shots: Option<u64>,
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<StateRecord>,
}

#[derive(Clone, Debug)]
pub struct GenOptions {
    pub n_states: usize,
    pub seed: u64,
    pub shots: Option<u64>,
    pub train_fraction: f64,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self { n_states: 200, seed: 0, shots: None, train_fraction: 0.8 }
    }
}

/// Realizes `n_states` random states of `task` and records everything needed downstream.
pub fn generate(task: &dyn Task, task_config: &TaskConfig, opts: &GenOptions) -> Result<Dataset> {
    if opts.n_states == 0 {
        return Err(Error::Config("n_states must be positive".into()));
    }
    if !(opts.train_fraction > 0.0 && opts.train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {} outside (0, 1)", opts.train_fraction)));
    }
    let family = PovmFamily::new(task.family())?;
    let mut prng = stream(opts.seed, "data/params");
    let shots_root = derive_seed(opts.seed, "data/shots");
    let mut records = Vec::with_capacity(opts.n_states);
    for id in 0..opts.n_states {
        let params = task.sample_params(&mut prng);
        let psi = task.realize(&params)?;
        let stats = match opts.shots {
            None => all_outcome_probabilities(&psi, &family)?.into_iter().map(|s| s.values).collect(),
            Some(s) => (0..family.len())
                .map(|k| {
                    let seed = derive_seed(shots_root, &format!("{id}/{k}"));
                    Ok(sample_outcomes(&psi, &family, k, Shots::Finite(s), seed)?.values)
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let targets = task.targets(&psi)?;
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numerical(format!("non-finite target for state {id} at {params:?}")));
        }
        let label = task.phase_label(&targets);
        records.push(StateRecord { id, params, stats, targets, label });
        if (id + 1) % 50 == 0 {
            info!("{}: generated {}/{} states", task.name(), id + 1, opts.n_states);
        }
    }
    let mut order: Vec<usize> = (0..opts.n_states).collect();
    order.shuffle(&mut stream(opts.seed, "data/split"));
    let n_train = ((opts.n_states as f64) * opts.train_fraction).round() as usize;
    let n_train = if opts.n_states == 1 { 1 } else { n_train.clamp(1, opts.n_states - 1) };
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        task: task.name().into(),
        task_config: task_config.clone(),
        family: task.family(),
        param_names: task.param_names(),
        target_names: task.target_names(),
        loss_weights: task.loss_weights(),
        shots: opts.shots,
        seed: opts.seed,
        train,
        test,
        provenance: None,
    };
    Ok(Dataset { header, records })
}

impl Dataset {
    pub fn family(&self) -> Result<PovmFamily> {
        Ok(PovmFamily::new(self.header.family.clone())?)
    }

    pub fn record(&self, id: usize) -> &StateRecord {
        &self.records[id]
    }

    pub fn train(&self) -> &[usize] {
        &self.header.train
    }

    pub fn test(&self) -> &[usize] {
        &self.header.test
    }

    /// Line-delimited JSON: the header, then one state per line.
    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let first = lines.next().ok_or_else(|| Error::Config("empty dataset file".into()))??;
        let header: DatasetHeader = serde_json::from_str(&first)?;
        if header.format != DATASET_FORMAT {
            return Err(Error::Config(format!("unsupported dataset format {}", header.format)));
        }
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        let ds = Self { header, records };
        ds.check()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    fn check(&self) -> Result<()> {
        let family = self.family()?;
        for (i, r) in self.records.iter().enumerate() {
            if r.id != i || r.stats.len() != family.len() || r.targets.len() != self.header.target_names.len() {
                return Err(Error::Config(format!("record {i} does not match the dataset header")));
            }
        }
        let n = self.records.len();
        let mut seen = vec![false; n];
        for &k in self.header.train.iter().chain(&self.header.test) {
            if k >= n || seen[k] {
                return Err(Error::Config("split indices are out of range or overlap".into()));
            }
            seen[k] = true;
        }
        Ok(())
    }

    /// Per-target `(mean, std)` over the given records; zero spreads become 1.
    pub fn target_moments(&self, ids: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let m = self.header.target_names.len();
        let n = ids.len().max(1) as f64;
        let mut mean = vec![0.0; m];
        for &i in ids {
            for (a, t) in mean.iter_mut().zip(&self.records[i].targets) {
                *a += t / n;
            }
        }
        let mut var = vec![0.0; m];
        for &i in ids {
            for ((v, t), mu) in var.iter_mut().zip(&self.records[i].targets).zip(&mean) {
                *v += (t - mu).powi(2) / n;
            }
        }
        let std = var.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        (mean, std)
    }
}
