use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tgms_core::predict::{DeepSetConfig, ImleConfig};
use tgms_core::tasks::TaskConfig;
use tgms_core::tgms::{Mode, PolicyConfig, SelectorTrainConfig};
use tgms_core::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_states: usize,
    /// Shots per setting; exact probabilities when absent.
    pub shots: Option<u64>,
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n_states: 200, shots: None, train_fraction: 0.8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSplit {
    Train,
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub selector: String,
    pub estimator: String,
    pub mode: Mode,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub states: StateSplit,
    /// Site shift for the `shifted` selector; `n/4` when absent.
    pub shift: Option<usize>,
    /// Budget at which histograms, strategy correlations and latent clustering are reported.
    pub cluster_budget: usize,
    /// Number of states in the strategy-correlation matrix.
    pub correlation_states: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            selector: "tgms".into(),
            estimator: "deepset".into(),
            mode: Mode::Sample,
            budgets: vec![1, 3, 5, 10, 20],
            seeds: (0..20).collect(),
            states: StateSplit::Test,
            shift: None,
            cluster_budget: 10,
            correlation_states: 10,
        }
    }
}

/// Everything one experiment needs. Every section has defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: String,
    pub seed: u64,
    pub task_config: TaskConfig,
    pub data: DataConfig,
    pub predictor: DeepSetConfig,
    pub policy: PolicyConfig,
    pub selector: SelectorTrainConfig,
    /// Loss the selector is trained against: `predictor` or `fisher`.
    pub selector_env: String,
    /// Share of the training states held out for selector validation.
    pub val_fraction: f64,
    pub eval: EvalConfig,
    pub imle: ImleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: "cluster-ising-open".into(),
            seed: 1,
            task_config: TaskConfig::default(),
            data: DataConfig::default(),
            predictor: DeepSetConfig {
                latent: 48,
                hidden: 64,
                steps: 2000,
                batch: 32,
                lr: 3e-3,
                t_max: 40,
                ..Default::default()
            },
            policy: PolicyConfig::default(),
            selector: SelectorTrainConfig {
                epochs: 24,
                window_shift: Some(5),
                shift_every: Some(8),
                ..Default::default()
            },
            selector_env: "predictor".into(),
            val_fraction: 0.2,
            eval: EvalConfig::default(),
            imle: ImleConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads an optional TOML file and applies `key.path=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction >= 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        if self.eval.budgets.is_empty() || self.eval.budgets.contains(&0) {
            return Err(Error::Config("eval.budgets must be nonempty and positive".into()));
        }
        if self.eval.seeds.is_empty() {
            return Err(Error::Config("eval.seeds is empty".into()));
        }
        Ok(())
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not of the form key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
