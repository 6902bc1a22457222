use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tgms_core::dataset::Dataset;
use tgms_core::eval::sign_test;
use tgms_core::predict::DeepSetModel;
use tgms_core::tgms::PolicyModel;
use tgms_core::Result;

use tgms_bench::output::{curve_table, header, write_json, write_jsonl};
use tgms_bench::{exit_code, EvalReport, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "tgms-bench", version, about = "Adaptive measurement selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults are used for missing keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set selector.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample states and write their full measurement statistics.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the property predictor on the training split.
    TrainPredictor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train the selection policy against a frozen predictor.
    TrainSelector {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Required unless `selector_env = "fisher"`.
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate the configured selector and estimator.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate uniform random selection.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Phase-space tomography with iMLE, optionally dumping reconstructed density matrices.
    Tomography {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Number of states whose density matrices are written.
        #[arg(long, default_value_t = 0)]
        dump: usize,
    },
    /// Evaluate a trained policy on another dataset of the same family, against random selection.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        predictor: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn experiment(c: &Common) -> Result<Experiment> {
    Experiment::new(ExperimentConfig::load(c.config.as_deref(), &c.set)?)
}

fn load_policy(p: Option<&Path>) -> Result<Option<Arc<PolicyModel>>> {
    p.map(|p| PolicyModel::load(p).map(Arc::new)).transpose()
}

fn load_predictor(p: Option<&Path>) -> Result<Option<Arc<DeepSetModel>>> {
    p.map(|p| DeepSetModel::load(p).map(Arc::new)).transpose()
}

fn write_report(exp: &Experiment, dir: &Path, command: &str, report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let h = header(command, &exp.provenance(&[]));
    let tag = &report.run.selector;
    write_jsonl(&dir.join(format!("{tag}_curve.jsonl")), &h, &report.curve)?;
    write_jsonl(&dir.join(format!("{tag}_predictions.jsonl")), &h, &report.run.rows)?;
    write_jsonl(&dir.join(format!("{tag}_sequences.jsonl")), &h, &report.run.sequences)?;
    write_json(
        &dir.join(format!("{tag}_summary.json")),
        &h,
        &json!({
            "selector": report.run.selector,
            "estimator": report.run.estimator,
            "sites": report.sites,
            "correlation": report.correlation,
            "silhouette": report.silhouette,
        }),
    )?;
    print!("{}", curve_table(&format!("{} / {}", report.run.selector, report.run.estimator), &report.curve));
    if let Some(s) = &report.sites {
        println!("site histogram at budget {}: {:?} (TV from uniform {:.4})", s.budget, s.counts, s.tv_from_uniform);
    }
    if let Some(s) = report.silhouette {
        println!("latent silhouette: {s:.4}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common, out } => {
            let exp = experiment(&common)?;
            let ds = exp.gen_data()?;
            ds.save(&out)?;
            log::info!("wrote {} records to {}", ds.records.len(), out.display());
        }
        Command::TrainPredictor { common, data, out, log } => {
            let exp = experiment(&common)?;
            let ds = Dataset::load(&data)?;
            let mut logs = Vec::new();
            let model = exp.train_predictor(&ds, |l| {
                log::info!("step {} loss {:.5} lr {:.2e}", l.step, l.loss, l.lr);
                logs.push(l.clone());
            })?;
            model.save(&out)?;
            if let Some(p) = log {
                write_jsonl(&p, &header("train-predictor", &exp.provenance(&["init/predictor"])), &logs)?;
            }
        }
        Command::TrainSelector { common, data, predictor, out, log } => {
            let exp = experiment(&common)?;
            let ds = Dataset::load(&data)?;
            let model = load_predictor(predictor.as_deref())?;
            let (policy, logs) = exp.train_selector(&ds, model.as_deref(), |l| {
                log::info!(
                    "epoch {} window {}..={} loss {:.5} val {:.5} entropy {:.3}",
                    l.epoch,
                    l.window.t1,
                    l.window.t2,
                    l.mean_loss,
                    l.val_loss,
                    l.mean_entropy
                );
            })?;
            policy.save(&out)?;
            if let Some(p) = log {
                write_jsonl(&p, &header("train-selector", &exp.provenance(&["init/policy", "train/selector"])), &logs)?;
            }
        }
        Command::Eval { common, data, policy, predictor, out_dir } => {
            let exp = experiment(&common)?;
            let ds = Dataset::load(&data)?;
            let e = &exp.config.eval;
            let report = exp.evaluate(
                &ds,
                &e.selector,
                &e.estimator,
                load_policy(policy.as_deref())?,
                load_predictor(predictor.as_deref())?,
            )?;
            write_report(&exp, &out_dir, "eval", &report)?;
        }
        Command::Baseline { common, data, predictor, out_dir } => {
            let exp = experiment(&common)?;
            let ds = Dataset::load(&data)?;
            let report =
                exp.evaluate(&ds, "random", &exp.config.eval.estimator, None, load_predictor(predictor.as_deref())?)?;
            write_report(&exp, &out_dir, "baseline", &report)?;
        }
        Command::Tomography { common, data, policy, out_dir, dump } => {
            let exp = experiment(&common)?;
            let ds = Dataset::load(&data)?;
            let policy = load_policy(policy.as_deref())?;
            let selector = exp.config.eval.selector.clone();
            let report = exp.evaluate(&ds, &selector, "imle", policy.clone(), None)?;
            write_report(&exp, &out_dir, "tomography", &report)?;
            if dump > 0 {
                let dumps = exp.density_dumps(&ds, &selector, policy, dump)?;
                write_jsonl(&out_dir.join(format!("{selector}_density.jsonl")), &header("tomography", &exp.provenance(&[])), &dumps)?;
            }
        }
        Command::Transfer { common, data, policy, predictor, out_dir } => {
            let exp = experiment(&common)?;
            let ds = Dataset::load(&data)?;
            let policy = load_policy(Some(&policy))?;
            let predictor = load_predictor(Some(&predictor))?;
            let e = &exp.config.eval;
            let ours = exp.evaluate(&ds, &e.selector, &e.estimator, policy, predictor.clone())?;
            let base = exp.evaluate(&ds, "random", &e.estimator, None, predictor)?;
            write_report(&exp, &out_dir, "transfer", &ours)?;
            write_report(&exp, &out_dir, "transfer", &base)?;
            for (a, b) in ours.curve.iter().zip(&base.curve) {
                let t = sign_test(&a.per_seed_error, &b.per_seed_error);
                println!(
                    "budget {:>4}: {} {:.6} vs random {:.6}, wins {}/{} (p = {:.2e})",
                    a.budget,
                    ours.run.selector,
                    a.mean_error,
                    b.mean_error,
                    t.wins,
                    t.wins + t.losses + t.ties,
                    t.p_value
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
