//! Command-line front end: `simulate`, `train`, `evaluate`, `sweep`, `report`.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration, 3 I/O.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, RunConfig};
use crate::ddqn::write_train_log;
use crate::error::{Error, Result};
use crate::metrics::{dominates, energy_reduction, ParetoTolerance, TradeoffPoint};
use crate::qnet::QNetwork;
use crate::reward::episode_return;
use crate::schedulers::PolicySpec;
use crate::sweep::{self, pareto_sweep, Agent, AecrRow, SweepMean};

pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "adares", version, about = "Adaptive frame-resolution scheduling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON run configuration; the shipped defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll one policy over one sequence and write its trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// e.g. `allkey`, `const:a4`, `scan:cnstrt=0.2`, `adaptive:a3:thr=10`, `fixed:a2:l=1`, `random:r=0.7`
        #[arg(long)]
        policy: PolicySpec,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a scheduler; writes `checkpoint.qnet` and `train_log.csv`.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Greedy rollouts of a checkpoint; writes one trace per sequence and `summary.csv`.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Baseline grid plus checkpoints; writes `sweep.csv`, `sweep_means.csv` and `aecr.csv`.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Tradeoff table and mean AECR series from a sweep directory.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sweep_dir: PathBuf,
        /// Defaults to the sweep directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("adares: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, policy, out } => simulate(&common, &policy, out.as_deref()),
        Command::Train {
            common,
            lambda,
            episodes,
            out_dir,
        } => train(&common, lambda, episodes, &out_dir),
        Command::Evaluate {
            common,
            checkpoint,
            out_dir,
        } => evaluate(&common, &checkpoint, &out_dir),
        Command::Sweep {
            common,
            checkpoints,
            out_dir,
        } => run_sweep(&common, &checkpoints, &out_dir),
        Command::Report {
            common,
            sweep_dir,
            out_dir,
        } => report(&common, &sweep_dir, out_dir.as_deref().unwrap_or(&sweep_dir)),
    }
}

fn experiment(common: &Common) -> Result<Experiment> {
    match &common.config {
        Some(path) => Experiment::load(path),
        None => Experiment::from_run(RunConfig::default(), Path::new(".")),
    }
}

/// With `--seed N` the evaluation sequences are `N, N+1, ...`; otherwise the configured list.
fn eval_seeds(exp: &Experiment, common: &Common) -> Vec<u64> {
    match common.seed {
        Some(s) => (0..exp.run.eval_seeds.len() as u64).map(|i| s.wrapping_add(i)).collect(),
        None => exp.run.eval_seeds.clone(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_checkpoint(path: &Path) -> Result<(QNetwork, serde_json::Value)> {
    QNetwork::load(path).map_err(|e| match e {
        Error::Io { path, source } => Error::Config(format!("cannot load checkpoint {}: {source}", path.display())),
        other => other,
    })
}

fn checkpoint_lambda(meta: &serde_json::Value, fallback: f64) -> f64 {
    meta.get("lambda").and_then(serde_json::Value::as_f64).unwrap_or(fallback)
}

fn simulate(common: &Common, policy: &PolicySpec, out: Option<&Path>) -> Result<()> {
    policy.validate().map_err(|e| Error::Config(e.to_string()))?;
    let exp = experiment(common)?;
    let seed = common.seed.unwrap_or(exp.run.sequence.base.rng_seed);
    let trace = sweep::rollout_spec(&exp, policy, exp.run.reward.lambda, seed)?;
    match out {
        Some(path) => {
            let mut w = create(path)?;
            trace.write_csv(&mut w)?;
            w.flush().map_err(|e| Error::io(path, e))
        }
        None => trace.write_csv(std::io::stdout().lock()),
    }
}

fn train(common: &Common, lambda: Option<f64>, episodes: Option<usize>, out_dir: &Path) -> Result<()> {
    let exp = experiment(common)?;
    let lambda = lambda.unwrap_or(exp.run.reward.lambda);
    let seed = common.seed.unwrap_or(exp.run.train.seed);
    let outcome = exp.train(lambda, seed, episodes)?;
    create_dir(out_dir)?;
    let meta = serde_json::json!({ "lambda": lambda, "seed": seed, "episodes": outcome.log.len() });
    outcome.online.save(out_dir.join("checkpoint.qnet"), meta)?;
    let log_path = out_dir.join("train_log.csv");
    let mut w = create(&log_path)?;
    write_train_log(&outcome.log, &mut w)?;
    w.flush().map_err(|e| Error::io(&log_path, e))
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    seed: u64,
    frames: usize,
    mean_accuracy: f64,
    total_mj: f64,
    policy_overhead_mj: f64,
    energy_reduction: f64,
    #[serde(rename = "return")]
    episode_return: f64,
}

fn evaluate(common: &Common, checkpoint: &Path, out_dir: &Path) -> Result<()> {
    let exp = experiment(common)?;
    let (net, meta) = load_checkpoint(checkpoint)?;
    let lambda = checkpoint_lambda(&meta, exp.run.reward.lambda);
    let seeds = eval_seeds(&exp, common);
    let (traces, _) = exp.evaluate(&net, lambda, &seeds)?;
    create_dir(out_dir)?;
    let mut rows = Vec::with_capacity(traces.len());
    for (trace, &seed) in traces.iter().zip(&seeds) {
        let reference = sweep::rollout_spec(&exp, &PolicySpec::AllKey, lambda, seed)?;
        let path = out_dir.join(format!("trace_{seed}.csv"));
        let mut w = create(&path)?;
        trace.write_csv(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        rows.push(SummaryRow {
            seed,
            frames: trace.len(),
            mean_accuracy: trace.mean_accuracy(),
            total_mj: trace.total_consumed_mj(),
            policy_overhead_mj: trace.total_extra_mj(),
            energy_reduction: energy_reduction(trace, &reference)?,
            episode_return: episode_return(trace, exp.run.reward.gamma),
        });
    }
    write_csv_file(&out_dir.join("summary.csv"), &rows)
}

fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    sweep::write_rows(rows, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn run_sweep(common: &Common, checkpoints: &[PathBuf], out_dir: &Path) -> Result<()> {
    let exp = experiment(common)?;
    let grid = exp.run.grid.enumerate()?;
    let mut agents = Vec::with_capacity(checkpoints.len());
    for path in checkpoints {
        let (net, meta) = load_checkpoint(path)?;
        let lambda = checkpoint_lambda(&meta, exp.run.reward.lambda);
        agents.push(Agent {
            label: format!("rl:lambda={lambda}:{}", agents.len()),
            lambda,
            net,
        });
    }
    let seeds = eval_seeds(&exp, common);
    let result = pareto_sweep(&exp, &grid, &agents, &seeds)?;
    create_dir(out_dir)?;
    write_csv_file(&out_dir.join("sweep.csv"), &result.rows)?;
    write_csv_file(&out_dir.join("sweep_means.csv"), &sweep::means(&result.rows))?;
    write_csv_file(&out_dir.join("aecr.csv"), &result.aecr)
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportRow {
    policy: String,
    family: String,
    lambda: f64,
    mean_accuracy: f64,
    mean_energy_reduction: f64,
    pareto: bool,
}

#[derive(Debug, Serialize)]
struct AecrMeanRow {
    policy: String,
    t: usize,
    mean_aecr: f64,
}

fn read_csv_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()?;
    if rows.is_empty() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "no data rows"),
        ));
    }
    Ok(rows)
}

fn report(_common: &Common, sweep_dir: &Path, out_dir: &Path) -> Result<()> {
    let means: Vec<SweepMean> = read_csv_file(&sweep_dir.join("sweep_means.csv"))?;
    let aecr: Vec<AecrRow> = read_csv_file(&sweep_dir.join("aecr.csv"))?;

    let points: Vec<TradeoffPoint> = means
        .iter()
        .map(|m| TradeoffPoint {
            accuracy: m.mean_accuracy,
            reduction: m.mean_energy_reduction,
        })
        .collect();
    let strict = ParetoTolerance {
        accuracy: 0.0,
        reduction: 0.0,
    };
    let table: Vec<ReportRow> = means
        .iter()
        .zip(&points)
        .map(|(m, &p)| ReportRow {
            policy: m.policy.clone(),
            family: m.family.clone(),
            lambda: m.lambda,
            mean_accuracy: m.mean_accuracy,
            mean_energy_reduction: m.mean_energy_reduction,
            pareto: !points.iter().any(|&q| q != p && dominates(q, p, strict)),
        })
        .collect();

    // Mean over seeds, per policy and frame; policy order follows the sweep file.
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for row in &aecr {
        if !order.contains(&row.policy) {
            order.push(row.policy.clone());
        }
        let e = acc.entry((row.policy.clone(), row.t)).or_insert((0.0, 0));
        e.0 += row.aecr;
        e.1 += 1;
    }
    let mut series = Vec::with_capacity(acc.len());
    for policy in &order {
        for ((p, t), (sum, n)) in acc.range((policy.clone(), 0)..=(policy.clone(), usize::MAX)) {
            series.push(AecrMeanRow {
                policy: p.clone(),
                t: *t,
                mean_aecr: sum / *n as f64,
            });
        }
    }

    create_dir(out_dir)?;
    write_csv_file(&out_dir.join("report_table.csv"), &table)?;
    write_csv_file(&out_dir.join("report_aecr.csv"), &series)
}
