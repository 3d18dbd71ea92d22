//! `dgssm`: dataset generation, preprocessing, statistics, training,
//! evaluation, oracle suites and timing from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dgssm_core::algos::HopBound;
use dgssm_core::graph::{compute_stats, load_graphs, DiGraph};
use dgssm_core::model::Model;
use dgssm_core::preprocess::save_sidecar;
use dgssm_harness::bench::{run_bench, BenchSpec};
use dgssm_harness::config::RunConfig;
use dgssm_harness::data::prepare_graphs;
use dgssm_harness::oracle::{run_suite, SUITES};
use dgssm_harness::synth::{gen_synthetic, SyntheticTaskSpec, TaskKind, FEATURES};
use dgssm_harness::train::{evaluate, train};
use dgssm_harness::HarnessError;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dgssm", version, about = "Directed-graph state space models at desk scale")]
struct Cli {
    /// Seed for generation, initialization and shuffling; overrides the config file.
    #[arg(long, global = true, env = "DGSSM_SEED")]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen(GenArgs),
    /// Compute k-hop, depth and PageRank artifacts into a sidecar file.
    Preprocess(InputArgs),
    /// Report dataset statistics.
    Stats(InputArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Run named property suites against reference computations.
    OracleCheck(OracleArgs),
    /// Time the pipeline stages across hop bounds.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "depth-regress")]
    task: TaskKind,
    #[arg(long)]
    num_graphs: Option<usize>,
    #[arg(long)]
    min_nodes: Option<usize>,
    #[arg(long)]
    max_nodes: Option<usize>,
    /// Expected out-degree per node.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    cycle_rate: Option<f64>,
    /// Reachability horizon for `reachability-classify`.
    #[arg(long)]
    k_true: Option<usize>,
}

#[derive(Args)]
struct InputArgs {
    /// Graphs in JSON-lines form.
    input: PathBuf,
    /// Hop bound, a number or `inf`; defaults to the config's.
    #[arg(long)]
    k: Option<HopBound>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `gen` (train.jsonl, val.jsonl, test.jsonl).
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    k: Option<HopBound>,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    /// A JSON-lines file, or a dataset directory together with `--split`.
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Also write outputs and targets as JSON to this file.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Suites to run; all of them when omitted.
    suites: Vec<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Hop bounds to time.
    #[arg(long, value_delimiter = ',', default_values_t = 1..=9)]
    hops: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    repeats: usize,
    #[arg(long)]
    num_graphs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn emit<T: Serialize + std::fmt::Display>(json: bool, value: &T) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        println!("{value}");
    }
    Ok(())
}

fn run_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn require_out(cli: &Cli) -> anyhow::Result<&Path> {
    cli.out.as_deref().context("this command needs --out <dir>")
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = run_config(&cli)?;
    match &cli.command {
        Command::Gen(a) => {
            let d = SyntheticTaskSpec::default();
            let spec = SyntheticTaskSpec {
                kind: a.task,
                num_graphs: a.num_graphs.unwrap_or(d.num_graphs),
                min_nodes: a.min_nodes.unwrap_or(d.min_nodes),
                max_nodes: a.max_nodes.unwrap_or(d.max_nodes),
                edge_density: a.density.unwrap_or(d.edge_density),
                cycle_rate: a.cycle_rate.unwrap_or(d.cycle_rate),
                k_true: a.k_true.unwrap_or(d.k_true),
                seed: cfg.seed,
                ..d
            };
            let out = require_out(&cli)?;
            let data = gen_synthetic(&spec)?;
            data.save(out)?;
            let [tr, va, te] = data.splits().map(<[DiGraph]>::len);
            eprintln!("wrote {tr} train, {va} val, {te} test graphs to {}", out.display());
        }
        Command::Preprocess(a) => {
            let graphs = load_graphs(&a.input)?;
            let mut model = cfg.model.clone();
            if let Some(k) = a.k {
                model.hop_bound = k;
            }
            let items = prepare_graphs(&graphs, &model, &cfg.pagerank)?;
            let out = require_out(&cli)?;
            fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let stem = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("graphs");
            let path = out.join(format!("{stem}.dgpp"));
            save_sidecar(&path, &items, model.hop_bound, model.bidirectional)?;
            eprintln!("wrote artifacts for {} graphs to {}", items.len(), path.display());
        }
        Command::Stats(a) => {
            let graphs = load_graphs(&a.input)?;
            emit(cli.json, &compute_stats(&graphs, a.k.unwrap_or(cfg.model.hop_bound)))?;
        }
        Command::Train(a) => {
            let mut cfg = cfg.clone();
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            if let Some(k) = a.k {
                cfg.model.hop_bound = k;
            }
            let spec_path = a.data.join("spec.json");
            if spec_path.exists() {
                // the dataset fixes the task, the class count and the input width
                let spec: SyntheticTaskSpec = serde_json::from_str(&fs::read_to_string(&spec_path)?)?;
                cfg.model.task = spec.kind.model_task();
                cfg.model.num_classes = spec.kind.num_classes();
                cfg.model.in_features = FEATURES;
            }
            let load = |name: &str| -> anyhow::Result<Vec<DiGraph>> {
                let path = a.data.join(format!("{name}.jsonl"));
                if name != "train" && !path.exists() {
                    return Ok(Vec::new());
                }
                Ok(load_graphs(&path)?)
            };
            let prep = |gs: Vec<DiGraph>| prepare_graphs(&gs, &cfg.model, &cfg.pagerank);
            let train_set = prep(load("train")?)?;
            let val = prep(load("val")?)?;
            let test = prep(load("test")?)?;
            let outcome = train(&cfg, &train_set, &val)?;
            if !cli.json {
                for e in &outcome.log {
                    eprintln!(
                        "epoch {:>4}  train {:.5}  val {:.5}  {:.2}s",
                        e.epoch, e.train_loss, e.val_loss, e.seconds
                    );
                }
            }
            let report = TrainReport {
                best_epoch: outcome.best_epoch,
                best_metric: outcome.best_metric,
                epochs_run: outcome.log.len(),
                stopped_early: outcome.stopped_early,
                test: if test.is_empty() {
                    None
                } else {
                    Some(evaluate(&outcome.model, &test, cfg.batch_size)?.metrics)
                },
            };
            emit(cli.json, &report)?;
        }
        Command::Eval(a) => {
            let (model, _) = Model::load(&a.checkpoint)?;
            let path = if a.data.is_dir() {
                a.data.join(format!("{}.jsonl", a.split))
            } else {
                a.data.clone()
            };
            let graphs = load_graphs(&path)?;
            let items = prepare_graphs(&graphs, &model.config, &cfg.pagerank)?;
            let e = evaluate(&model, &items, cfg.batch_size)?;
            if let Some(p) = &a.predictions {
                let dump = Predictions {
                    width: e.outputs.dim(1),
                    outputs: e.outputs.to_f64(),
                    targets: e.targets.as_values(),
                };
                fs::write(p, serde_json::to_string(&dump)?).with_context(|| format!("writing {}", p.display()))?;
            }
            let report = EvalReport {
                graphs: graphs.len(),
                loss: e.loss,
                metrics: e.metrics,
            };
            emit(cli.json, &report)?;
        }
        Command::OracleCheck(a) => {
            let names: Vec<&str> = if a.suites.is_empty() {
                SUITES.to_vec()
            } else {
                a.suites.iter().map(String::as_str).collect()
            };
            if let Some(bad) = names.iter().find(|n| !SUITES.contains(n)) {
                return Err(HarnessError::UnknownSuite(bad.to_string()).into());
            }
            let mut reports = Vec::new();
            for name in names {
                let r = run_suite(name, cfg.seed)?;
                if !cli.json {
                    println!("{r}");
                }
                reports.push(r);
            }
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&reports)?);
            }
            if reports.iter().any(|r| !r.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Bench(a) => {
            let mut spec = BenchSpec {
                hops: a.hops.clone(),
                repeats: a.repeats,
                batch_size: cfg.batch_size,
                seed: cfg.seed,
                pagerank: cfg.pagerank,
                ..BenchSpec::default()
            };
            if cli.config.is_some() {
                spec.model = cfg.model.clone();
            }
            spec.graphs.seed = cfg.seed;
            if let Some(n) = a.num_graphs {
                spec.graphs.num_graphs = n;
            }
            let report = run_bench(&spec)?;
            if let Some(out) = &cli.out {
                fs::create_dir_all(out)?;
                fs::write(out.join("bench.json"), serde_json::to_string_pretty(&report)?)?;
            }
            emit(cli.json, &report)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct TrainReport {
    best_epoch: usize,
    best_metric: f64,
    epochs_run: usize,
    stopped_early: bool,
    test: Option<dgssm_harness::metrics::Metrics>,
}

impl std::fmt::Display for TrainReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "best epoch {} of {} (selection metric {:.5}){}",
            self.best_epoch,
            self.epochs_run,
            self.best_metric,
            if self.stopped_early { ", stopped early" } else { "" }
        )?;
        if let Some(m) = &self.test {
            for (k, v) in m {
                write!(f, "\ntest {k:<10} {v:.5}")?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct EvalReport {
    graphs: usize,
    loss: f64,
    metrics: dgssm_harness::metrics::Metrics,
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} graphs, loss {:.5}", self.graphs, self.loss)?;
        for (k, v) in &self.metrics {
            write!(f, "\n{k:<10} {v:.5}")?;
        }
        Ok(())
    }
}

/// Row-major outputs `[targets.len(), width]` next to their targets
/// (class indices as numbers for classification).
#[derive(Serialize)]
struct Predictions {
    width: usize,
    outputs: Vec<f64>,
    targets: Vec<f64>,
}
