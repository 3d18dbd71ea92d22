//! Per-stage timing across hop bounds on a fixed graph set.
//!
//! For each K the same graphs are preprocessed, the per-hop kernel tables
//! are built, and a full forward and backward pass is run; every stage is
//! repeated and its median wall time reported next to Σ p_K, the total
//! number of (predecessor, center) pairs the scan touches.

use std::fmt;
use std::time::Instant;

use dgssm_core::algos::{HopBound, PageRankConfig};
use dgssm_core::graph::DiGraph;
use dgssm_core::model::{ssm_table, targets, task_loss, ForwardInputs, Model, ModelConfig, Targets};
use dgssm_core::nn::{backward, Tape};
use serde::{Deserialize, Serialize};

use crate::data::{batches, prepare_graphs};
use crate::error::{HarnessError, Result};
use crate::synth::{gen_synthetic, SyntheticTaskSpec, FEATURES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub graphs: SyntheticTaskSpec,
    pub hops: Vec<usize>,
    pub repeats: usize,
    pub batch_size: usize,
    /// Hop bound, input width and task are overridden per run.
    pub model: ModelConfig,
    pub pagerank: PageRankConfig,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            graphs: SyntheticTaskSpec {
                num_graphs: 32,
                min_nodes: 60,
                max_nodes: 80,
                edge_density: 1.1,
                split: [1.0, 0.0, 0.0],
                ..Default::default()
            },
            hops: (1..=9).collect(),
            repeats: 7,
            batch_size: 16,
            model: ModelConfig {
                hidden: 32,
                heads: 4,
                ..Default::default()
            },
            pagerank: PageRankConfig::default(),
            seed: 0,
        }
    }
}

/// Median seconds per stage over the whole graph set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub preprocess: f64,
    pub kernel: f64,
    pub forward: f64,
    pub backward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub k: usize,
    /// Σ p_K over all graphs and scan directions.
    pub pairs: usize,
    pub seconds: StageTimes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub graphs: usize,
    pub nodes: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// `max_K (t_K / t_first) / (P_K / P_first)` for the stage picked by
    /// `stage`: how far time outgrows the pair count relative to the first row.
    pub fn superlinearity(&self, stage: impl Fn(&StageTimes) -> f64) -> f64 {
        let Some(first) = self.rows.first() else {
            return f64::NAN;
        };
        self.rows
            .iter()
            .map(|r| (stage(&r.seconds) / stage(&first.seconds)) / (r.pairs as f64 / first.pairs as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn forward_superlinearity(&self) -> f64 {
        self.superlinearity(|s| s.forward)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} graphs, {} nodes", self.graphs, self.nodes)?;
        writeln!(
            f,
            "{:>3} {:>9} {:>12} {:>12} {:>12} {:>12}",
            "K", "pairs", "preprocess", "kernel", "forward", "backward"
        )?;
        for r in &self.rows {
            let s = r.seconds;
            writeln!(
                f,
                "{:>3} {:>9} {:>11.2}ms {:>11.3}ms {:>11.2}ms {:>11.2}ms",
                r.k,
                r.pairs,
                s.preprocess * 1e3,
                s.kernel * 1e3,
                s.forward * 1e3,
                s.backward * 1e3
            )?;
        }
        write!(f, "forward time / pair count growth, worst K: {:.3}", self.forward_superlinearity())
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

struct Setup {
    k: usize,
    cfg: ModelConfig,
    model: Model,
    work: Vec<(ForwardInputs, Targets)>,
    prefixes: Vec<String>,
    pairs: usize,
}

fn setup(spec: &BenchSpec, graphs: &[DiGraph], k: usize) -> Result<Setup> {
    let cfg = ModelConfig {
        hop_bound: HopBound::Finite(k),
        in_features: FEATURES,
        task: spec.graphs.kind.model_task(),
        num_classes: spec.graphs.kind.num_classes(),
        ..spec.model.clone()
    };
    let model = Model::new(cfg.clone(), spec.seed)?;
    let items = prepare_graphs(graphs, &cfg, &spec.pagerank)?;
    let pairs = items
        .iter()
        .map(|p| p.forward.pairs.len() + p.reverse.as_ref().map_or(0, |r| r.pairs.len()))
        .sum();
    let order: Vec<usize> = (0..items.len()).collect();
    let work = batches(&items, &order, spec.batch_size)?
        .iter()
        .map(|b| Ok((model.inputs(b)?, targets(&cfg, &b.batch)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut prefixes = Vec::new();
    for l in 0..cfg.num_layers {
        prefixes.push(format!("l{l}.fwd"));
        if cfg.bidirectional {
            prefixes.push(format!("l{l}.rev"));
        }
    }
    Ok(Setup {
        k,
        cfg,
        model,
        work,
        prefixes,
        pairs,
    })
}

fn time_stages(spec: &BenchSpec, graphs: &[DiGraph], s: &mut Setup) -> Result<StageTimes> {
    let start = Instant::now();
    prepare_graphs(graphs, &s.cfg, &spec.pagerank)?;
    let preprocess = start.elapsed().as_secs_f64();

    // one table per direction and layer for every batch, as the forward pass builds them
    let start = Instant::now();
    for _ in &s.work {
        let tape = Tape::new(false);
        for p in &s.prefixes {
            ssm_table(&tape, &s.model.params, p, s.k + 1)?;
        }
    }
    let kernel = start.elapsed().as_secs_f64();

    let start = Instant::now();
    for (inputs, _) in &s.work {
        let tape = Tape::new(false);
        s.model.forward(&tape, inputs, None)?;
    }
    let forward = start.elapsed().as_secs_f64();

    let mut backward_time = 0.0;
    for (inputs, t) in &s.work {
        let tape = Tape::new(true);
        let loss = task_loss(s.model.forward(&tape, inputs, None)?, t)?;
        s.model.params.zero_grad();
        let start = Instant::now();
        backward(loss, &mut s.model.params)?;
        backward_time += start.elapsed().as_secs_f64();
    }
    Ok(StageTimes {
        preprocess,
        kernel,
        forward,
        backward: backward_time,
    })
}

/// Times every stage for each hop bound. Rounds visit all hop bounds in
/// turn, so slow drifts in machine load spread evenly across K; each stage
/// reports its median over the rounds after one untimed warm-up round.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchReport> {
    if spec.hops.is_empty() || spec.repeats == 0 || spec.batch_size == 0 {
        return Err(HarnessError::Config("bench needs hop bounds, repeats >= 1 and batch_size >= 1".into()));
    }
    let data = gen_synthetic(&spec.graphs)?;
    let graphs: Vec<DiGraph> = data.splits().iter().flat_map(|s| s.iter().cloned()).collect();
    let nodes = graphs.iter().map(|g| g.num_nodes()).sum();
    let mut setups = spec.hops.iter().map(|&k| setup(spec, &graphs, k)).collect::<Result<Vec<_>>>()?;
    let mut samples = vec![Vec::with_capacity(spec.repeats); setups.len()];
    for round in 0..=spec.repeats {
        for (s, out) in setups.iter_mut().zip(&mut samples) {
            let t = time_stages(spec, &graphs, s)?;
            if round > 0 {
                out.push(t);
            }
        }
    }
    let rows = setups
        .iter()
        .zip(samples)
        .map(|(s, ts)| {
            let med = |f: fn(&StageTimes) -> f64| median(ts.iter().map(f).collect());
            BenchRow {
                k: s.k,
                pairs: s.pairs,
                seconds: StageTimes {
                    preprocess: med(|t| t.preprocess),
                    kernel: med(|t| t.kernel),
                    forward: med(|t| t.forward),
                    backward: med(|t| t.backward),
                },
            }
        })
        .collect();
    Ok(BenchReport {
        graphs: graphs.len(),
        nodes,
        rows,
    })
}
