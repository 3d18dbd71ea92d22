//! Synthetic directed-graph tasks whose labels are computed exactly from the
//! graph structure.
//!
//! * `depth-regress`: random DAGs with optional injected short cycles; every
//!   node is labelled with its condensation depth.
//! * `ancestor-count-regress`: the same graphs; each graph is labelled with
//!   the mean number of strict ancestors per node.
//! * `reachability-classify`: funnels draining into one flagged sink; a node
//!   is positive when it reaches the sink within `k_true` hops.
//!
//! Every node carries four features: a constant 1, in- and out-degree scaled
//! by 1/4, and a flag marking the designated sink (always 0 outside the
//! reachability task).

use std::fs;
use std::path::Path;
use std::str::FromStr;

use dgssm_core::algos::{depth_plus, k_hop_predecessors, HopBound};
use dgssm_core::graph::{load_graphs, save_graphs, DiGraph, Label};
use dgssm_core::model::Task;
use dgssm_core::nn::RngStream;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, HarnessError, Result};

pub const FEATURES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    DepthRegress,
    AncestorCountRegress,
    ReachabilityClassify,
}

impl TaskKind {
    pub fn model_task(self) -> Task {
        match self {
            TaskKind::DepthRegress => Task::NodeRegress,
            TaskKind::AncestorCountRegress => Task::GraphRegress,
            TaskKind::ReachabilityClassify => Task::NodeClassify,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            TaskKind::ReachabilityClassify => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::DepthRegress => "depth-regress",
            TaskKind::AncestorCountRegress => "ancestor-count-regress",
            TaskKind::ReachabilityClassify => "reachability-classify",
        }
    }
}

impl FromStr for TaskKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth-regress" => Ok(TaskKind::DepthRegress),
            "ancestor-count-regress" => Ok(TaskKind::AncestorCountRegress),
            "reachability-classify" => Ok(TaskKind::ReachabilityClassify),
            _ => Err(HarnessError::Config(format!("unknown synthetic task `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    pub kind: TaskKind,
    pub num_graphs: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Expected out-degree of a node.
    pub edge_density: f64,
    /// Fraction of graphs that receive injected cycles.
    pub cycle_rate: f64,
    pub seed: u64,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    /// Reachability horizon of `reachability-classify`.
    pub k_true: usize,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            kind: TaskKind::DepthRegress,
            num_graphs: 500,
            min_nodes: 12,
            max_nodes: 30,
            edge_density: 1.6,
            cycle_rate: 0.2,
            seed: 0,
            split: [0.7, 0.15, 0.15],
            k_true: 4,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::InfeasibleSpec(m));
        if self.num_graphs == 0 {
            return bad("num_graphs must be positive".into());
        }
        if self.min_nodes < 2 || self.min_nodes > self.max_nodes {
            return bad(format!("node range {}..={} is empty or below 2", self.min_nodes, self.max_nodes));
        }
        let cap = (self.min_nodes - 1) as f64 / 2.0;
        if !(self.edge_density > 0.0 && self.edge_density <= cap) {
            return bad(format!(
                "edge density {} must lie in (0, {cap}] for graphs of {} nodes",
                self.edge_density, self.min_nodes
            ));
        }
        if !(0.0..=1.0).contains(&self.cycle_rate) {
            return bad(format!("cycle rate {} outside [0, 1]", self.cycle_rate));
        }
        if self.split.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions {:?} must be in [0, 1] and sum to 1", self.split));
        }
        if self.kind == TaskKind::ReachabilityClassify && (self.k_true == 0 || self.min_nodes < 2 * self.k_true + 3) {
            return bad(format!(
                "reachability with k_true = {} needs k_true >= 1 and at least {} nodes per graph",
                self.k_true,
                2 * self.k_true + 3
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub spec: SyntheticTaskSpec,
    pub train: Vec<DiGraph>,
    pub val: Vec<DiGraph>,
    pub test: Vec<DiGraph>,
}

/// Generates and splits the dataset. Each graph draws from its own stream, so
/// the result does not depend on how generation is scheduled.
pub fn gen_synthetic(spec: &SyntheticTaskSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let graphs: Vec<DiGraph> = (0..spec.num_graphs)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(spec.seed, i as u64 + 1);
            let g = generate_one(spec, &mut rng)?;
            Ok(g.with_id(format!("{}-{i:05}", spec.kind.name())))
        })
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..graphs.len()).collect();
    order.shuffle(&mut RngStream::named(spec.seed, "split"));
    let n = graphs.len();
    let n_train = (spec.split[0] * n as f64).round() as usize;
    let n_val = ((spec.split[1] * n as f64).round() as usize).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| graphs[i].clone()).collect::<Vec<_>>();
    Ok(SyntheticDataset {
        spec: spec.clone(),
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

fn generate_one(spec: &SyntheticTaskSpec, rng: &mut RngStream) -> Result<DiGraph> {
    let n = rng.random_range(spec.min_nodes..=spec.max_nodes);
    let with_cycles = rng.random_bool(spec.cycle_rate);
    let (edges, sink) = match spec.kind {
        TaskKind::DepthRegress | TaskKind::AncestorCountRegress => {
            (dag_with_cycles(n, spec.edge_density, with_cycles, rng), None)
        }
        TaskKind::ReachabilityClassify => funnel(n, spec.edge_density, spec.k_true, with_cycles, rng),
    };
    // hide the construction order
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let edges: Vec<(usize, usize)> = edges.into_iter().map(|(u, v)| (perm[u], perm[v])).collect();
    let sink = sink.map(|s| perm[s]);

    let g = DiGraph::from_edges(n, &edges)?;
    let g = g.with_features(FEATURES, node_features(&g, sink))?;
    let label = match spec.kind {
        TaskKind::DepthRegress => Label::NodeValues(depth_plus(&g).into_iter().map(|d| d as f64).collect()),
        TaskKind::AncestorCountRegress => Label::GraphValue(mean_ancestors(&g)),
        TaskKind::ReachabilityClassify => {
            let sink = sink.expect("funnel has a sink");
            Label::NodeClasses(reaches_within(&g, sink, spec.k_true).into_iter().map(i64::from).collect())
        }
    };
    Ok(g.with_label(Some(label)))
}

fn node_features(g: &DiGraph, sink: Option<usize>) -> Vec<f64> {
    (0..g.num_nodes())
        .flat_map(|v| {
            [
                1.0,
                g.in_degree(v) as f64 / 4.0,
                g.out_degree(v) as f64 / 4.0,
                if Some(v) == sink { 1.0 } else { 0.0 },
            ]
        })
        .collect()
}

/// Random DAG over the order `0..n` with expected out-degree `density`, plus
/// one or two short cycles when `with_cycles`.
fn dag_with_cycles(n: usize, density: f64, with_cycles: bool, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let p = (2.0 * density / (n - 1) as f64).min(1.0);
    let mut adj = vec![vec![false; n]; n];
    for u in 0..n {
        for v in u + 1..n {
            adj[u][v] = rng.random_bool(p);
        }
    }
    if with_cycles {
        for _ in 0..rng.random_range(1..=2) {
            inject_cycle(&mut adj, rng);
        }
    }
    to_edges(&adj)
}

/// Closes a forward walk of 1 to 3 edges with a back edge; falls back to a
/// fresh 2-cycle when no walk can be found.
fn inject_cycle(adj: &mut [Vec<bool>], rng: &mut impl Rng) {
    let n = adj.len();
    for _ in 0..20 {
        let start = rng.random_range(0..n);
        let steps = rng.random_range(1..=3);
        let mut at = start;
        for _ in 0..steps {
            let next: Vec<usize> = (0..n).filter(|&w| adj[at][w] && w != at).collect();
            match next.choose(rng) {
                Some(&w) => at = w,
                None => break,
            }
        }
        if at != start && !adj[at][start] {
            adj[at][start] = true;
            return;
        }
    }
    let u = rng.random_range(0..n - 1);
    let v = rng.random_range(u + 1..n);
    adj[u][v] = true;
    adj[v][u] = true;
}

fn to_edges(adj: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let n = adj.len();
    (0..n)
        .flat_map(|u| (0..n).filter(move |&v| adj[u][v]).map(move |v| (u, v)))
        .collect()
}

/// Two chains drain into the sink (node 0): chain A has `k - 1` nodes and
/// chain B has `k`, so their far ends (the gates) sit at distances `k - 1` and
/// `k`. Most remaining nodes form a bulk where each node links to one of the
/// two gates, which puts it at distance `k` (positive) or `k + 1` (negative).
/// Within `k - 1` hops downstream both kinds of bulk node see the same shape,
/// so telling them apart needs the full horizon. The rest are upstream nodes
/// feeding the bulk and nodes that never reach the sink. Extra edges inside
/// the bulk never shorten a distance; they close cycles only when
/// `with_cycles` is set.
fn funnel(n: usize, density: f64, k: usize, with_cycles: bool, rng: &mut impl Rng) -> (Vec<(usize, usize)>, Option<usize>) {
    let mut edges = Vec::new();
    let mut next = 1;
    let mut chain = |len: usize, edges: &mut Vec<(usize, usize)>| {
        let mut at = 0;
        for _ in 0..len {
            edges.push((next, at));
            at = next;
            next += 1;
        }
        at
    };
    let gate_a = chain(k - 1, &mut edges);
    let gate_b = chain(k, &mut edges);
    let rest: Vec<usize> = (next..n).collect();
    let n_unreachable = rng.random_range(0..=rest.len() / 8);
    let n_upstream = rng.random_range(0..=rest.len() / 8);
    let n_bulk = rest.len() - n_unreachable - n_upstream;
    let (bulk, others) = rest.split_at(n_bulk);
    let (upstream, unreachable) = others.split_at(n_upstream);

    for &b in bulk {
        edges.push((b, if rng.random_bool(0.5) { gate_a } else { gate_b }));
    }
    for &u in upstream {
        edges.push((u, *bulk.choose(rng).expect("at least two bulk nodes")));
    }
    for (i, &u) in unreachable.iter().enumerate().skip(1) {
        edges.push((u, unreachable[rng.random_range(0..i)]));
    }
    // extra bulk edges, about `density - 1` per node on average
    let extra = ((density - 1.0).max(0.0) * n as f64).round() as usize;
    for _ in 0..extra {
        let i = rng.random_range(0..bulk.len());
        let j = rng.random_range(0..bulk.len());
        if i < j || (with_cycles && i != j) {
            edges.push((bulk[i], bulk[j]));
        }
    }
    if with_cycles {
        edges.push((bulk[0], bulk[1]));
        edges.push((bulk[1], bulk[0]));
    }
    edges.sort_unstable();
    edges.dedup();
    (edges, Some(0))
}

/// Mean number of strict ancestors per node.
pub fn mean_ancestors(g: &DiGraph) -> f64 {
    let pairs = k_hop_predecessors(g, HopBound::Unbounded);
    (pairs.len() - g.num_nodes()) as f64 / g.num_nodes() as f64
}

/// Whether each node reaches `sink` within `k` hops.
pub fn reaches_within(g: &DiGraph, sink: usize, k: usize) -> Vec<bool> {
    let mut out = vec![false; g.num_nodes()];
    for (u, v, _) in k_hop_predecessors(g, HopBound::Finite(k)).iter() {
        if v == sink {
            out[u] = true;
        }
    }
    out
}

/// Index of the flagged sink, if any.
pub fn sink_of(g: &DiGraph) -> Option<usize> {
    (0..g.num_nodes()).find(|&v| g.feature_row(v).get(3) == Some(&1.0))
}

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

impl SyntheticDataset {
    pub fn splits(&self) -> [&[DiGraph]; 3] {
        [&self.train, &self.val, &self.test]
    }

    /// Writes `spec.json` and one JSON-lines file per split into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_at(dir))?;
        let spec_path = dir.join("spec.json");
        fs::write(&spec_path, serde_json::to_string_pretty(&self.spec)? + "\n").map_err(io_at(&spec_path))?;
        for (name, gs) in SPLITS.iter().zip(self.splits()) {
            save_graphs(dir.join(format!("{name}.jsonl")), gs)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec_path = dir.join("spec.json");
        let text = fs::read_to_string(&spec_path).map_err(io_at(&spec_path))?;
        let spec: SyntheticTaskSpec = serde_json::from_str(&text)?;
        let [train, val, test] = SPLITS.map(|name| load_graphs(dir.join(format!("{name}.jsonl"))));
        Ok(Self {
            spec,
            train: train?,
            val: val?,
            test: test?,
        })
    }
}
