//! Directed graphs with node features, batching, JSON-lines I/O and dataset
//! statistics.
//!
//! Graph files hold one JSON object per line:
//!
//! ```text
//! {"n": 3, "edges": [[0,1],[1,2]], "x": [[1.0],[0.5],[0.0]], "y": 1, "id": "g0"}
//! ```
//!
//! `y` is optional and may be an integer (graph class), a float (graph target) or
//! a list with one entry per node. `id` is optional; a missing id is replaced by
//! `line-<n>`. `node_ids` may carry external node names; they are kept as a
//! sidecar table on the graph. Unknown keys (for example edge attributes) are
//! accepted and ignored.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algos::{self, HopBound};
use crate::error::{Error, Result};

/// Supervision attached to a graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    GraphClass(i64),
    GraphValue(f64),
    NodeClasses(Vec<i64>),
    NodeValues(Vec<f64>),
}

impl Label {
    pub fn is_node_level(&self) -> bool {
        matches!(self, Label::NodeClasses(_) | Label::NodeValues(_))
    }

    /// Node-level targets as reals, if this is a node-level label.
    pub fn node_values(&self) -> Option<Vec<f64>> {
        match self {
            Label::NodeClasses(v) => Some(v.iter().map(|&c| c as f64).collect()),
            Label::NodeValues(v) => Some(v.clone()),
            _ => None,
        }
    }

    pub fn graph_value(&self) -> Option<f64> {
        match self {
            Label::GraphClass(c) => Some(*c as f64),
            Label::GraphValue(v) => Some(*v),
            _ => None,
        }
    }
}

/// Immutable directed graph `G = (V, E)` with an n×f feature matrix.
///
/// Edges keep their input order. Both out- and in-adjacency are stored in
/// compressed form.
#[derive(Clone, Debug, PartialEq)]
pub struct DiGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    feature_dim: usize,
    features: Vec<f64>,
    label: Option<Label>,
    id: String,
    node_names: Option<Vec<String>>,
    out_offsets: Vec<usize>,
    out_targets: Vec<usize>,
    in_offsets: Vec<usize>,
    in_sources: Vec<usize>,
}

fn compress(n: usize, pairs: impl Iterator<Item = (usize, usize)> + Clone) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0usize; n + 1];
    for (a, _) in pairs.clone() {
        offsets[a + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut cursor = offsets.clone();
    let mut targets = vec![0usize; offsets[n]];
    for (a, b) in pairs {
        targets[cursor[a]] = b;
        cursor[a] += 1;
    }
    for i in 0..n {
        targets[offsets[i]..offsets[i + 1]].sort_unstable();
    }
    (offsets, targets)
}

impl DiGraph {
    /// Builds a graph from a row-major feature buffer of `num_nodes * feature_dim` values.
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        feature_dim: usize,
        features: Vec<f64>,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        if features.len() != num_nodes * feature_dim {
            return Err(Error::InvalidGraph(format!(
                "feature buffer has {} values, expected {} x {}",
                features.len(),
                num_nodes,
                feature_dim
            )));
        }
        for &(s, d) in &edges {
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({s}, {d}) out of range for {num_nodes} nodes"
                )));
            }
        }
        let mut sorted = edges.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let (out_offsets, out_targets) = compress(num_nodes, edges.iter().copied());
        let (in_offsets, in_sources) = compress(num_nodes, edges.iter().map(|&(s, d)| (d, s)));
        Ok(Self {
            num_nodes,
            edges,
            feature_dim,
            features,
            label: None,
            id: String::new(),
            node_names: None,
            out_offsets,
            out_targets,
            in_offsets,
            in_sources,
        })
    }

    /// Graph with a single constant feature per node.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(num_nodes, edges.to_vec(), 1, vec![1.0; num_nodes])
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_node_names(mut self, names: Option<Vec<String>>) -> Self {
        self.node_names = names;
        self
    }

    pub fn with_features(&self, feature_dim: usize, features: Vec<f64>) -> Result<Self> {
        let g = Self::new(self.num_nodes, self.edges.clone(), feature_dim, features)?;
        Ok(g.with_label(self.label.clone())
            .with_id(self.id.clone())
            .with_node_names(self.node_names.clone()))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, v: usize) -> &[f64] {
        &self.features[v * self.feature_dim..(v + 1) * self.feature_dim]
    }

    pub fn label(&self) -> Option<&Label> {
        self.label.as_ref()
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn node_names(&self) -> Option<&[String]> {
        self.node_names.as_deref()
    }

    /// Successors of `v`, ascending.
    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    /// Predecessors of `v`, ascending.
    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_sources[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out_offsets[v + 1] - self.out_offsets[v]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    pub fn has_self_loop(&self, v: usize) -> bool {
        self.out_neighbors(v).binary_search(&v).is_ok()
    }

    pub fn self_loop_count(&self) -> usize {
        self.edges.iter().filter(|(s, d)| s == d).count()
    }

    /// Relabels node `v` as `perm[v]`, permuting features and node labels accordingly.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes;
        if perm.len() != n {
            return Err(Error::InvalidGraph("permutation length differs from node count".into()));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidGraph("not a permutation".into()));
            }
        }
        let f = self.feature_dim;
        let mut features = vec![0.0; n * f];
        for v in 0..n {
            features[perm[v] * f..(perm[v] + 1) * f].copy_from_slice(self.feature_row(v));
        }
        let edges = self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
        let label = self.label.as_ref().map(|l| match l {
            Label::NodeClasses(v) => Label::NodeClasses(scatter(v, perm)),
            Label::NodeValues(v) => Label::NodeValues(scatter(v, perm)),
            other => other.clone(),
        });
        let names = self.node_names.as_ref().map(|v| scatter(v, perm));
        Ok(Self::new(n, edges, f, features)?
            .with_label(label)
            .with_id(self.id.clone())
            .with_node_names(names))
    }
}

fn scatter<T: Clone>(v: &[T], perm: &[usize]) -> Vec<T> {
    let mut out = v.to_vec();
    for (i, x) in v.iter().enumerate() {
        out[perm[i]] = x.clone();
    }
    out
}

/// Same nodes and data with every edge `(u, v)` replaced by `(v, u)`.
pub fn reverse_graph(g: &DiGraph) -> DiGraph {
    let edges = g.edges.iter().map(|&(s, d)| (d, s)).collect();
    DiGraph::new(g.num_nodes, edges, g.feature_dim, g.features.clone())
        .expect("reversing a valid graph keeps it valid")
        .with_label(g.label.clone())
        .with_id(g.id.clone())
        .with_node_names(g.node_names.clone())
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    n: usize,
    edges: Vec<[usize; 2]>,
    x: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_ids: Option<Vec<String>>,
}

fn record_to_graph(rec: GraphRecord, line: usize) -> std::result::Result<DiGraph, String> {
    if rec.x.len() != rec.n {
        return Err(format!("x has {} rows but n = {}", rec.x.len(), rec.n));
    }
    let f = rec.x.first().map_or(0, Vec::len);
    if let Some(row) = rec.x.iter().position(|r| r.len() != f) {
        return Err(format!("x row {row} has {} columns, expected {f}", rec.x[row].len()));
    }
    if let Some(names) = &rec.node_ids {
        if names.len() != rec.n {
            return Err(format!("node_ids has {} entries but n = {}", names.len(), rec.n));
        }
    }
    if let Some(label) = &rec.y {
        let len = match label {
            Label::NodeClasses(v) => Some(v.len()),
            Label::NodeValues(v) => Some(v.len()),
            _ => None,
        };
        if len.is_some_and(|l| l != rec.n) {
            return Err(format!("node label list length differs from n = {}", rec.n));
        }
    }
    let features = rec.x.into_iter().flatten().collect();
    let edges = rec.edges.iter().map(|e| (e[0], e[1])).collect();
    let g = DiGraph::new(rec.n, edges, f, features).map_err(|e| e.to_string())?;
    Ok(g.with_label(rec.y)
        .with_id(rec.id.unwrap_or_else(|| format!("line-{line}")))
        .with_node_names(rec.node_ids))
}

/// Reads a JSON-lines graph file. Blank lines are skipped.
pub fn load_graphs(path: impl AsRef<Path>) -> Result<Vec<DiGraph>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut graphs: Vec<DiGraph> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let rec: GraphRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let g = record_to_graph(rec, line_no).map_err(parse_err)?;
        if let Some(first) = graphs.first() {
            if first.feature_dim() != g.feature_dim() {
                return Err(Error::Schema(format!(
                    "line {line_no}: feature dimension {} differs from {} on earlier records",
                    g.feature_dim(),
                    first.feature_dim()
                )));
            }
        }
        graphs.push(g);
    }
    Ok(graphs)
}

fn graph_to_record(g: &DiGraph) -> GraphRecord {
    GraphRecord {
        n: g.num_nodes,
        edges: g.edges.iter().map(|&(s, d)| [s, d]).collect(),
        x: (0..g.num_nodes).map(|v| g.feature_row(v).to_vec()).collect(),
        y: g.label.clone(),
        id: Some(g.id.clone()),
        node_ids: g.node_names.clone(),
    }
}

pub fn write_graphs<W: Write>(mut w: W, graphs: &[DiGraph]) -> Result<()> {
    for g in graphs {
        serde_json::to_writer(&mut w, &graph_to_record(g))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_graphs(path: impl AsRef<Path>, graphs: &[DiGraph]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_graphs(&mut w, graphs)?;
    w.flush()?;
    Ok(())
}

/// Several graphs laid out as one disjoint union.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    edge_offsets: Vec<usize>,
    feature_dim: usize,
    features: Vec<f64>,
    batch_index: Vec<usize>,
    offsets: Vec<usize>,
    labels: Vec<Option<Label>>,
    ids: Vec<String>,
    node_names: Vec<Option<Vec<String>>>,
}

pub fn batch_graphs(gs: &[DiGraph]) -> Result<GraphBatch> {
    let Some(first) = gs.first() else {
        return Err(Error::InvalidGraph("cannot batch an empty graph list".into()));
    };
    let f = first.feature_dim;
    let mut b = GraphBatch {
        num_nodes: 0,
        edges: Vec::new(),
        edge_offsets: vec![0],
        feature_dim: f,
        features: Vec::new(),
        batch_index: Vec::new(),
        offsets: Vec::with_capacity(gs.len()),
        labels: Vec::with_capacity(gs.len()),
        ids: Vec::with_capacity(gs.len()),
        node_names: Vec::with_capacity(gs.len()),
    };
    for (gi, g) in gs.iter().enumerate() {
        if g.feature_dim != f {
            return Err(Error::Schema(format!(
                "graph {gi} has feature dimension {}, expected {f}",
                g.feature_dim
            )));
        }
        let off = b.num_nodes;
        b.offsets.push(off);
        b.edges.extend(g.edges.iter().map(|&(s, d)| (s + off, d + off)));
        b.edge_offsets.push(b.edges.len());
        b.features.extend_from_slice(&g.features);
        b.batch_index.extend(std::iter::repeat_n(gi, g.num_nodes));
        b.labels.push(g.label.clone());
        b.ids.push(g.id.clone());
        b.node_names.push(g.node_names.clone());
        b.num_nodes += g.num_nodes;
    }
    Ok(b)
}

impl GraphBatch {
    pub fn num_graphs(&self) -> usize {
        self.offsets.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Graph ordinal of every node.
    pub fn batch_index(&self) -> &[usize] {
        &self.batch_index
    }

    /// First node index of every graph.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn graph_nodes(&self, gi: usize) -> std::ops::Range<usize> {
        let end = self.offsets.get(gi + 1).copied().unwrap_or(self.num_nodes);
        self.offsets[gi]..end
    }

    pub fn labels(&self) -> &[Option<Label>] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Splits the batch back into its graphs.
    pub fn unbatch(&self) -> Vec<DiGraph> {
        (0..self.num_graphs())
            .map(|gi| {
                let nodes = self.graph_nodes(gi);
                let off = nodes.start;
                let edges = self.edges[self.edge_offsets[gi]..self.edge_offsets[gi + 1]]
                    .iter()
                    .map(|&(s, d)| (s - off, d - off))
                    .collect();
                let f = self.feature_dim;
                let features = self.features[nodes.start * f..nodes.end * f].to_vec();
                DiGraph::new(nodes.len(), edges, f, features)
                    .expect("batched graphs were valid")
                    .with_label(self.labels[gi].clone())
                    .with_id(self.ids[gi].clone())
                    .with_node_names(self.node_names[gi].clone())
            })
            .collect()
    }
}

/// Dataset summary: sizes, k-hop predecessor counts and cycle statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub num_graphs: usize,
    pub avg_nodes: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub avg_edges: f64,
    pub total_nodes: usize,
    pub hop_bound: HopBound,
    /// Mean number of strict predecessors within the hop bound (self excluded).
    pub avg_pk_per_node: f64,
    pub total_pk: usize,
    pub avg_cycle_nodes: f64,
    pub avg_cycle_count: f64,
    pub avg_cycle_size: f64,
}

/// Per-graph counts behind [`StatsReport`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphCounts {
    pub nodes: usize,
    pub edges: usize,
    pub pk: usize,
    pub cycle_nodes: usize,
    pub cycle_count: usize,
}

pub fn graph_counts(g: &DiGraph, k: HopBound) -> GraphCounts {
    let pairs = algos::k_hop_predecessors(g, k);
    let scc = algos::tarjan_scc(g);
    let mut cycle_nodes = 0;
    let mut cycle_count = 0;
    for members in scc.members() {
        let cyclic = members.len() > 1 || g.has_self_loop(members[0]);
        if cyclic {
            cycle_nodes += members.len();
            cycle_count += 1;
        }
    }
    GraphCounts {
        nodes: g.num_nodes(),
        edges: g.num_edges(),
        pk: pairs.len() - g.num_nodes(),
        cycle_nodes,
        cycle_count,
    }
}

pub fn compute_stats(gs: &[DiGraph], k: HopBound) -> StatsReport {
    let counts: Vec<GraphCounts> = gs.iter().map(|g| graph_counts(g, k)).collect();
    let num_graphs = counts.len();
    let total_nodes: usize = counts.iter().map(|c| c.nodes).sum();
    let total_edges: usize = counts.iter().map(|c| c.edges).sum();
    let total_pk: usize = counts.iter().map(|c| c.pk).sum();
    let cycle_nodes: usize = counts.iter().map(|c| c.cycle_nodes).sum();
    let cycle_count: usize = counts.iter().map(|c| c.cycle_count).sum();
    let per_graph = |x: usize| if num_graphs == 0 { 0.0 } else { x as f64 / num_graphs as f64 };
    StatsReport {
        num_graphs,
        avg_nodes: per_graph(total_nodes),
        min_nodes: counts.iter().map(|c| c.nodes).min().unwrap_or(0),
        max_nodes: counts.iter().map(|c| c.nodes).max().unwrap_or(0),
        avg_edges: per_graph(total_edges),
        total_nodes,
        hop_bound: k,
        avg_pk_per_node: if total_nodes == 0 { 0.0 } else { total_pk as f64 / total_nodes as f64 },
        total_pk,
        avg_cycle_nodes: per_graph(cycle_nodes),
        avg_cycle_count: per_graph(cycle_count),
        avg_cycle_size: if cycle_count == 0 { 0.0 } else { cycle_nodes as f64 / cycle_count as f64 },
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.hop_bound;
        writeln!(f, "Num Graphs                 {}", self.num_graphs)?;
        writeln!(f, "Avg Nodes per Graph        {:.2}", self.avg_nodes)?;
        writeln!(f, "Min Nodes per Graph        {}", self.min_nodes)?;
        writeln!(f, "Max Nodes per Graph        {}", self.max_nodes)?;
        writeln!(f, "Avg Edges per Graph        {:.2}", self.avg_edges)?;
        writeln!(f, "Total Nodes                {}", self.total_nodes)?;
        writeln!(f, "Avg p_{k:<3} per Node         {:.4}", self.avg_pk_per_node)?;
        writeln!(f, "Total p_{k:<3}                {}", self.total_pk)?;
        writeln!(f, "Avg Cycle Nodes per Graph  {:.4}", self.avg_cycle_nodes)?;
        writeln!(f, "Avg Cycle Nums per Graph   {:.4}", self.avg_cycle_count)?;
        write!(f, "Avg Cycle Size             {:.4}", self.avg_cycle_size)
    }
}
