//! Graph algorithms used by preprocessing: strongly connected components,
//! condensation, depth on arbitrary digraphs, PageRank and k-hop predecessor
//! extraction.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DiGraph;

/// Maximum shortest-path distance kept when collecting predecessors.
///
/// Serialised as an integer, or the string `"inf"` when unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "HopBoundRepr", into = "HopBoundRepr")]
pub enum HopBound {
    Finite(usize),
    Unbounded,
}

impl HopBound {
    pub fn allows(self, dist: usize) -> bool {
        match self {
            HopBound::Finite(k) => dist <= k,
            HopBound::Unbounded => true,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum HopBoundRepr {
    Finite(usize),
    Named(String),
}

impl From<HopBound> for HopBoundRepr {
    fn from(k: HopBound) -> Self {
        match k {
            HopBound::Finite(k) => HopBoundRepr::Finite(k),
            HopBound::Unbounded => HopBoundRepr::Named("inf".into()),
        }
    }
}

impl TryFrom<HopBoundRepr> for HopBound {
    type Error = String;

    fn try_from(r: HopBoundRepr) -> std::result::Result<Self, String> {
        match r {
            HopBoundRepr::Finite(k) => Ok(HopBound::Finite(k)),
            HopBoundRepr::Named(s) => s.parse(),
        }
    }
}

impl From<usize> for HopBound {
    fn from(k: usize) -> Self {
        HopBound::Finite(k)
    }
}

impl fmt::Display for HopBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HopBound::Finite(k) => write!(f, "{k}"),
            HopBound::Unbounded => f.pad("inf"),
        }
    }
}

impl FromStr for HopBound {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(HopBound::Unbounded),
            other => other
                .parse()
                .map(HopBound::Finite)
                .map_err(|_| format!("hop bound must be a non-negative integer or `inf`, got `{s}`")),
        }
    }
}

/// Partition of the nodes into strongly connected components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SccPartition {
    component_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl SccPartition {
    pub fn num_components(&self) -> usize {
        self.members.len()
    }

    pub fn component_of(&self) -> &[usize] {
        &self.component_of
    }

    /// Members of every component, each sorted ascending.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }
}

/// Tarjan's algorithm with an explicit stack, O(n + m).
///
/// Components are numbered in the order Tarjan closes them, which is a
/// reverse topological order of the condensation.
pub fn tarjan_scc(g: &DiGraph) -> SccPartition {
    const UNVISITED: usize = usize::MAX;
    let n = g.num_nodes();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut component_of = vec![0usize; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut next_index = 0usize;
    // (node, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let succ = g.out_neighbors(v);
            if *pos < succ.len() {
                let w = succ[*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let id = members.len();
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack holds the component");
                    on_stack[w] = false;
                    component_of[w] = id;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                members.push(comp);
            }
        }
    }
    SccPartition {
        component_of,
        members,
    }
}

/// DAG over supernodes with deduplicated superedges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CondensationDag {
    num_supernodes: usize,
    edges: Vec<(usize, usize)>,
}

impl CondensationDag {
    /// Wraps an arbitrary edge list; acyclicity is checked by [`dag_depth`].
    pub fn from_edges(num_supernodes: usize, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        Self {
            num_supernodes,
            edges,
        }
    }

    pub fn num_supernodes(&self) -> usize {
        self.num_supernodes
    }

    /// Sorted, deduplicated superedges.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Kahn's algorithm; `None` when a cycle is present.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let k = self.num_supernodes;
        let mut indeg = vec![0usize; k];
        let mut succ = vec![Vec::new(); k];
        for &(a, b) in &self.edges {
            indeg[b] += 1;
            succ[a].push(b);
        }
        let mut queue: VecDeque<usize> = (0..k).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(k);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &succ[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        (order.len() == k).then_some(order)
    }
}

pub fn condense(g: &DiGraph, p: &SccPartition) -> CondensationDag {
    let comp = p.component_of();
    let edges = g
        .edges()
        .iter()
        .filter_map(|&(s, d)| (comp[s] != comp[d]).then_some((comp[s], comp[d])))
        .collect();
    CondensationDag::from_edges(p.num_components(), edges)
}

/// Longest distance from any source: 0 for in-degree 0, else one more than the
/// deepest predecessor.
pub fn dag_depth(dag: &CondensationDag) -> Result<Vec<usize>> {
    let order = dag.topological_order().ok_or_else(|| {
        Error::Cycle("depth is only defined on acyclic graphs".into())
    })?;
    let mut preds = vec![Vec::new(); dag.num_supernodes()];
    for &(a, b) in dag.edges() {
        preds[b].push(a);
    }
    let mut depth = vec![0usize; dag.num_supernodes()];
    for v in order {
        depth[v] = preds[v].iter().map(|&u| depth[u] + 1).max().unwrap_or(0);
    }
    Ok(depth)
}

/// Depth for arbitrary digraphs: every node takes the depth of its SCC's
/// supernode in the condensation.
pub fn depth_plus(g: &DiGraph) -> Vec<usize> {
    let scc = tarjan_scc(g);
    let dag = condense(g, &scc);
    let super_depth = dag_depth(&dag).expect("a condensation is acyclic");
    scc.component_of().iter().map(|&c| super_depth[c]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-10,
            max_iters: 100,
        }
    }
}

/// Power iteration for `PR(u) = (1 - a)/N + a * sum_{v -> u} PR(v) / outdeg(v)`.
///
/// Rank held by nodes without successors is spread uniformly over all nodes on
/// every iteration, so the scores always sum to one. Iteration stops once the
/// L1 change drops below `tol` or after `max_iters` sweeps.
pub fn pagerank(g: &DiGraph, cfg: &PageRankConfig) -> Result<Vec<f64>> {
    let a = cfg.damping;
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Config(format!("damping must lie in (0, 1), got {a}")));
    }
    let n = g.num_nodes();
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..cfg.max_iters {
        let dangling: f64 = (0..n).filter(|&v| g.out_degree(v) == 0).map(|v| rank[v]).sum();
        let base = (1.0 - a) / nf + a * dangling / nf;
        for (u, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = g
                .in_neighbors(u)
                .iter()
                .map(|&v| rank[v] / g.out_degree(v) as f64)
                .sum();
            *slot = base + a * inflow;
        }
        let delta: f64 = rank.iter().zip(&next).map(|(x, y)| (x - y).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < cfg.tol {
            break;
        }
    }
    Ok(rank)
}

/// Predecessor/center pairs with their shortest-path distances.
///
/// Pairs are ordered by center ascending, then distance ascending, then
/// predecessor ascending. Every center appears with itself at distance 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KHopPairs {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub spd: Vec<usize>,
}

impl KHopPairs {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn max_spd(&self) -> usize {
        self.spd.iter().copied().max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.len()).map(|i| (self.src[i], self.dst[i], self.spd[i]))
    }
}

/// Breadth-first search over in-edges from every center, up to `k` hops.
pub fn k_hop_predecessors(g: &DiGraph, k: HopBound) -> KHopPairs {
    let n = g.num_nodes();
    let mut out = KHopPairs::default();
    let mut seen = vec![usize::MAX; n];
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    for v in 0..n {
        seen[v] = v;
        frontier.clear();
        frontier.push(v);
        let mut dist = 0;
        while !frontier.is_empty() && k.allows(dist) {
            frontier.sort_unstable();
            for &u in &frontier {
                out.src.push(u);
                out.dst.push(v);
                out.spd.push(dist);
            }
            next.clear();
            for &u in &frontier {
                for &w in g.in_neighbors(u) {
                    if seen[w] != v {
                        seen[w] = v;
                        next.push(w);
                    }
                }
            }
            std::mem::swap(&mut frontier, &mut next);
            dist += 1;
        }
    }
    out
}

/// Hop layers of a center's directed ego graph, farthest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EgoSequence {
    /// `layers[0]` holds the nodes at distance `k`, the last entry is `[v]`.
    pub layers: Vec<Vec<usize>>,
}

impl EgoSequence {
    pub fn hop_bound(&self) -> usize {
        self.layers.len() - 1
    }

    /// Nodes at exactly `dist` hops.
    pub fn at_distance(&self, dist: usize) -> &[usize] {
        &self.layers[self.layers.len() - 1 - dist]
    }
}

/// Builds `(L_k, ..., L_1, L_0)` for center `v`. Empty layers are kept. With an
/// unbounded hop limit the sequence stops at the farthest predecessor.
pub fn dir_ego2token(g: &DiGraph, v: usize, k: HopBound) -> EgoSequence {
    let n = g.num_nodes();
    let mut dist = vec![usize::MAX; n];
    dist[v] = 0;
    let mut queue = VecDeque::from([v]);
    let mut by_hop: Vec<Vec<usize>> = vec![vec![v]];
    while let Some(u) = queue.pop_front() {
        let du = dist[u] + 1;
        if !k.allows(du) {
            continue;
        }
        for &w in g.in_neighbors(u) {
            if dist[w] == usize::MAX {
                dist[w] = du;
                if by_hop.len() <= du {
                    by_hop.push(Vec::new());
                }
                by_hop[du].push(w);
                queue.push_back(w);
            }
        }
    }
    if let HopBound::Finite(k) = k {
        by_hop.resize(k + 1, Vec::new());
    }
    for layer in &mut by_hop {
        layer.sort_unstable();
    }
    by_hop.reverse();
    EgoSequence { layers: by_hop }
}

/// Per-graph derived structure consumed by the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessArtifacts {
    pub hop_bound: HopBound,
    pub depth: Vec<usize>,
    pub pagerank: Vec<f64>,
    pub pairs: KHopPairs,
}

impl PreprocessArtifacts {
    pub fn compute(g: &DiGraph, k: HopBound, pr: &PageRankConfig) -> Result<Self> {
        Ok(Self {
            hop_bound: k,
            depth: depth_plus(g),
            pagerank: pagerank(g, pr)?,
            pairs: k_hop_predecessors(g, k),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.depth.len()
    }

    /// Concatenates per-graph artifacts, shifting node indices by each graph's
    /// offset in the batch.
    pub fn concat(parts: &[&PreprocessArtifacts]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidGraph("no artifacts to concatenate".into()));
        };
        let mut out = PreprocessArtifacts {
            hop_bound: first.hop_bound,
            depth: Vec::new(),
            pagerank: Vec::new(),
            pairs: KHopPairs::default(),
        };
        for p in parts {
            if p.hop_bound != first.hop_bound {
                return Err(Error::InvalidGraph("artifacts use different hop bounds".into()));
            }
            let off = out.depth.len();
            out.depth.extend_from_slice(&p.depth);
            out.pagerank.extend_from_slice(&p.pagerank);
            out.pairs.src.extend(p.pairs.src.iter().map(|&u| u + off));
            out.pairs.dst.extend(p.pairs.dst.iter().map(|&v| v + off));
            out.pairs.spd.extend_from_slice(&p.pairs.spd);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, e: &[(usize, usize)]) -> DiGraph {
        DiGraph::from_edges(n, e).unwrap()
    }

    #[test]
    fn scc_basics() {
        let p = tarjan_scc(&g(1, &[]));
        assert_eq!(p.members(), &[vec![0]]);
        let p = tarjan_scc(&g(3, &[(0, 1), (1, 2), (2, 0)]));
        assert_eq!(p.members(), &[vec![0, 1, 2]]);
    }

    #[test]
    fn condense_cycle_with_tail() {
        let gr = g(4, &[(0, 1), (1, 2), (2, 0), (2, 3)]);
        let p = tarjan_scc(&gr);
        let dag = condense(&gr, &p);
        assert_eq!(dag.num_supernodes(), 2);
        assert_eq!(dag.edges().len(), 1);
        let (a, b) = dag.edges()[0];
        assert_eq!(p.members()[a], vec![0, 1, 2]);
        assert_eq!(p.members()[b], vec![3]);
    }

    #[test]
    fn condense_dag_is_isomorphic() {
        let gr = g(4, &[(0, 1), (0, 2), (2, 3)]);
        let p = tarjan_scc(&gr);
        assert_eq!(p.num_components(), 4);
        let dag = condense(&gr, &p);
        let c = p.component_of();
        let mut mapped: Vec<_> = gr.edges().iter().map(|&(s, d)| (c[s], c[d])).collect();
        mapped.sort_unstable();
        assert_eq!(dag.edges(), mapped.as_slice());
    }

    #[test]
    fn depth_examples() {
        let chain = CondensationDag::from_edges(3, vec![(0, 1), (1, 2)]);
        assert_eq!(dag_depth(&chain).unwrap(), vec![0, 1, 2]);
        let vee = CondensationDag::from_edges(3, vec![(0, 2), (1, 2)]);
        assert_eq!(dag_depth(&vee).unwrap(), vec![0, 0, 1]);
        let cyc = CondensationDag::from_edges(2, vec![(0, 1), (1, 0)]);
        assert!(matches!(dag_depth(&cyc), Err(Error::Cycle(_))));
    }

    #[test]
    fn depth_plus_examples() {
        assert_eq!(depth_plus(&g(4, &[(0, 1), (1, 2), (2, 0), (2, 3)])), vec![0, 0, 0, 1]);
        assert_eq!(depth_plus(&g(3, &[(0, 1), (1, 2), (2, 0)])), vec![0, 0, 0]);
        assert_eq!(depth_plus(&g(3, &[(0, 1), (1, 2)])), vec![0, 1, 2]);
        // self-loop leaves depth alone
        assert_eq!(depth_plus(&g(2, &[(0, 0), (0, 1)])), vec![0, 1]);
    }

    #[test]
    fn pagerank_symmetric_cases() {
        let cfg = PageRankConfig::default();
        let pr = pagerank(&g(2, &[(0, 1), (1, 0)]), &cfg).unwrap();
        assert!((pr[0] - 0.5).abs() < 1e-12 && (pr[1] - 0.5).abs() < 1e-12);
        let pr = pagerank(&g(4, &[]), &cfg).unwrap();
        assert!(pr.iter().all(|&p| (p - 0.25).abs() < 1e-12));
        let bad = PageRankConfig {
            damping: 1.0,
            ..cfg
        };
        assert!(matches!(pagerank(&g(2, &[]), &bad), Err(Error::Config(_))));
    }

    #[test]
    fn k_hop_chain() {
        let pairs = k_hop_predecessors(&g(3, &[(0, 1), (1, 2)]), HopBound::Finite(2));
        let for_c: Vec<_> = pairs.iter().filter(|p| p.1 == 2).collect();
        assert_eq!(for_c, vec![(2, 2, 0), (1, 2, 1), (0, 2, 2)]);
        let zero = k_hop_predecessors(&g(3, &[(0, 1), (1, 2)]), HopBound::Finite(0));
        assert_eq!(zero.len(), 3);
        assert!(zero.iter().all(|(u, v, s)| u == v && s == 0));
    }

    #[test]
    fn ego_sequences() {
        let iso = dir_ego2token(&g(2, &[]), 1, HopBound::Finite(3));
        assert_eq!(iso.layers, vec![vec![], vec![], vec![], vec![1]]);
        let chain = dir_ego2token(&g(3, &[(0, 1), (1, 2)]), 2, HopBound::Finite(2));
        assert_eq!(chain.layers, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(chain.at_distance(1), &[1]);
        let unb = dir_ego2token(&g(3, &[(0, 1), (1, 2)]), 2, HopBound::Unbounded);
        assert_eq!(unb.layers.len(), 3);
    }

    #[test]
    fn hop_bound_parse() {
        assert_eq!("inf".parse::<HopBound>().unwrap(), HopBound::Unbounded);
        assert_eq!("4".parse::<HopBound>().unwrap(), HopBound::Finite(4));
        assert!("-1".parse::<HopBound>().is_err());
        assert_eq!(HopBound::Finite(3).to_string(), "3");
    }
}
