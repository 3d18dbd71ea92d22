#![allow(dead_code)]

use dgssm_core::graph::DiGraph;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi style digraph with optional self-loops and `f` random
/// features per node.
pub fn random_digraph(rng: &mut impl Rng, n: usize, p: f64, self_loops: bool, f: usize) -> DiGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if (u != v || self_loops) && rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let x: Vec<f64> = (0..n * f).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    DiGraph::new(n, edges, f, x).unwrap()
}

/// Random DAG: edges only from lower to higher index.
pub fn random_dag(rng: &mut impl Rng, n: usize, p: f64) -> DiGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    DiGraph::from_edges(n, &edges).unwrap()
}

/// All-pairs shortest path lengths by Floyd–Warshall; `dist[u][v]` is the
/// length of the shortest walk `u -> v`, `usize::MAX` if none.
pub fn floyd_warshall(g: &DiGraph) -> Vec<Vec<usize>> {
    let n = g.num_nodes();
    let inf = usize::MAX;
    let mut d = vec![vec![inf; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0;
    }
    for &(u, v) in g.edges() {
        if u != v {
            d[u][v] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == inf {
                continue;
            }
            for j in 0..n {
                if d[k][j] != inf && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
