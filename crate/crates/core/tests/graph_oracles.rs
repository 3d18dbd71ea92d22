//! Graph algorithms checked against independent brute-force oracles.

mod common;

use common::{floyd_warshall, max_abs_diff, random_dag, random_digraph, rng};
use dgssm_core::algos::{
    condense, depth_plus, dir_ego2token, k_hop_predecessors, pagerank, tarjan_scc, HopBound, PageRankConfig,
};
use dgssm_core::graph::{batch_graphs, compute_stats, load_graphs, reverse_graph, save_graphs, DiGraph};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

const INF: usize = usize::MAX;

/// Random graphs with up to 25 nodes and a spread of densities.
fn corpus(seed: u64, count: usize) -> Vec<DiGraph> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let n = r.random_range(1..=25);
            let p = r.random_range(0.02..0.35);
            let loops = r.random_bool(0.5);
            random_digraph(&mut r, n, p, loops, 1)
        })
        .collect()
}

/// Longest path from any source by the recurrence over a known topological order.
fn dag_depth_recurrence(g: &DiGraph) -> Vec<usize> {
    // random_dag only emits edges from lower to higher index
    let n = g.num_nodes();
    let mut depth = vec![0usize; n];
    for v in 0..n {
        for &(s, d) in g.edges() {
            if d == v {
                depth[v] = depth[v].max(depth[s] + 1);
            }
        }
    }
    depth
}

/// Solves `(I - a M) x = (1 - a)/N · 1` by Gaussian elimination with partial
/// pivoting, where `M` is column-stochastic with dangling columns uniform.
fn pagerank_dense(g: &DiGraph, a: f64) -> Vec<f64> {
    let n = g.num_nodes();
    let nf = n as f64;
    let mut m = vec![vec![0.0; n + 1]; n];
    for (u, row) in m.iter_mut().enumerate() {
        row[u] = 1.0;
        row[n] = (1.0 - a) / nf;
    }
    for v in 0..n {
        let out = g.out_neighbors(v);
        if out.is_empty() {
            for row in m.iter_mut() {
                row[v] -= a / nf;
            }
        } else {
            for &u in out {
                m[u][v] -= a / out.len() as f64;
            }
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for i in 0..n {
            if i != col {
                let f = m[i][col] / m[col][col];
                for j in col..=n {
                    m[i][j] -= f * m[col][j];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

fn random_perm(r: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(r);
    p
}

#[test]
fn tarjan_matches_mutual_reachability() {
    for g in corpus(1, 150) {
        let dist = floyd_warshall(&g);
        let scc = tarjan_scc(&g);
        let comp = scc.component_of();
        let n = g.num_nodes();
        for u in 0..n {
            for v in 0..n {
                let mutual = dist[u][v] != INF && dist[v][u] != INF;
                assert_eq!(comp[u] == comp[v], mutual, "nodes {u} {v}");
            }
        }
        // members and component_of agree
        for (c, members) in scc.members().iter().enumerate() {
            assert!(members.windows(2).all(|w| w[0] < w[1]));
            assert!(members.iter().all(|&v| comp[v] == c));
        }
        // closing order is reverse topological: edges go from later to earlier components
        for &(s, d) in g.edges() {
            assert!(comp[s] >= comp[d]);
        }
    }
}

#[test]
fn condensation_is_acyclic_and_complete() {
    for g in corpus(2, 120) {
        let scc = tarjan_scc(&g);
        let dag = condense(&g, &scc);
        assert_eq!(dag.num_supernodes(), scc.num_components());
        assert!(dag.topological_order().is_some());
        let comp = scc.component_of();
        let mut want: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .map(|&(s, d)| (comp[s], comp[d]))
            .filter(|(a, b)| a != b)
            .collect();
        want.sort_unstable();
        want.dedup();
        let mut got = dag.edges().to_vec();
        got.sort_unstable();
        assert_eq!(got, want);
    }
}

#[test]
fn depth_plus_on_dags_matches_recurrence() {
    let mut r = rng(3);
    for _ in 0..150 {
        let n = r.random_range(1..=25);
        let p = r.random_range(0.02..0.4);
        let g = random_dag(&mut r, n, p);
        assert_eq!(depth_plus(&g), dag_depth_recurrence(&g));
    }
}

#[test]
fn depth_plus_on_cyclic_graphs() {
    // a 3-cycle feeding a tail
    let g = DiGraph::from_edges(4, &[(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap();
    assert_eq!(depth_plus(&g), vec![0, 0, 0, 1]);
    // one big cycle
    let ring: Vec<(usize, usize)> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
    assert_eq!(depth_plus(&DiGraph::from_edges(6, &ring).unwrap()), vec![0; 6]);
    // self-loops leave depth unchanged
    let chain = DiGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let looped = DiGraph::from_edges(3, &[(0, 1), (1, 2), (0, 0), (2, 2)]).unwrap();
    assert_eq!(depth_plus(&chain), depth_plus(&looped));
}

#[test]
fn depth_plus_is_supernode_longest_path() {
    // brute force: depth of a node is the longest chain of distinct SCCs ending at it
    for g in corpus(4, 100) {
        let scc = tarjan_scc(&g);
        let comp = scc.component_of();
        let c = scc.num_components();
        let dag = condense(&g, &scc);
        let mut best = vec![0usize; c];
        // relax c times; longest path in a DAG has at most c - 1 edges
        for _ in 0..c {
            for &(a, b) in dag.edges() {
                best[b] = best[b].max(best[a] + 1);
            }
        }
        let want: Vec<usize> = (0..g.num_nodes()).map(|v| best[comp[v]]).collect();
        assert_eq!(depth_plus(&g), want);
    }
}

#[test]
fn pagerank_matches_dense_solve() {
    // 0.85^100 is about 9e-8, so the default sweep cap cannot reach 1e-8 on
    // slowly mixing graphs; the oracle comparison lets iteration converge.
    let cfg = PageRankConfig {
        max_iters: 1000,
        ..PageRankConfig::default()
    };
    for g in corpus(5, 150) {
        let pr = pagerank(&g, &cfg).unwrap();
        let dense = pagerank_dense(&g, cfg.damping);
        assert!(max_abs_diff(&pr, &dense) <= 1e-8, "{:e}", max_abs_diff(&pr, &dense));
        let capped = pagerank(&g, &PageRankConfig::default()).unwrap();
        assert!(max_abs_diff(&capped, &dense) <= 2.0 * 0.85f64.powi(100));
        assert!((pr.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        let floor = (1.0 - cfg.damping) / g.num_nodes() as f64;
        assert!(pr.iter().all(|&x| x >= floor - 1e-12));
    }
}

#[test]
fn pagerank_rejects_bad_damping() {
    let g = DiGraph::from_edges(2, &[(0, 1)]).unwrap();
    for a in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
        let cfg = PageRankConfig {
            damping: a,
            ..PageRankConfig::default()
        };
        assert!(pagerank(&g, &cfg).is_err());
    }
}

#[test]
fn k_hop_pairs_match_floyd_warshall() {
    for (i, g) in corpus(6, 120).into_iter().enumerate() {
        let dist = floyd_warshall(&g);
        let k = [HopBound::Finite(0), HopBound::Finite(1), HopBound::Finite(3), HopBound::Unbounded][i % 4];
        let pairs = k_hop_predecessors(&g, k);
        let n = g.num_nodes();
        let mut want = Vec::new();
        for v in 0..n {
            let mut at_v: Vec<(usize, usize)> = (0..n)
                .filter(|&u| dist[u][v] != INF && k.allows(dist[u][v]))
                .map(|u| (dist[u][v], u))
                .collect();
            at_v.sort_unstable();
            want.extend(at_v.into_iter().map(|(d, u)| (u, v, d)));
        }
        let got: Vec<_> = pairs.iter().collect();
        assert_eq!(got, want);
    }
}

#[test]
fn ego_layers_match_floyd_warshall() {
    for (i, g) in corpus(7, 100).into_iter().enumerate() {
        let dist = floyd_warshall(&g);
        let n = g.num_nodes();
        let k = if i % 3 == 0 { HopBound::Unbounded } else { HopBound::Finite(i % 5) };
        for v in 0..n {
            let seq = dir_ego2token(&g, v, k);
            let reach_max = (0..n).filter(|&u| dist[u][v] != INF).map(|u| dist[u][v]).max().unwrap();
            let expected_len = match k {
                HopBound::Finite(k) => k + 1,
                HopBound::Unbounded => reach_max + 1,
            };
            assert_eq!(seq.layers.len(), expected_len);
            assert_eq!(seq.at_distance(0), &[v]);
            for hop in 0..seq.layers.len() {
                let want: Vec<usize> = (0..n).filter(|&u| dist[u][v] == hop).collect();
                assert_eq!(seq.at_distance(hop), want.as_slice(), "center {v} hop {hop}");
            }
        }
    }
}

#[test]
fn stats_count_strict_predecessors() {
    let gs = corpus(8, 30);
    let k = HopBound::Finite(2);
    let mut pk = 0;
    let mut nodes = 0;
    for g in &gs {
        let dist = floyd_warshall(g);
        let n = g.num_nodes();
        nodes += n;
        pk += (0..n)
            .flat_map(|v| (0..n).map(move |u| (u, v)))
            .filter(|&(u, v)| u != v && dist[u][v] <= 2)
            .count();
    }
    let report = compute_stats(&gs, k);
    assert_eq!(report.total_pk, pk);
    assert_eq!(report.total_nodes, nodes);
    assert!((report.avg_pk_per_node - pk as f64 / nodes as f64).abs() < 1e-12);
}

#[test]
fn jsonl_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.jsonl");
    let gs = corpus(9, 10);
    save_graphs(&path, &gs).unwrap();
    let back = load_graphs(&path).unwrap();
    assert_eq!(back.len(), gs.len());
    for (a, b) in gs.iter().zip(&back) {
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.features(), b.features());
    }

    let bad = [
        r#"{"n":2,"edges":[[0,2]],"x":[[1],[1]]}"#,
        r#"{"n":2,"edges":[[0,1],[0,1]],"x":[[1],[1]]}"#,
        r#"{"n":2,"edges":[],"x":[[1]]}"#,
        r#"{"n":2,"edges":[],"x":[[1],[1,2]]}"#,
        r#"{"n":2,"edges":[]"#,
    ];
    for line in bad {
        std::fs::write(&path, format!("{}\n{line}\n", r#"{"n":1,"edges":[],"x":[[0]]}"#)).unwrap();
        let err = load_graphs(&path).unwrap_err().to_string();
        assert!(err.contains(":2"), "{err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reverse_is_an_involution(seed in any::<u64>(), n in 1usize..15) {
        let g = random_digraph(&mut rng(seed), n, 0.25, true, 2);
        let rr = reverse_graph(&reverse_graph(&g));
        let mut a = g.edges().to_vec();
        let mut b = rr.edges().to_vec();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        prop_assert_eq!(g.features(), rr.features());
    }

    #[test]
    fn algorithms_commute_with_relabeling(seed in any::<u64>(), n in 1usize..15) {
        let mut r = rng(seed);
        let g = random_digraph(&mut r, n, 0.2, true, 1);
        let perm = random_perm(&mut r, n);
        let h = g.permute_nodes(&perm).unwrap();

        let dg = depth_plus(&g);
        let dh = depth_plus(&h);
        for v in 0..n {
            prop_assert_eq!(dg[v], dh[perm[v]]);
        }

        let cfg = PageRankConfig::default();
        let pg = pagerank(&g, &cfg).unwrap();
        let ph = pagerank(&h, &cfg).unwrap();
        for v in 0..n {
            prop_assert!((pg[v] - ph[perm[v]]).abs() < 1e-10);
        }

        let cg = tarjan_scc(&g);
        let ch = tarjan_scc(&h);
        for u in 0..n {
            for v in 0..n {
                prop_assert_eq!(
                    cg.component_of()[u] == cg.component_of()[v],
                    ch.component_of()[perm[u]] == ch.component_of()[perm[v]]
                );
            }
        }

        let k = HopBound::Finite(2);
        let mut pairs_g: Vec<_> = k_hop_predecessors(&g, k).iter().map(|(u, v, d)| (perm[u], perm[v], d)).collect();
        let mut pairs_h: Vec<_> = k_hop_predecessors(&h, k).iter().collect();
        pairs_g.sort_unstable();
        pairs_h.sort_unstable();
        prop_assert_eq!(pairs_g, pairs_h);
    }

    #[test]
    fn batching_round_trips(seed in any::<u64>(), count in 1usize..6) {
        let gs = corpus(seed, count);
        let batch = batch_graphs(&gs).unwrap();
        prop_assert_eq!(batch.num_nodes(), gs.iter().map(DiGraph::num_nodes).sum::<usize>());
        for (i, g) in gs.iter().enumerate() {
            let range = batch.graph_nodes(i);
            prop_assert_eq!(range.len(), g.num_nodes());
            prop_assert!(batch.batch_index()[range].iter().all(|&b| b == i));
        }
        let back = batch.unbatch();
        for (a, b) in gs.iter().zip(&back) {
            prop_assert_eq!(a.edges(), b.edges());
            prop_assert_eq!(a.features(), b.features());
        }
    }
}
