//! Synthetic datasets: determinism, acyclicity, and labels recomputed from
//! the graph structure by independent breadth-first searches.

use std::collections::VecDeque;
use std::fs;

use dgssm_core::graph::{DiGraph, Label};
use dgssm_harness::synth::{gen_synthetic, sink_of, SyntheticDataset, SyntheticTaskSpec, TaskKind, FEATURES};
use dgssm_harness::HarnessError;
use proptest::prelude::*;

fn spec(kind: TaskKind, seed: u64) -> SyntheticTaskSpec {
    SyntheticTaskSpec {
        kind,
        num_graphs: 60,
        seed,
        ..Default::default()
    }
}

fn all(d: &SyntheticDataset) -> Vec<DiGraph> {
    d.splits().iter().flat_map(|s| s.iter().cloned()).collect()
}

fn is_acyclic(g: &DiGraph) -> bool {
    let n = g.num_nodes();
    let mut indeg: Vec<usize> = (0..n).map(|v| g.in_degree(v)).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(u) = queue.pop_front() {
        seen += 1;
        for &w in g.out_neighbors(u) {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    seen == n
}

/// Hop distances from every node to every other, by BFS.
fn distances(g: &DiGraph) -> Vec<Vec<Option<usize>>> {
    let n = g.num_nodes();
    (0..n)
        .map(|s| {
            let mut d = vec![None; n];
            d[s] = Some(0);
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &w in g.out_neighbors(u) {
                    if d[w].is_none() {
                        d[w] = Some(d[u].unwrap() + 1);
                        queue.push_back(w);
                    }
                }
            }
            d
        })
        .collect()
}

/// Depth of each node as the longest chain of distinct strongly connected
/// components ending at it, using mutual reachability for the components.
fn depth_by_reachability(g: &DiGraph) -> Vec<f64> {
    let n = g.num_nodes();
    let d = distances(g);
    let reach = |u: usize, v: usize| d[u][v].is_some();
    let comp: Vec<usize> = (0..n).map(|v| (0..n).find(|&u| reach(u, v) && reach(v, u)).unwrap()).collect();
    let mut depth = vec![0usize; n];
    // relax n times: longest path in the condensation has fewer than n edges
    for _ in 0..n {
        for &(u, v) in g.edges() {
            if comp[u] != comp[v] {
                depth[v] = depth[v].max(depth[u] + 1);
            }
        }
        for v in 0..n {
            depth[v] = (0..n).filter(|&u| comp[u] == comp[v]).map(|u| depth[u]).max().unwrap();
        }
    }
    depth.into_iter().map(|x| x as f64).collect()
}

#[test]
fn same_seed_gives_byte_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for kind in [TaskKind::DepthRegress, TaskKind::ReachabilityClassify] {
        gen_synthetic(&spec(kind, 5)).unwrap().save(a.path()).unwrap();
        gen_synthetic(&spec(kind, 5)).unwrap().save(b.path()).unwrap();
        for f in ["spec.json", "train.jsonl", "val.jsonl", "test.jsonl"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
    let other = gen_synthetic(&spec(TaskKind::DepthRegress, 6)).unwrap();
    assert_ne!(other.train, gen_synthetic(&spec(TaskKind::DepthRegress, 5)).unwrap().train);
}

#[test]
fn zero_cycle_rate_gives_dags() {
    for kind in [TaskKind::DepthRegress, TaskKind::ReachabilityClassify] {
        let d = gen_synthetic(&SyntheticTaskSpec {
            cycle_rate: 0.0,
            ..spec(kind, 1)
        })
        .unwrap();
        assert!(all(&d).iter().all(is_acyclic));
    }
    let d = gen_synthetic(&SyntheticTaskSpec {
        cycle_rate: 1.0,
        ..spec(TaskKind::DepthRegress, 1)
    })
    .unwrap();
    assert!(all(&d).iter().all(|g| !is_acyclic(g)));
}

#[test]
fn depth_labels_recompute_after_reload() {
    let dir = tempfile::tempdir().unwrap();
    gen_synthetic(&spec(TaskKind::DepthRegress, 2)).unwrap().save(dir.path()).unwrap();
    let d = SyntheticDataset::load(dir.path()).unwrap();
    let gs = all(&d);
    assert_eq!(gs.len(), 60);
    let mut cyclic = 0;
    for g in &gs {
        cyclic += usize::from(!is_acyclic(g));
        assert_eq!(g.label(), Some(&Label::NodeValues(depth_by_reachability(g))), "{}", g.id());
    }
    assert!(cyclic > 0, "cycle rate 0.2 over 60 graphs should produce some cycles");
}

#[test]
fn ancestor_labels_recompute() {
    let d = gen_synthetic(&spec(TaskKind::AncestorCountRegress, 3)).unwrap();
    for g in all(&d) {
        let n = g.num_nodes();
        let dist = distances(&g);
        let total: usize = (0..n).map(|v| (0..n).filter(|&u| u != v && dist[u][v].is_some()).count()).sum();
        let Some(Label::GraphValue(y)) = g.label() else {
            panic!("graph-level label expected");
        };
        assert!((y - total as f64 / n as f64).abs() < 1e-12);
    }
}

#[test]
fn reachability_labels_recompute_and_are_balanced() {
    let s = spec(TaskKind::ReachabilityClassify, 4);
    let d = gen_synthetic(&s).unwrap();
    let (mut pos, mut total) = (0, 0);
    for g in all(&d) {
        assert_eq!(g.feature_dim(), FEATURES);
        let sink = sink_of(&g).expect("one flagged sink");
        let dist = distances(&g);
        let want: Vec<i64> = (0..g.num_nodes())
            .map(|v| i64::from(dist[v][sink].is_some_and(|x| x <= s.k_true)))
            .collect();
        pos += want.iter().sum::<i64>();
        total += want.len();
        assert_eq!(g.label(), Some(&Label::NodeClasses(want)));
    }
    let rate = pos as f64 / total as f64;
    assert!((0.3..0.7).contains(&rate), "positive rate {rate}");
}

#[test]
fn features_describe_degrees() {
    let d = gen_synthetic(&spec(TaskKind::DepthRegress, 8)).unwrap();
    for g in all(&d) {
        for v in 0..g.num_nodes() {
            let row = g.feature_row(v);
            assert_eq!(row, [1.0, g.in_degree(v) as f64 / 4.0, g.out_degree(v) as f64 / 4.0, 0.0]);
        }
    }
}

#[test]
fn infeasible_specs_are_rejected() {
    let base = SyntheticTaskSpec::default();
    let cases = [
        SyntheticTaskSpec {
            edge_density: 6.0,
            ..base.clone()
        },
        SyntheticTaskSpec {
            min_nodes: 20,
            max_nodes: 10,
            ..base.clone()
        },
        SyntheticTaskSpec {
            split: [0.5, 0.2, 0.2],
            ..base.clone()
        },
        SyntheticTaskSpec {
            num_graphs: 0,
            ..base.clone()
        },
        SyntheticTaskSpec {
            cycle_rate: 1.5,
            ..base.clone()
        },
        SyntheticTaskSpec {
            kind: TaskKind::ReachabilityClassify,
            k_true: 5,
            ..base.clone()
        },
    ];
    for c in cases {
        assert!(matches!(gen_synthetic(&c), Err(HarnessError::InfeasibleSpec(_))), "{c:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn splits_partition_the_graphs(
        n in 1usize..80,
        train in 0.0f64..1.0,
        val_share in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let val = (1.0 - train) * val_share;
        let s = SyntheticTaskSpec {
            num_graphs: n,
            max_nodes: 14,
            split: [train, val, (1.0 - train - val).max(0.0)],
            seed,
            ..Default::default()
        };
        let d = gen_synthetic(&s).unwrap();
        let mut ids: Vec<String> = all(&d).iter().map(|g| g.id().to_string()).collect();
        prop_assert_eq!(ids.len(), n);
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
        prop_assert!((d.train.len() as f64 - train * n as f64).abs() <= 1.0);
    }
}
