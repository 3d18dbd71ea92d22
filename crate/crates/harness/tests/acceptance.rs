//! Acceptance run: one pass/fail line per criterion, nonzero exit if any fails.
//!
//! Criteria 1 to 6 run the oracle suites (plus per-operator gradient checks),
//! 7 trains full models on the synthetic tasks, 8 times the pipeline across
//! hop bounds, and 9 perturbs one graph of a batch.

use std::process::ExitCode;
use std::time::Instant;

use dgssm_core::algos::{HopBound, PageRankConfig};
use dgssm_core::graph::DiGraph;
use dgssm_core::model::{Model, ModelConfig, Task};
use dgssm_core::nn::gradcheck::{grad_check_inputs, GradCheckReport, DEFAULT_EPS};
use dgssm_core::nn::{RngStream, Tape, Tensor, Var};
use dgssm_core::preprocess::{PreparedBatch, PreparedGraph};
use dgssm_core::ssm::kernel_table_var;
use dgssm_core::Result;
use dgssm_harness::bench::{run_bench, BenchSpec};
use dgssm_harness::config::RunConfig;
use dgssm_harness::data::prepare_graphs;
use dgssm_harness::oracle::{random_digraph, run_suite, SuiteReport};
use dgssm_harness::synth::{gen_synthetic, SyntheticTaskSpec, TaskKind, FEATURES};
use dgssm_harness::train::{evaluate, train};
use rand::Rng;

const SEED: u64 = 0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn suites(names: &[&str]) -> (bool, Vec<SuiteReport>) {
    let reports: Vec<SuiteReport> = names.iter().map(|n| run_suite(n, SEED).expect("known suite")).collect();
    (reports.iter().all(|r| r.passed), reports)
}

fn summarize(reports: &[SuiteReport]) -> String {
    reports
        .iter()
        .map(|r| format!("{} {} cases max err {:.2e} (tol {:.0e})", r.suite, r.cases, r.max_error, r.tolerance))
        .collect::<Vec<_>>()
        .join("; ")
}

fn criterion_1() -> Outcome {
    let (ok, r) = suites(&["scan-equivalence"]);
    let fast = r[0].seconds <= 60.0;
    Outcome {
        passed: ok && fast,
        detail: format!("{} in {:.2}s (limit 60s)", summarize(&r), r[0].seconds),
    }
}

fn criterion_2() -> Outcome {
    let (passed, r) = suites(&["ssm-equivalence"]);
    Outcome {
        passed,
        detail: summarize(&r),
    }
}

fn criterion_3() -> Outcome {
    let (passed, r) = suites(&["scc", "depthplus", "pagerank"]);
    Outcome {
        passed,
        detail: summarize(&r),
    }
}

fn criterion_4() -> Outcome {
    let (passed, r) = suites(&["permutation"]);
    Outcome {
        passed,
        detail: summarize(&r),
    }
}

fn rand_tensor(rng: &mut RngStream, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape.to_vec(), &x).expect("sizes agree")
}

/// Gradient checks of the operators the scan is built from.
fn op_checks() -> Result<GradCheckReport> {
    fn segment_softmax<'t>(_: &'t Tape, x: &[Var<'t>]) -> Result<Var<'t>> {
        let y = x[0].segment_softmax(vec![1, 1, 0, 1, 2, 0], 3)?;
        Ok(y.mul(x[1])?.sum_all())
    }
    fn gather_transform<'t>(_: &'t Tape, x: &[Var<'t>]) -> Result<Var<'t>> {
        let y = x[0].gather_transform(x[1], vec![0, 3, 3, 1, 2], vec![2, 0, 2, 1, 0])?;
        Ok(y.square().sum_all())
    }
    fn attention<'t>(_: &'t Tape, x: &[Var<'t>]) -> Result<Var<'t>> {
        let scores = x[0].matmul(x[1])?.softmax(1)?;
        Ok(scores.matmul(x[2])?.layer_norm(x[3], x[4], 1e-5)?.square().sum_all())
    }
    fn kernel<'t>(tape: &'t Tape, x: &[Var<'t>]) -> Result<Var<'t>> {
        let t = kernel_table_var(tape, x[0], x[1], x[2], x[3], 3)?;
        Ok(t.square().sum_all())
    }
    fn fusion<'t>(_: &'t Tape, x: &[Var<'t>]) -> Result<Var<'t>> {
        let y = x[0].conv2d(x[1], None, (1, 1))?.sigmoid();
        let z = x[2].conv1d(x[3], None, 1)?;
        Ok(y.sum_all().add(z.square().sum_all())?.add(x[4].cross_entropy(&[1, 0, 2])?)?)
    }
    let mut rng = RngStream::named(SEED, "op-checks");
    let mut t = |shapes: &[&[usize]]| shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect::<Vec<_>>();
    let mut worst = GradCheckReport::default();
    let mut fold = |r: GradCheckReport| {
        worst.checked += r.checked;
        if r.max_rel_error >= worst.max_rel_error {
            worst.max_rel_error = r.max_rel_error;
            worst.worst = r.worst;
        }
        worst.max_abs_error = worst.max_abs_error.max(r.max_abs_error);
    };
    fold(grad_check_inputs(segment_softmax, &t(&[&[6, 2], &[6, 2]]), DEFAULT_EPS)?);
    fold(grad_check_inputs(gather_transform, &t(&[&[4, 3], &[3, 2, 3]]), DEFAULT_EPS)?);
    fold(grad_check_inputs(attention, &t(&[&[3, 4], &[4, 5], &[5, 4], &[4], &[4]]), DEFAULT_EPS)?);
    let mut k = t(&[&[3], &[3], &[3, 2], &[2, 3]]);
    // keep the step sizes exp(log_dt) in a realistic range
    k[1] = k[1].map(|x| x - 2.0);
    fold(grad_check_inputs(kernel, &k, DEFAULT_EPS)?);
    fold(grad_check_inputs(fusion, &t(&[&[1, 2, 4, 3], &[1, 2, 3, 3], &[1, 2, 6], &[2, 2, 3], &[3, 3]]), DEFAULT_EPS)?);
    Ok(worst)
}

fn criterion_5() -> Outcome {
    let (ok, r) = suites(&["gradcheck"]);
    let ops = op_checks().expect("operator checks run");
    Outcome {
        passed: ok && ops.passes(1e-4),
        detail: format!(
            "{}; per-op {} coordinates max rel err {:.2e} at {} (tol 1e-4)",
            summarize(&r),
            ops.checked,
            ops.max_rel_error,
            ops.worst
        ),
    }
}

fn criterion_6() -> Outcome {
    let (passed, r) = suites(&["receptive-field"]);
    Outcome {
        passed,
        detail: format!("{}; {}", summarize(&r), r[0].notes.join("; ")),
    }
}

struct Trained {
    metric: f64,
    seconds: f64,
    epochs: usize,
}

fn train_task(spec: &SyntheticTaskSpec, k: usize) -> Trained {
    let run = RunConfig {
        seed: SEED,
        epochs: 200,
        batch_size: 16,
        patience: 20,
        model: ModelConfig {
            in_features: FEATURES,
            hidden: 32,
            heads: 4,
            num_layers: 2,
            bidirectional: true,
            hop_bound: HopBound::Finite(k),
            use_depth_pe: false,
            dt_min: 0.01,
            dt_max: 1.0,
            task: spec.kind.model_task(),
            num_classes: spec.kind.num_classes(),
            ..Default::default()
        },
        optim: dgssm_core::nn::AdamWConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let start = Instant::now();
    let data = gen_synthetic(spec).expect("valid spec");
    let [tr, va, te] = data
        .splits()
        .map(|s| prepare_graphs(s, &run.model, &run.pagerank).expect("preprocessing"));
    let out = train(&run, &tr, &va).expect("training");
    let eval = evaluate(&out.model, &te, run.batch_size).expect("evaluation");
    let metric = if spec.kind.model_task().is_classification() {
        eval.metrics["accuracy"]
    } else {
        eval.metrics["rmse"]
    };
    Trained {
        metric,
        seconds: start.elapsed().as_secs_f64(),
        epochs: out.log.len(),
    }
}

fn criterion_7() -> Outcome {
    let depth = SyntheticTaskSpec {
        kind: TaskKind::DepthRegress,
        num_graphs: 500,
        min_nodes: 8,
        max_nodes: 30,
        cycle_rate: 0.2,
        seed: SEED,
        ..Default::default()
    };
    // reachability needs room for both gate chains
    let reach = SyntheticTaskSpec {
        kind: TaskKind::ReachabilityClassify,
        min_nodes: 12,
        ..depth.clone()
    };
    let d4 = train_task(&depth, 4);
    let d1 = train_task(&depth, 1);
    let r4 = train_task(&reach, 4);
    let r1 = train_task(&reach, 1);
    let gain = 1.0 - d4.metric / d1.metric;
    let passed = d4.metric <= 0.5 && d4.seconds <= 600.0 && gain >= 0.3 && r4.metric >= 0.95 && r1.metric <= 0.75;
    Outcome {
        passed,
        detail: format!(
            "depth RMSE K=4 {:.3} ({} epochs, {:.0}s) vs K=1 {:.3}, {:.0}% lower; \
             reachability accuracy K=4 {:.3} vs K=1 {:.3}",
            d4.metric,
            d4.epochs,
            d4.seconds,
            d1.metric,
            gain * 100.0,
            r4.metric,
            r1.metric
        ),
    }
}

fn criterion_8() -> Outcome {
    let report = run_bench(&BenchSpec::default()).expect("bench runs");
    let ratio = report.forward_superlinearity();
    let (first, last) = (&report.rows[0], &report.rows[report.rows.len() - 1]);
    Outcome {
        passed: ratio <= 1.3,
        detail: format!(
            "worst (t_K/t_1)/(P_K/P_1) = {ratio:.3} (limit 1.3); K=1 {} pairs {:.1}ms, K=9 {} pairs {:.1}ms",
            first.pairs,
            first.seconds.forward * 1e3,
            last.pairs,
            last.seconds.forward * 1e3
        ),
    }
}

fn prepare(gs: &[DiGraph], cfg: &ModelConfig) -> PreparedBatch {
    let items: Vec<PreparedGraph> = gs
        .iter()
        .map(|g| PreparedGraph::new(g.clone(), cfg.hop_bound, cfg.bidirectional, &PageRankConfig::default()).unwrap())
        .collect();
    PreparedBatch::new(&items.iter().collect::<Vec<_>>()).unwrap()
}

fn criterion_9() -> Outcome {
    let mut rng = RngStream::named(SEED, "batch-isolation");
    let mut trials = 0;
    let mut identical = 0;
    for task in [Task::NodeRegress, Task::NodeClassify, Task::GraphRegress, Task::GraphClassify] {
        let cfg = ModelConfig {
            in_features: 3,
            hidden: 16,
            heads: 4,
            task,
            num_classes: 3,
            ..Default::default()
        };
        let model = Model::new(cfg.clone(), rng.random()).unwrap();
        for _ in 0..5 {
            let n1 = rng.random_range(3..15);
            let g1 = random_digraph(&mut rng, n1, 0.25, true, 3);
            let other = |rng: &mut RngStream| {
                let n = rng.random_range(1..15);
                random_digraph(rng, n, 0.3, true, 3)
            };
            let (a, b) = (other(&mut rng), other(&mut rng));
            let rows = if task.is_node_level() { n1 } else { 1 } * cfg.output_dim();
            let head = |gs: &[DiGraph]| model.predict(&prepare(gs, &cfg)).unwrap().to_f64()[..rows].to_vec();
            let alone = head(&[g1.clone()]);
            trials += 1;
            if head(&[g1.clone(), a]) == alone && head(&[g1.clone(), b]) == alone {
                identical += 1;
            }
        }
    }
    Outcome {
        passed: identical == trials,
        detail: format!("{identical}/{trials} batches bit-identical for the unperturbed graph"),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("scan-sequence equivalence", criterion_1),
        ("SSM convolution vs recurrence", criterion_2),
        ("graph algorithm oracles", criterion_3),
        ("permutation equivariance", criterion_4),
        ("gradient correctness", criterion_5),
        ("receptive field", criterion_6),
        ("desk-scale learning", criterion_7),
        ("scaling in pair count", criterion_8),
        ("batch isolation", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        failed += usize::from(!o.passed);
        println!(
            "criterion {} {name}: {} ({:.1}s) {}",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all 9 criteria passed");
        ExitCode::SUCCESS
    }
}
