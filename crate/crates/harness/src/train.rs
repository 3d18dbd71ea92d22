//! Training and evaluation loops.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::time::Instant;

use dgssm_core::model::{targets, task_loss, Model, Targets};
use dgssm_core::nn::{backward, AdamW, RngStream, Tape, Tensor};
use dgssm_core::preprocess::{PreparedBatch, PreparedGraph};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::batches;
use crate::error::{io_at, HarnessError, Result};
use crate::metrics::{primary_metric, task_metrics, Metrics};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "metrics.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metrics: Metrics,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation metric.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub stopped_early: bool,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub metrics: Metrics,
    /// Model outputs, row-major `[targets, output_dim]`.
    pub outputs: Tensor,
    pub targets: Targets,
}

fn batch_targets(model: &Model, batch: &PreparedBatch) -> Result<Targets> {
    targets(&model.config, &batch.batch).map_err(|e| HarnessError::TaskMismatch(e.to_string()))
}

fn concat_targets(parts: Vec<Targets>) -> Targets {
    match parts.first() {
        Some(Targets::Classes(_)) => Targets::Classes(
            parts
                .into_iter()
                .flat_map(|t| match t {
                    Targets::Classes(c) => c,
                    Targets::Values(_) => unreachable!("one task per model"),
                })
                .collect(),
        ),
        _ => Targets::Values(parts.into_iter().flat_map(|t| t.as_values()).collect()),
    }
}

/// Evaluation-mode loss and metrics over `data`.
pub fn evaluate(model: &Model, data: &[PreparedGraph], batch_size: usize) -> Result<Evaluation> {
    let order: Vec<usize> = (0..data.len()).collect();
    let mut loss_sum = 0.0;
    let mut count = 0usize;
    let mut outputs = Vec::new();
    let mut all_targets = Vec::new();
    let width = model.config.output_dim();
    for batch in batches(data, &order, batch_size)? {
        let t = batch_targets(model, &batch)?;
        let inputs = model.inputs(&batch)?;
        let tape = Tape::new(false);
        let out = model.forward(&tape, &inputs, None)?;
        let loss = task_loss(out, &t)?.value().item() as f64;
        loss_sum += loss * t.len() as f64;
        count += t.len();
        outputs.extend(out.value().to_f64());
        all_targets.push(t);
    }
    let targets = concat_targets(all_targets);
    let outputs = Tensor::from_f64([count, width], &outputs)?;
    let metrics = task_metrics(model.config.task, model.config.num_classes, &outputs, &targets);
    Ok(Evaluation {
        loss: if count == 0 { f64::NAN } else { loss_sum / count as f64 },
        metrics,
        outputs,
        targets,
    })
}

fn improves(candidate: f64, best: f64, higher_is_better: bool) -> bool {
    if candidate.is_nan() {
        return false;
    }
    if best.is_nan() {
        return true;
    }
    if higher_is_better {
        candidate > best
    } else {
        candidate < best
    }
}

/// Trains with AdamW, keeping the parameters of the best validation epoch.
///
/// The training set is reshuffled every epoch and dropout is active; both
/// draw from streams derived from `run.seed`, so reruns are bit-identical.
/// When `val` is empty, selection uses the training loss. With `out_dir`
/// set, the best checkpoint and one JSON line per epoch are written there.
pub fn train(run: &RunConfig, train_set: &[PreparedGraph], val: &[PreparedGraph]) -> Result<TrainOutcome> {
    run.validate()?;
    if train_set.is_empty() {
        return Err(HarnessError::Config("empty training set".into()));
    }
    let mut model = Model::new(run.model.clone(), run.seed)?;
    let mut opt = AdamW::new(run.optim, &model.params);
    let mut shuffle_rng = RngStream::named(run.seed, "shuffle");
    let mut dropout_rng = RngStream::named(run.seed, "dropout");
    let (metric_name, higher_is_better) = if val.is_empty() {
        ("train_loss", false)
    } else {
        primary_metric(run.model.task)
    };

    let mut log_file = match &run.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_at(dir))?;
            let path = dir.join(LOG_FILE);
            Some(BufWriter::new(File::create(&path).map_err(io_at(&path))?))
        }
        None => None,
    };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best = (0usize, f64::NAN, model.clone());
    let mut stale = 0usize;
    let mut stopped_early = false;
    for epoch in 1..=run.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for (bi, batch) in batches(train_set, &order, run.batch_size)?.into_iter().enumerate() {
            let t = batch_targets(&model, &batch)?;
            let inputs = model.inputs(&batch)?;
            let tape = Tape::new(true);
            let out = model.forward(&tape, &inputs, Some(&mut dropout_rng))?;
            let loss = task_loss(out, &t)?;
            let value = loss.value().item() as f64;
            if !value.is_finite() {
                return Err(HarnessError::Diverged {
                    epoch,
                    batch: bi,
                    loss: value,
                });
            }
            model.params.zero_grad();
            backward(loss, &mut model.params)?;
            opt.step(&mut model.params)?;
            loss_sum += value * t.len() as f64;
            count += t.len();
        }
        let train_loss = loss_sum / count as f64;
        let (val_loss, val_metrics) = if val.is_empty() {
            (f64::NAN, Metrics::new())
        } else {
            let e = evaluate(&model, val, run.batch_size)?;
            (e.loss, e.metrics)
        };
        let score = if val.is_empty() {
            train_loss
        } else {
            val_metrics.get(metric_name).copied().unwrap_or(f64::NAN)
        };
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_metrics,
            seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(w) = log_file.as_mut() {
            serde_json::to_writer(&mut *w, &entry)?;
            w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_at(LOG_FILE))?;
        }
        log.push(entry);

        if improves(score, best.1, higher_is_better) {
            best = (epoch, score, model.clone());
            stale = 0;
            if let Some(dir) = &run.out_dir {
                model.save(dir.join(CHECKPOINT_FILE), Some(&opt))?;
            }
        } else {
            stale += 1;
            if run.patience > 0 && stale >= run.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_metric, model) = best;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_metric,
        stopped_early,
    })
}
