//! Evaluation metrics computed from their definitions.

use std::collections::BTreeMap;

use dgssm_core::model::{Targets, Task};
use dgssm_core::nn::Tensor;

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return f64::NAN;
    }
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64
}

/// F1 of one class; 0 when the class is neither predicted nor present.
pub fn f1_for_class(pred: &[usize], truth: &[usize], class: usize) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == class, t == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(pred: &[usize], truth: &[usize], num_classes: usize) -> f64 {
    (0..num_classes).map(|c| f1_for_class(pred, truth, c)).sum::<f64>() / num_classes as f64
}

pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    mse(pred, truth).sqrt()
}

pub fn mae(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64
}

/// Pearson correlation; NaN when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Area under the ROC curve via the rank-sum statistic, with tied scores
/// sharing their average rank. NaN when only one class is present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    (rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64
}

/// Average precision: `Σ (R_t - R_{t-1}) P_t` over distinct score thresholds
/// taken from high to low. NaN when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        tp += idx[i..=j].iter().filter(|&&k| labels[k]).count();
        seen += j - i + 1;
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * tp as f64 / seen as f64;
        prev_recall = recall;
        i = j + 1;
    }
    ap
}

/// Row-wise argmax of a `[n, c]` logit tensor.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let c = logits.dim(1);
    logits
        .to_f64()
        .chunks(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
                .0
        })
        .collect()
}

/// Softmax probability of class 1 for each row of `[n, 2]` logits.
pub fn positive_probability(logits: &Tensor) -> Vec<f64> {
    logits
        .to_f64()
        .chunks(2)
        .map(|r| 1.0 / (1.0 + (r[0] - r[1]).exp()))
        .collect()
}

/// Metric name to value.
pub type Metrics = BTreeMap<String, f64>;

/// The metric family of `task`: accuracy and macro F1 for classification
/// (plus ROC-AUC and AP when binary), MSE, RMSE, MAE and Pearson's r for
/// regression.
pub fn task_metrics(task: Task, num_classes: usize, outputs: &Tensor, targets: &Targets) -> Metrics {
    let mut m = Metrics::new();
    match targets {
        Targets::Classes(truth) => {
            let pred = argmax_rows(outputs);
            m.insert("accuracy".into(), accuracy(&pred, truth));
            m.insert("macro_f1".into(), macro_f1(&pred, truth, num_classes));
            if num_classes == 2 {
                let scores = positive_probability(outputs);
                let labels: Vec<bool> = truth.iter().map(|&t| t == 1).collect();
                m.insert("f1".into(), f1_for_class(&pred, truth, 1));
                m.insert("roc_auc".into(), roc_auc(&scores, &labels));
                m.insert("ap".into(), average_precision(&scores, &labels));
            }
        }
        Targets::Values(truth) => {
            let pred = outputs.to_f64();
            m.insert("mse".into(), mse(&pred, truth));
            m.insert("rmse".into(), rmse(&pred, truth));
            m.insert("mae".into(), mae(&pred, truth));
            m.insert("pearson".into(), pearson(&pred, truth));
        }
    }
    debug_assert_eq!(task.is_classification(), matches!(targets, Targets::Classes(_)));
    m
}

/// The metric early stopping and model selection follow, and whether larger is better.
pub fn primary_metric(task: Task) -> (&'static str, bool) {
    if task.is_classification() {
        ("accuracy", true)
    } else {
        ("rmse", false)
    }
}
