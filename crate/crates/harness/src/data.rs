//! Preprocessing of graph sets for a model configuration.

use dgssm_core::algos::PageRankConfig;
use dgssm_core::graph::DiGraph;
use dgssm_core::model::ModelConfig;
use dgssm_core::preprocess::{PreparedBatch, PreparedGraph};
use rayon::prelude::*;

use crate::error::Result;

/// Computes forward (and, for bidirectional models, reverse) artifacts for
/// every graph, in parallel across graphs; the output keeps the input order.
pub fn prepare_graphs(graphs: &[DiGraph], cfg: &ModelConfig, pr: &PageRankConfig) -> Result<Vec<PreparedGraph>> {
    let out: dgssm_core::Result<Vec<PreparedGraph>> = graphs
        .par_iter()
        .map(|g| PreparedGraph::new(g.clone(), cfg.hop_bound, cfg.bidirectional, pr))
        .collect();
    Ok(out?)
}

/// Consecutive batches of at most `size` graphs in the given order.
pub fn batches(items: &[PreparedGraph], order: &[usize], size: usize) -> Result<Vec<PreparedBatch>> {
    order
        .chunks(size.max(1))
        .map(|chunk| {
            let refs: Vec<&PreparedGraph> = chunk.iter().map(|&i| &items[i]).collect();
            Ok(PreparedBatch::new(&refs)?)
        })
        .collect()
}
