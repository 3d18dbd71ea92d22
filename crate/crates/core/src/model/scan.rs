//! The attention-selective SSM scan in message-passing form.
//!
//! For every center `v` and every predecessor `u` within the hop bound
//! (including `v` itself at distance 0), head `c` weights the message
//! `SSM^(spd(u,v)) (f(x_u) W_V)` by
//! `α_c(u, v) = softmax_u(<f(x_v) W_Q, f(x_u) W_K>_c / √d_h)`, the softmax
//! running over the whole predecessor set of `v`. Head `c` of the output is
//! the `c`-th `d_h`-wide slice of the weighted sum.

use std::rc::Rc;

use crate::algos::KHopPairs;
use crate::error::{Error, Result};
use crate::nn::{ParameterSet, Real, Tape, Var};
use crate::ssm::kernel_table_var;

/// `(u, v, spd)` triples as shared index vectors.
#[derive(Clone, Debug)]
pub struct PairIndex {
    pub num_nodes: usize,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    pub spd: Rc<[usize]>,
    pub max_spd: usize,
}

impl PairIndex {
    pub fn new(num_nodes: usize, pairs: &KHopPairs) -> Self {
        Self {
            num_nodes,
            src: pairs.src.as_slice().into(),
            dst: pairs.dst.as_slice().into(),
            spd: pairs.spd.as_slice().into(),
            max_spd: pairs.max_spd(),
        }
    }
}

/// Differentiable kernel table of the SSM under `prefix` with `len` hops.
pub fn ssm_table<'t>(tape: &'t Tape, params: &ParameterSet, prefix: &str, len: usize) -> Result<Var<'t>> {
    let p = |name: &str| tape.param(params, &format!("{prefix}.ssm.{name}"));
    kernel_table_var(tape, p("a_raw")?, p("log_dt")?, p("b")?, p("c")?, len.saturating_sub(1))
}

pub struct ScanOutput<'t> {
    /// `[n, h, d_h]`.
    pub heads: Var<'t>,
    /// `[P, h]`, aligned with the pair index.
    pub attention: Var<'t>,
}

/// Runs the scan with the weights under `prefix` (`wq`, `wk`, `wv`) and a
/// kernel table `[L, d, d]` with `L > max spd`.
pub fn digraph_ssm_scan<'t>(
    tape: &'t Tape,
    params: &ParameterSet,
    prefix: &str,
    fx: Var<'t>,
    pairs: &PairIndex,
    table: Var<'t>,
    heads: usize,
) -> Result<ScanOutput<'t>> {
    let shape = fx.shape();
    let (n, d) = (shape[0], shape[1]);
    if n != pairs.num_nodes || d % heads != 0 {
        return Err(Error::shape(
            "digraph_ssm_scan",
            format!("features {shape:?} for {} nodes and {heads} heads", pairs.num_nodes),
        ));
    }
    let tlen = table.shape()[0];
    if !pairs.src.is_empty() && pairs.max_spd >= tlen {
        return Err(Error::shape(
            "digraph_ssm_scan",
            format!("kernel table has {tlen} hops, pairs reach distance {}", pairs.max_spd),
        ));
    }
    let dh = d / heads;
    let w = |name: &str| tape.param(params, &format!("{prefix}.{name}"));
    let q = fx.matmul(w("wq")?)?;
    let k = fx.matmul(w("wk")?)?;
    let v = fx.matmul(w("wv")?)?;
    let p = pairs.src.len();
    let scores = q
        .gather_rows(pairs.dst.clone())?
        .mul(k.gather_rows(pairs.src.clone())?)?
        .reshape([p, heads, dh])?
        .sum_axis(2)?
        .scale(1.0 / (dh as Real).sqrt());
    let attention = scores.segment_softmax(pairs.dst.clone(), n)?;
    let messages = v.gather_transform(table, pairs.src.clone(), pairs.spd.clone())?;
    let weighted = messages
        .reshape([p, heads, dh])?
        .mul(attention.reshape([p, heads, 1])?)?;
    Ok(ScanOutput {
        heads: weighted.segment_sum(pairs.dst.clone(), n)?,
        attention,
    })
}
