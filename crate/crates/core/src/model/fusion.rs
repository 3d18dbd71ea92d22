//! Fusion attention over the head-stacked scan output `X: [N, D_h, C]`.
//!
//! Three gates are applied to `X` and the results averaged:
//!
//! 1. max/mean over `C`, a 1-D convolution along the feature axis of each
//!    node (kernel 7), sigmoid: a `[N, D_h]` gate;
//! 2. max/mean over `D_h`, a 1-D convolution along the channel axis
//!    (odd kernel `≤ min(3, C)`), sigmoid: a `[N, C]` gate;
//! 3. PageRank-weighted nodes pooled per graph (max and mean), a 3×3
//!    convolution over `(D_h, C)`, sigmoid: a `[D_h, C]` gate per graph,
//!    broadcast to that graph's nodes.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::model::params::{channel_kernel, FEATURE_KERNEL};
use crate::model::FusionMode;
use crate::nn::{ParameterSet, Tape, Tensor, Var};

/// Per-graph membership of the nodes in a batch.
#[derive(Clone, Debug)]
pub struct GraphIndex {
    pub num_graphs: usize,
    pub batch_index: Rc<[usize]>,
}

/// Stacked max and mean over `axis` as a new axis 1: `[N, 2, rest]`.
fn zpool<'t>(x: Var<'t>, axis: usize) -> Result<Var<'t>> {
    let mx = x.max_axis(axis)?;
    let mean = x.mean_axis(axis)?;
    let s = mx.shape();
    let stacked = [s[0], 1, s[1]];
    Var::concat(&[mx.reshape(stacked)?, mean.reshape(stacked)?], 1)
}

pub fn fusion_attention<'t>(
    tape: &'t Tape,
    params: &ParameterSet,
    prefix: &str,
    x: Var<'t>,
    pagerank: &Tensor,
    graphs: Option<&GraphIndex>,
    mode: FusionMode,
) -> Result<Var<'t>> {
    let shape = x.shape();
    if shape.len() != 3 {
        return Err(Error::shape("fusion_attention", format!("input {shape:?} is not [N, D_h, C]")));
    }
    let (n, dh, c) = (shape[0], shape[1], shape[2]);
    if mode == FusionMode::Off {
        return Ok(x);
    }
    let w = |name: &str| tape.param(params, &format!("{prefix}.fuse.{name}"));

    let gate_nd = zpool(x, 2)?
        .conv1d(w("conv1.w")?, Some(w("conv1.b")?), FEATURE_KERNEL / 2)?
        .sigmoid()
        .reshape([n, dh, 1])?;
    let out1 = x.mul(gate_nd)?;

    let k2 = channel_kernel(c);
    let gate_nc = zpool(x, 1)?
        .conv1d(w("conv2.w")?, Some(w("conv2.b")?), k2 / 2)?
        .sigmoid()
        .reshape([n, 1, c])?;
    let out2 = x.mul(gate_nc)?;

    if mode == FusionMode::Local {
        return Ok(out1.add(out2)?.scale(0.5));
    }

    let graphs = graphs.ok_or_else(|| Error::shape("fusion_attention", "batch index missing".to_string()))?;
    if graphs.batch_index.len() != n || pagerank.shape() != [n, 1] {
        return Err(Error::shape(
            "fusion_attention",
            format!(
                "{} batch entries and pagerank {:?} for {n} nodes",
                graphs.batch_index.len(),
                pagerank.shape()
            ),
        ));
    }
    let g = graphs.num_graphs;
    let wp = tape
        .constant(pagerank.clone())
        .matmul(w("pr.w")?)?
        .add(w("pr.b")?)?
        .segment_softmax(graphs.batch_index.clone(), g)?;
    let weighted = x.mul(wp.reshape([n, 1, 1])?)?;
    let gmax = weighted.segment_max(graphs.batch_index.clone(), g)?;
    let gmean = weighted.segment_mean(graphs.batch_index.clone(), g)?;
    let pooled = Var::concat(&[gmax.reshape([g, 1, dh, c])?, gmean.reshape([g, 1, dh, c])?], 1)?;
    let gate_dc = pooled
        .conv2d(w("conv3.w")?, Some(w("conv3.b")?), (1, 1))?
        .sigmoid()
        .gather_rows(graphs.batch_index.clone())?
        .reshape([n, dh, c])?;
    let out3 = x.mul(gate_dc)?;

    Ok(out1.add(out2)?.add(out3)?.scale(1.0 / 3.0))
}
