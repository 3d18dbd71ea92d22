//! Plain `f64` re-derivation of the scan through explicit ego sequences:
//! per center, per head, the attention-weighted hop signals
//! `z_i = Σ_{u ∈ L_i} α(u, v) W_V f(x_u)` are fed, farthest hop first, through
//! the SSM recurrence and the last output is read off. This shares no code
//! with the message-passing implementation beyond the parameters.

use crate::algos::{dir_ego2token, HopBound};
use crate::error::{Error, Result};
use crate::graph::DiGraph;
use crate::nn::ParameterSet;
use crate::ssm::{ssm_scan_reference, SsmParams};

fn tensor_f64(params: &ParameterSet, name: &str) -> Result<Vec<f64>> {
    params
        .get(name)
        .map(|t| t.to_f64())
        .ok_or_else(|| Error::UnknownParameter(name.to_string()))
}

/// The SSM stored under `prefix` (`{prefix}.ssm.*`).
pub fn ssm_params_of(params: &ParameterSet, prefix: &str) -> Result<SsmParams> {
    let a_raw = tensor_f64(params, &format!("{prefix}.ssm.a_raw"))?;
    let log_dt = tensor_f64(params, &format!("{prefix}.ssm.log_dt"))?;
    let b = tensor_f64(params, &format!("{prefix}.ssm.b"))?;
    let c = tensor_f64(params, &format!("{prefix}.ssm.c"))?;
    let state_dim = a_raw.len();
    let width = b.len() / state_dim.max(1);
    Ok(SsmParams {
        a_raw,
        log_dt,
        b,
        c,
        state_dim,
        width,
    })
}

/// `x · W` for a row vector and a row-major `d_in × d_out` matrix.
fn row_times(x: &[f64], w: &[f64], d_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; d_out];
    for (i, &xi) in x.iter().enumerate() {
        for (o, &wv) in out.iter_mut().zip(&w[i * d_out..(i + 1) * d_out]) {
            *o += xi * wv;
        }
    }
    out
}

/// Scan output `[n][h * d_h]` (head-major) for node features `fx[n][d]`
/// using the weights under `prefix`.
pub fn scan_sequence_form(
    g: &DiGraph,
    fx: &[Vec<f64>],
    params: &ParameterSet,
    prefix: &str,
    heads: usize,
    k: HopBound,
) -> Result<Vec<Vec<f64>>> {
    let n = g.num_nodes();
    let d = fx.first().map_or(0, Vec::len);
    if fx.len() != n || d % heads != 0 {
        return Err(Error::shape("scan_sequence_form", format!("{} rows of width {d}", fx.len())));
    }
    let dh = d / heads;
    let wq = tensor_f64(params, &format!("{prefix}.wq"))?;
    let wk = tensor_f64(params, &format!("{prefix}.wk"))?;
    let wv = tensor_f64(params, &format!("{prefix}.wv"))?;
    let ssm = ssm_params_of(params, prefix)?;
    let q: Vec<Vec<f64>> = fx.iter().map(|x| row_times(x, &wq, d)).collect();
    let kk: Vec<Vec<f64>> = fx.iter().map(|x| row_times(x, &wk, d)).collect();
    let vv: Vec<Vec<f64>> = fx.iter().map(|x| row_times(x, &wv, d)).collect();

    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        let seq = dir_ego2token(g, v, k);
        let members: Vec<usize> = seq.layers.iter().flatten().copied().collect();
        let mut y = vec![0.0; d];
        for c in 0..heads {
            let cols = c * dh..(c + 1) * dh;
            let score = |u: usize| -> f64 {
                cols.clone().map(|j| q[v][j] * kk[u][j]).sum::<f64>() / (dh as f64).sqrt()
            };
            let m = members.iter().map(|&u| score(u)).fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = members.iter().map(|&u| (score(u) - m).exp()).sum();
            let tokens: Vec<Vec<f64>> = seq
                .layers
                .iter()
                .map(|layer| {
                    let mut z = vec![0.0; d];
                    for &u in layer {
                        let a = (score(u) - m).exp() / denom;
                        for (zj, vj) in z.iter_mut().zip(&vv[u]) {
                            *zj += a * vj;
                        }
                    }
                    z
                })
                .collect();
            let ys = ssm_scan_reference(&ssm, &tokens)?;
            let last = ys.last().expect("sequence includes the center");
            y[cols.clone()].copy_from_slice(&last[cols]);
        }
        out.push(y);
    }
    Ok(out)
}
