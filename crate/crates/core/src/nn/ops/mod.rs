//! Differentiable operators on [`Var`](crate::nn::Var).
//!
//! Broadcasting is limited to same-rank shapes where each axis either matches
//! or is 1 on one side (`[n, d] * [n, 1]`, `[n, d] + [1, d]`,
//! `[n, h, dh] * [n, h, 1]`, ...). Graph sparsity is expressed through index
//! vectors: gathers, segment reductions and segment softmax.

mod conv;
mod elementwise;
mod index;
mod linalg;
mod loss;
mod norm;
mod reduce;
mod shape;

use crate::error::{Error, Result};

pub(crate) fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::shape(op, format!("axis {axis} out of range for shape {shape:?}")));
    }
    Ok(())
}

/// `(outer, len, inner)` sizes around `axis`.
pub(crate) fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
