use super::{check_axis, split_at_axis};
use crate::error::{Error, Result};
use crate::nn::tensor::{numel, strides};
use crate::nn::{Tensor, Var};

/// Source offset of every element of `x` permuted by `axes`.
fn permute_offsets(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let src_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let step: Vec<usize> = axes.iter().map(|&a| src_strides[a]).collect();
    let total = numel(shape);
    let mut offs = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    let mut off = 0usize;
    for _ in 0..total {
        offs.push(off);
        for ax in (0..axes.len()).rev() {
            idx[ax] += 1;
            off += step[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= step[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    offs
}

impl<'t> Var<'t> {
    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let shape = shape.into();
        let (value, in_shape) = {
            let x = self.tape.value(self.id);
            if numel(&shape) != x.numel() {
                return Err(Error::shape(
                    "reshape",
                    format!("cannot reshape {:?} into {:?}", x.shape(), shape),
                ));
            }
            (Tensor::new(shape, x.data().to_vec())?, x.shape().to_vec())
        };
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                vec![Some(
                    Tensor::new(in_shape.clone(), args.grad.data().to_vec()).expect("same size"),
                )]
            }),
        ))
    }

    /// Axis permutation: output axis `i` is input axis `axes[i]`.
    pub fn permute(self, axes: &[usize]) -> Result<Var<'t>> {
        let (value, offs) = {
            let x = self.tape.value(self.id);
            let mut seen = vec![false; x.rank()];
            if axes.len() != x.rank() || axes.iter().any(|&a| a >= x.rank() || std::mem::replace(&mut seen[a], true)) {
                return Err(Error::shape(
                    "permute",
                    format!("{axes:?} is not a permutation of the axes of {:?}", x.shape()),
                ));
            }
            let offs = permute_offsets(x.shape(), axes);
            let out_shape: Vec<usize> = axes.iter().map(|&a| x.shape()[a]).collect();
            let data = offs.iter().map(|&o| x.data()[o]).collect();
            (Tensor::new(out_shape, data)?, offs)
        };
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let mut gx = Tensor::zeros(args.inputs[0].shape().to_vec());
                let d = gx.data_mut();
                for (&o, &g) in offs.iter().zip(args.grad.data()) {
                    d[o] = g;
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Transpose of a matrix.
    pub fn t(self) -> Result<Var<'t>> {
        self.permute(&[1, 0])
    }

    /// Concatenation along `axis`; all other axes must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs".to_string()))?;
        let tape = first.tape;
        let (value, lens) = {
            let vals: Vec<_> = parts.iter().map(|p| tape.value(p.id)).collect();
            let base = vals[0].shape().to_vec();
            check_axis("concat", &base, axis)?;
            for v in &vals[1..] {
                let s = v.shape();
                let ok = s.len() == base.len()
                    && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
                if !ok {
                    return Err(Error::shape(
                        "concat",
                        format!("cannot concatenate {:?} with {:?} along axis {axis}", base, s),
                    ));
                }
            }
            let lens: Vec<usize> = vals.iter().map(|v| v.shape()[axis]).collect();
            let total: usize = lens.iter().sum();
            let (outer, _, inner) = split_at_axis(&base, axis);
            let mut out = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for (v, &len) in vals.iter().zip(&lens) {
                    out.extend_from_slice(&v.data()[o * len * inner..][..len * inner]);
                }
            }
            let mut shape = base;
            shape[axis] = total;
            (Tensor::new(shape, out)?, lens)
        };
        Ok(tape.custom(
            value,
            parts,
            Box::new(move |args| {
                let shape = args.output.shape();
                let (outer, total, inner) = split_at_axis(shape, axis);
                let g = args.grad.data();
                let mut grads: Vec<Vec<_>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
                for o in 0..outer {
                    let mut start = o * total * inner;
                    for (gi, &len) in grads.iter_mut().zip(&lens) {
                        gi.extend_from_slice(&g[start..start + len * inner]);
                        start += len * inner;
                    }
                }
                grads
                    .into_iter()
                    .zip(args.inputs)
                    .zip(args.needs)
                    .map(|((gi, x), &need)| need.then(|| Tensor::new(x.shape().to_vec(), gi).expect("split")))
                    .collect()
            }),
        ))
    }
}
