use super::{check_axis, split_at_axis};
use crate::error::Result;
use crate::nn::{Real, Tensor, Var};

fn drop_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

impl<'t> Var<'t> {
    /// Sum of all elements, shape `[1]`.
    pub fn sum_all(self) -> Var<'t> {
        let value = Tensor::scalar(self.tape.value(self.id).sum());
        self.tape.custom(
            value,
            &[self],
            Box::new(|args| {
                let g = args.grad.item();
                vec![Some(Tensor::full(args.inputs[0].shape().to_vec(), g))]
            }),
        )
    }

    pub fn mean_all(self) -> Var<'t> {
        let n = self.tape.value(self.id).numel().max(1);
        self.sum_all().scale(1.0 / n as Real)
    }

    /// Sum over `axis`, which is removed from the shape.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let (value, in_shape) = {
            let x = self.tape.value(self.id);
            check_axis("sum_axis", x.shape(), axis)?;
            let (outer, len, inner) = split_at_axis(x.shape(), axis);
            let mut out = vec![0.0; outer * inner];
            let d = x.data();
            for o in 0..outer {
                for i in 0..len {
                    let src = &d[(o * len + i) * inner..][..inner];
                    for (acc, &v) in out[o * inner..][..inner].iter_mut().zip(src) {
                        *acc += v;
                    }
                }
            }
            let shape = drop_axis(x.shape(), axis);
            (Tensor::new(shape, out)?, x.shape().to_vec())
        };
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let (outer, len, inner) = split_at_axis(&in_shape, axis);
                let g = args.grad.data();
                let mut gx = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    for _ in 0..len {
                        gx.extend_from_slice(&g[o * inner..][..inner]);
                    }
                }
                vec![Some(Tensor::new(in_shape.clone(), gx).expect("shape preserved"))]
            }),
        ))
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>> {
        let len = {
            let x = self.tape.value(self.id);
            check_axis("mean_axis", x.shape(), axis)?;
            x.shape()[axis]
        };
        Ok(self.sum_axis(axis)?.scale(1.0 / len.max(1) as Real))
    }

    /// Maximum over `axis`; the gradient goes to the first maximiser.
    pub fn max_axis(self, axis: usize) -> Result<Var<'t>> {
        let (value, argmax, in_shape) = {
            let x = self.tape.value(self.id);
            check_axis("max_axis", x.shape(), axis)?;
            let (outer, len, inner) = split_at_axis(x.shape(), axis);
            let d = x.data();
            let mut out = vec![Real::NEG_INFINITY; outer * inner];
            let mut arg = vec![0usize; outer * inner];
            for o in 0..outer {
                for i in 0..len {
                    for j in 0..inner {
                        let v = d[(o * len + i) * inner + j];
                        let slot = o * inner + j;
                        if v > out[slot] {
                            out[slot] = v;
                            arg[slot] = (o * len + i) * inner + j;
                        }
                    }
                }
            }
            (Tensor::new(drop_axis(x.shape(), axis), out)?, arg, x.shape().to_vec())
        };
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let mut gx = Tensor::zeros(in_shape.clone());
                let data = gx.data_mut();
                for (&src, &g) in argmax.iter().zip(args.grad.data()) {
                    data[src] += g;
                }
                vec![Some(gx)]
            }),
        ))
    }
}
