//! Row gathers and segment reductions along axis 0.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor, Var};

fn row_len(shape: &[usize]) -> usize {
    shape[1..].iter().product()
}

fn check_index(op: &'static str, index: &[usize], bound: usize) -> Result<()> {
    if let Some(&bad) = index.iter().find(|&&i| i >= bound) {
        return Err(Error::shape(op, format!("index {bad} out of range for {bound} rows")));
    }
    Ok(())
}

fn check_segments(op: &'static str, x: &Tensor, segment: &[usize], num_segments: usize) -> Result<()> {
    if x.rank() == 0 || x.dim(0) != segment.len() {
        return Err(Error::shape(
            op,
            format!("{} segment ids for a tensor of shape {:?}", segment.len(), x.shape()),
        ));
    }
    check_index(op, segment, num_segments)
}

fn with_rows(shape: &[usize], rows: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s[0] = rows;
    s
}

impl<'t> Var<'t> {
    /// `out[i] = x[index[i]]`.
    pub fn gather_rows(self, index: impl Into<Rc<[usize]>>) -> Result<Var<'t>> {
        let index: Rc<[usize]> = index.into();
        let value = {
            let x = self.tape.value(self.id);
            if x.rank() == 0 {
                return Err(Error::shape("gather_rows", "scalar input".to_string()));
            }
            check_index("gather_rows", &index, x.dim(0))?;
            let r = row_len(x.shape());
            let mut out = Vec::with_capacity(index.len() * r);
            for &i in index.iter() {
                out.extend_from_slice(&x.data()[i * r..][..r]);
            }
            Tensor::new(with_rows(x.shape(), index.len()), out)?
        };
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let x = args.inputs[0];
                let r = row_len(x.shape());
                let mut gx = Tensor::zeros(x.shape().to_vec());
                let d = gx.data_mut();
                for (p, &i) in index.iter().enumerate() {
                    for (acc, &g) in d[i * r..][..r].iter_mut().zip(&args.grad.data()[p * r..][..r]) {
                        *acc += g;
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// `out[s] = sum of x[i] with segment[i] == s`.
    pub fn segment_sum(self, segment: impl Into<Rc<[usize]>>, num_segments: usize) -> Result<Var<'t>> {
        let segment: Rc<[usize]> = segment.into();
        let value = {
            let x = self.tape.value(self.id);
            check_segments("segment_sum", &x, &segment, num_segments)?;
            let r = row_len(x.shape());
            let mut out = vec![0.0; num_segments * r];
            for (p, &s) in segment.iter().enumerate() {
                for (acc, &v) in out[s * r..][..r].iter_mut().zip(&x.data()[p * r..][..r]) {
                    *acc += v;
                }
            }
            Tensor::new(with_rows(x.shape(), num_segments), out)?
        };
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let r = row_len(args.output.shape());
                let g = args.grad.data();
                let mut gx = Vec::with_capacity(segment.len() * r);
                for &s in segment.iter() {
                    gx.extend_from_slice(&g[s * r..][..r]);
                }
                vec![Some(Tensor::new(args.inputs[0].shape().to_vec(), gx).expect("rows"))]
            }),
        ))
    }

    /// Segment average; empty segments give zero rows.
    pub fn segment_mean(self, segment: impl Into<Rc<[usize]>>, num_segments: usize) -> Result<Var<'t>> {
        let segment: Rc<[usize]> = segment.into();
        let mut counts = vec![0usize; num_segments];
        for &s in segment.iter() {
            if s < num_segments {
                counts[s] += 1;
            }
        }
        let sum = self.segment_sum(segment, num_segments)?;
        let inv: Vec<Real> = counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as Real })
            .collect();
        let mut shape = vec![1; sum.shape().len()];
        shape[0] = num_segments;
        let scale = self.tape.constant(Tensor::new(shape, inv)?);
        sum.mul(scale)
    }

    /// Segment maximum; empty segments give zero rows. The gradient goes to
    /// the first maximiser.
    pub fn segment_max(self, segment: impl Into<Rc<[usize]>>, num_segments: usize) -> Result<Var<'t>> {
        let segment: Rc<[usize]> = segment.into();
        let (value, arg) = {
            let x = self.tape.value(self.id);
            check_segments("segment_max", &x, &segment, num_segments)?;
            let r = row_len(x.shape());
            let mut out = vec![Real::NEG_INFINITY; num_segments * r];
            let mut arg = vec![usize::MAX; num_segments * r];
            for (p, &s) in segment.iter().enumerate() {
                for c in 0..r {
                    let v = x.data()[p * r + c];
                    if v > out[s * r + c] || arg[s * r + c] == usize::MAX {
                        out[s * r + c] = v;
                        arg[s * r + c] = p * r + c;
                    }
                }
            }
            for (o, &a) in out.iter_mut().zip(&arg) {
                if a == usize::MAX {
                    *o = 0.0;
                }
            }
            (Tensor::new(with_rows(x.shape(), num_segments), out)?, arg)
        };
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let mut gx = Tensor::zeros(args.inputs[0].shape().to_vec());
                let d = gx.data_mut();
                for (&a, &g) in arg.iter().zip(args.grad.data()) {
                    if a != usize::MAX {
                        d[a] += g;
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Softmax over the rows that share a segment id, independently for every
    /// trailing position.
    pub fn segment_softmax(self, segment: impl Into<Rc<[usize]>>, num_segments: usize) -> Result<Var<'t>> {
        let segment: Rc<[usize]> = segment.into();
        let value = {
            let x = self.tape.value(self.id);
            check_segments("segment_softmax", &x, &segment, num_segments)?;
            let r = row_len(x.shape());
            let d = x.data();
            let mut maxes = vec![Real::NEG_INFINITY; num_segments * r];
            for (p, &s) in segment.iter().enumerate() {
                for c in 0..r {
                    let m = &mut maxes[s * r + c];
                    *m = m.max(d[p * r + c]);
                }
            }
            let mut out: Vec<Real> = Vec::with_capacity(d.len());
            let mut sums = vec![0.0; num_segments * r];
            for (p, &s) in segment.iter().enumerate() {
                for c in 0..r {
                    let e = (d[p * r + c] - maxes[s * r + c]).exp();
                    sums[s * r + c] += e;
                    out.push(e);
                }
            }
            for (p, &s) in segment.iter().enumerate() {
                for c in 0..r {
                    out[p * r + c] /= sums[s * r + c];
                }
            }
            Tensor::new(x.shape().to_vec(), out)?
        };
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let y = args.output.data();
                let g = args.grad.data();
                let r = row_len(args.output.shape());
                let mut dots = vec![0.0; num_segments * r];
                for (p, &s) in segment.iter().enumerate() {
                    for c in 0..r {
                        dots[s * r + c] += g[p * r + c] * y[p * r + c];
                    }
                }
                let mut gx = Vec::with_capacity(y.len());
                for (p, &s) in segment.iter().enumerate() {
                    for c in 0..r {
                        gx.push(y[p * r + c] * (g[p * r + c] - dots[s * r + c]));
                    }
                }
                vec![Some(Tensor::new(args.output.shape().to_vec(), gx).expect("rows"))]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::nn::{Tape, Tensor};

    #[test]
    fn segment_ops() {
        let tape = Tape::new(false);
        let x = tape.leaf(Tensor::from_f64([4, 1], &[1.0, 2.0, 3.0, 5.0]).unwrap());
        let seg = vec![0usize, 0, 2, 2];
        let s = x.segment_sum(seg.clone(), 3).unwrap();
        assert_eq!(s.value().data(), &[3.0, 0.0, 8.0]);
        let m = x.segment_mean(seg.clone(), 3).unwrap();
        assert_eq!(m.value().data(), &[1.5, 0.0, 4.0]);
        let mx = x.segment_max(seg.clone(), 3).unwrap();
        assert_eq!(mx.value().data(), &[2.0, 0.0, 5.0]);
        let sm = x.segment_softmax(seg.clone(), 3).unwrap().value();
        let e = 1.0 / (1.0 + (1.0f64).exp());
        assert!((sm.data()[0] - e).abs() < 1e-15);
        assert!((sm.data()[0] + sm.data()[1] - 1.0).abs() < 1e-15);
        assert!((sm.data()[2] + sm.data()[3] - 1.0).abs() < 1e-15);
        assert!(x.segment_sum(vec![0usize, 1], 2).is_err());
        assert!(x.segment_sum(vec![0usize, 1, 2, 3], 3).is_err());
    }

    #[test]
    fn gather_accumulates_repeated_rows() {
        let tape = Tape::new(false);
        let x = tape.leaf(Tensor::from_f64([2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        let g = x.gather_rows(vec![1usize, 1, 0]).unwrap();
        assert_eq!(g.value().data(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        let grads = tape.gradients(g.sum_all()).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}
