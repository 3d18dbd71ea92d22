use rand::Rng;

use super::{check_axis, split_at_axis};
use crate::error::{Error, Result};
use crate::nn::{Real, RngStream, Tensor, Var};

impl<'t> Var<'t> {
    /// Softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let value = {
            let x = self.tape.value(self.id);
            check_axis("softmax", x.shape(), axis)?;
            let (outer, len, inner) = split_at_axis(x.shape(), axis);
            let d = x.data();
            let mut out = vec![0.0; d.len()];
            for o in 0..outer {
                for j in 0..inner {
                    let at = |i: usize| (o * len + i) * inner + j;
                    let m = (0..len).map(|i| d[at(i)]).fold(Real::NEG_INFINITY, Real::max);
                    let mut s = 0.0;
                    for i in 0..len {
                        let e = (d[at(i)] - m).exp();
                        out[at(i)] = e;
                        s += e;
                    }
                    for i in 0..len {
                        out[at(i)] /= s;
                    }
                }
            }
            Tensor::new(x.shape().to_vec(), out)?
        };
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let (outer, len, inner) = split_at_axis(args.output.shape(), axis);
                let (y, g) = (args.output.data(), args.grad.data());
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |i: usize| (o * len + i) * inner + j;
                        let dot: Real = (0..len).map(|i| g[at(i)] * y[at(i)]).sum();
                        for i in 0..len {
                            gx[at(i)] = y[at(i)] * (g[at(i)] - dot);
                        }
                    }
                }
                vec![Some(Tensor::new(args.output.shape().to_vec(), gx).expect("shape"))]
            }),
        ))
    }

    /// Normalises over the last axis, then applies `gamma * x + beta`.
    pub fn layer_norm(self, gamma: Var<'t>, beta: Var<'t>, eps: Real) -> Result<Var<'t>> {
        let value = {
            let x = self.tape.value(self.id);
            let d = *x.shape().last().ok_or_else(|| Error::shape("layer_norm", "scalar input".to_string()))?;
            let (gm, bt) = (self.tape.value(gamma.id), self.tape.value(beta.id));
            if gm.shape() != [d] || bt.shape() != [d] {
                return Err(Error::shape(
                    "layer_norm",
                    format!("gamma {:?} / beta {:?} for input {:?}", gm.shape(), bt.shape(), x.shape()),
                ));
            }
            let mut out = Vec::with_capacity(x.numel());
            for row in x.data().chunks(d.max(1)) {
                let (xhat, _) = normalize(row, eps);
                out.extend(xhat.iter().zip(gm.data().iter().zip(bt.data())).map(|(&h, (&g, &b))| g * h + b));
            }
            Tensor::new(x.shape().to_vec(), out)?
        };
        Ok(self.tape.custom(
            value,
            &[self, gamma, beta],
            Box::new(move |args| {
                let (x, gm) = (args.inputs[0], args.inputs[1].data());
                let d = gm.len();
                let g = args.grad.data();
                let mut gx = Vec::with_capacity(x.numel());
                let mut ggamma = vec![0.0; d];
                let mut gbeta = vec![0.0; d];
                for (row, grow) in x.data().chunks(d.max(1)).zip(g.chunks(d.max(1))) {
                    let (xhat, rstd) = normalize(row, eps);
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for i in 0..d {
                        ggamma[i] += grow[i] * xhat[i];
                        gbeta[i] += grow[i];
                        let dh = grow[i] * gm[i];
                        mean_dh += dh;
                        mean_dh_h += dh * xhat[i];
                    }
                    mean_dh /= d as Real;
                    mean_dh_h /= d as Real;
                    gx.extend((0..d).map(|i| rstd * (grow[i] * gm[i] - mean_dh - xhat[i] * mean_dh_h)));
                }
                vec![
                    args.needs[0].then(|| Tensor::new(x.shape().to_vec(), gx).expect("shape")),
                    args.needs[1].then(|| Tensor::new([d], ggamma).expect("shape")),
                    args.needs[2].then(|| Tensor::new([d], gbeta).expect("shape")),
                ]
            }),
        ))
    }

    /// Inverted dropout: in training each element is zeroed with probability
    /// `p` and survivors are scaled by `1 / (1 - p)`. Outside training, or
    /// with `p == 0`, the input is returned unchanged.
    pub fn dropout(self, p: Real, rng: &mut RngStream) -> Result<Var<'t>> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1]")));
        }
        if !self.tape.is_training() || p == 0.0 {
            return Ok(self);
        }
        let (value, mask) = {
            let x = self.tape.value(self.id);
            let keep = 1.0 - p;
            let mask: Vec<Real> = (0..x.numel())
                .map(|_| {
                    if p < 1.0 && rng.random::<f64>() >= p as f64 {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect();
            let out = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
            (Tensor::new(x.shape().to_vec(), out)?, mask)
        };
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let g = args.grad.data().iter().zip(&mask).map(|(&g, &m)| g * m).collect();
                vec![Some(Tensor::new(args.grad.shape().to_vec(), g).expect("shape"))]
            }),
        ))
    }
}

fn normalize(row: &[Real], eps: Real) -> (Vec<Real>, Real) {
    let d = row.len() as Real;
    let mean = row.iter().sum::<Real>() / d;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<Real>() / d;
    let rstd = 1.0 / (var + eps).sqrt();
    (row.iter().map(|&v| (v - mean) * rstd).collect(), rstd)
}

#[cfg(test)]
mod tests {
    use crate::nn::{RngStream, Tape, Tensor};

    #[test]
    fn softmax_rows_sum_to_one() {
        let tape = Tape::new(false);
        let x = tape.leaf(Tensor::from_f64([2, 3], &[1.0, 2.0, 3.0, -1.0, 0.0, 1000.0]).unwrap());
        let y = x.softmax(1).unwrap().value();
        assert!((y.data()[..3].iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((y.data()[5] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let tape = Tape::new(false);
        let x = tape.leaf(Tensor::from_f64([1, 4], &[1.0, 2.0, 3.0, 6.0]).unwrap());
        let g = tape.constant(Tensor::ones([4]));
        let b = tape.constant(Tensor::zeros([4]));
        let y = x.layer_norm(g, b, 0.0).unwrap().value();
        let mean: f64 = y.data().iter().sum::<f64>() / 4.0;
        let var: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = RngStream::new(7, 0);
        let eval = Tape::new(false);
        let x = eval.leaf(Tensor::ones([100]));
        let y = x.dropout(0.5, &mut rng).unwrap();
        assert_eq!(y.id(), x.id());

        let train = Tape::new(true);
        let x = train.leaf(Tensor::ones([1000]));
        let y = x.dropout(0.25, &mut rng).unwrap().value();
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
        let kept = y.data().iter().filter(|&&v| v > 0.0).count();
        assert!((650..850).contains(&kept), "{kept}");

        let dead = x.dropout(1.0, &mut rng).unwrap();
        assert!(dead.value().data().iter().all(|&v| v == 0.0));
        let g = train.gradients(dead.sum_all()).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(x.dropout(1.5, &mut rng).is_err());
    }
}
