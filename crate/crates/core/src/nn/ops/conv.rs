use crate::error::{Error, Result};
use crate::nn::{Real, Tensor, Var};

struct Geom {
    b: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn x(&self, b: usize, c: usize, i: usize, j: usize) -> usize {
        ((b * self.cin + c) * self.h + i) * self.w + j
    }
    fn k(&self, o: usize, c: usize, u: usize, v: usize) -> usize {
        ((o * self.cin + c) * self.kh + u) * self.kw + v
    }
    fn y(&self, b: usize, o: usize, i: usize, j: usize) -> usize {
        ((b * self.cout + o) * self.oh + i) * self.ow + j
    }
    /// Input coordinate for output `i` and tap `u`, if inside the padding.
    fn src(i: usize, u: usize, pad: usize, len: usize) -> Option<usize> {
        (i + u).checked_sub(pad).filter(|&s| s < len)
    }
}

impl<'t> Var<'t> {
    /// 2-D cross-correlation of `[B, C_in, H, W]` with `[C_out, C_in, KH, KW]`
    /// and zero padding, stride 1.
    pub fn conv2d(self, weight: Var<'t>, bias: Option<Var<'t>>, pad: (usize, usize)) -> Result<Var<'t>> {
        let (value, geom) = {
            let x = self.tape.value(self.id);
            let k = self.tape.value(weight.id);
            let bad = x.rank() != 4 || k.rank() != 4 || k.dim(1) != x.dim(1);
            if bad {
                return Err(Error::shape(
                    "conv2d",
                    format!("input {:?} with kernel {:?}", x.shape(), k.shape()),
                ));
            }
            if let Some(b) = bias {
                let bs = b.shape();
                if bs != [k.dim(0)] {
                    return Err(Error::shape("conv2d", format!("bias {bs:?} for {} output channels", k.dim(0))));
                }
            }
            let (h, w, kh, kw) = (x.dim(2), x.dim(3), k.dim(2), k.dim(3));
            if h + 2 * pad.0 < kh || w + 2 * pad.1 < kw {
                return Err(Error::shape(
                    "conv2d",
                    format!("kernel {:?} larger than padded input {:?}", k.shape(), x.shape()),
                ));
            }
            let g = Geom {
                b: x.dim(0),
                cin: x.dim(1),
                h,
                w,
                cout: k.dim(0),
                kh,
                kw,
                ph: pad.0,
                pw: pad.1,
                oh: h + 2 * pad.0 + 1 - kh,
                ow: w + 2 * pad.1 + 1 - kw,
            };
            let mut y = vec![0.0; g.b * g.cout * g.oh * g.ow];
            let (xd, kd) = (x.data(), k.data());
            for b in 0..g.b {
                for o in 0..g.cout {
                    for c in 0..g.cin {
                        for u in 0..g.kh {
                            for v in 0..g.kw {
                                let kv = kd[g.k(o, c, u, v)];
                                for i in 0..g.oh {
                                    let Some(si) = Geom::src(i, u, g.ph, g.h) else { continue };
                                    for j in 0..g.ow {
                                        if let Some(sj) = Geom::src(j, v, g.pw, g.w) {
                                            y[g.y(b, o, i, j)] += kv * xd[g.x(b, c, si, sj)];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(bv) = bias {
                let bias = self.tape.value(bv.id);
                for b in 0..g.b {
                    for o in 0..g.cout {
                        for v in &mut y[g.y(b, o, 0, 0)..][..g.oh * g.ow] {
                            *v += bias.data()[o];
                        }
                    }
                }
            }
            (Tensor::new([g.b, g.cout, g.oh, g.ow], y)?, g)
        };
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        Ok(self.tape.custom(
            value,
            &inputs,
            Box::new(move |args| {
                let g = &geom;
                let (x, k, gy) = (args.inputs[0].data(), args.inputs[1].data(), args.grad.data());
                let mut gx = args.needs[0].then(|| vec![0.0; x.len()]);
                let mut gk = args.needs[1].then(|| vec![0.0; k.len()]);
                for b in 0..g.b {
                    for o in 0..g.cout {
                        for c in 0..g.cin {
                            for u in 0..g.kh {
                                for v in 0..g.kw {
                                    let ki = g.k(o, c, u, v);
                                    let mut acc = 0.0;
                                    for i in 0..g.oh {
                                        let Some(si) = Geom::src(i, u, g.ph, g.h) else { continue };
                                        for j in 0..g.ow {
                                            if let Some(sj) = Geom::src(j, v, g.pw, g.w) {
                                                let gyv = gy[g.y(b, o, i, j)];
                                                let xi = g.x(b, c, si, sj);
                                                acc += gyv * x[xi];
                                                if let Some(gx) = gx.as_mut() {
                                                    gx[xi] += gyv * k[ki];
                                                }
                                            }
                                        }
                                    }
                                    if let Some(gk) = gk.as_mut() {
                                        gk[ki] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                let mut out = vec![
                    gx.map(|d| Tensor::new(args.inputs[0].shape().to_vec(), d).expect("shape")),
                    gk.map(|d| Tensor::new(args.inputs[1].shape().to_vec(), d).expect("shape")),
                ];
                if args.inputs.len() == 3 {
                    out.push(args.needs[2].then(|| {
                        let mut gb = vec![0.0; g.cout];
                        for b in 0..g.b {
                            for (o, slot) in gb.iter_mut().enumerate() {
                                *slot += gy[g.y(b, o, 0, 0)..][..g.oh * g.ow].iter().sum::<Real>();
                            }
                        }
                        Tensor::new([g.cout], gb).expect("shape")
                    }));
                }
                out
            }),
        ))
    }

    /// 1-D cross-correlation of `[B, C_in, L]` with `[C_out, C_in, K]` and
    /// zero padding, stride 1.
    pub fn conv1d(self, weight: Var<'t>, bias: Option<Var<'t>>, pad: usize) -> Result<Var<'t>> {
        let (xs, ks) = (self.shape(), weight.shape());
        if xs.len() != 3 || ks.len() != 3 {
            return Err(Error::shape("conv1d", format!("input {xs:?} with kernel {ks:?}")));
        }
        let x4 = self.reshape([xs[0], xs[1], 1, xs[2]])?;
        let k4 = weight.reshape([ks[0], ks[1], 1, ks[2]])?;
        let y = x4.conv2d(k4, bias, (0, pad)).map_err(|e| match e {
            Error::Shape { detail, .. } => Error::shape("conv1d", detail),
            other => other,
        })?;
        let ys = y.shape();
        y.reshape([ys[0], ys[1], ys[3]])
    }
}

#[cfg(test)]
mod tests {
    use crate::nn::{Tape, Tensor};

    #[test]
    fn conv1d_same_padding() {
        let tape = Tape::new(false);
        let x = tape.leaf(Tensor::from_f64([1, 1, 4], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        let k = tape.leaf(Tensor::from_f64([1, 1, 3], &[1.0, 0.0, -1.0]).unwrap());
        let b = tape.leaf(Tensor::from_f64([1], &[0.5]).unwrap());
        let y = x.conv1d(k, Some(b), 1).unwrap();
        // y[i] = x[i-1] - x[i+1] + 0.5
        assert_eq!(y.value().data(), &[-1.5, -1.5, -1.5, 3.5]);
        let g = tape.gradients(y.sum_all()).unwrap();
        assert_eq!(g.get(b).unwrap().data(), &[4.0]);
        assert_eq!(g.get(k).unwrap().data(), &[6.0, 10.0, 9.0]);
    }

    #[test]
    fn conv2d_rejects_channel_mismatch() {
        let tape = Tape::new(false);
        let x = tape.leaf(Tensor::zeros([1, 2, 3, 3]));
        let k = tape.leaf(Tensor::zeros([1, 3, 3, 3]));
        assert!(x.conv2d(k, None, (1, 1)).unwrap_err().to_string().contains("conv2d"));
    }
}
