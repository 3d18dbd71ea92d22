use std::rc::Rc;

use crate::error::{Error, Result};
use crate::nn::tensor::gemm;
use crate::nn::{Real, Tensor, Var};

impl<'t> Var<'t> {
    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let a = self.tape.value(self.id);
            let b = self.tape.value(other.id);
            if a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0) {
                return Err(Error::shape(
                    "matmul",
                    format!("cannot multiply {:?} by {:?}", a.shape(), b.shape()),
                ));
            }
            let (m, k, n) = (a.dim(0), a.dim(1), b.dim(1));
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, a.data(), false, b.data(), false, &mut c, 0.0);
            Tensor::new([m, n], c)?
        };
        Ok(self.tape.custom(
            value,
            &[self, other],
            Box::new(|args| {
                let (a, b, g) = (args.inputs[0], args.inputs[1], args.grad);
                let (m, k, n) = (a.dim(0), a.dim(1), b.dim(1));
                let ga = args.needs[0].then(|| {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, b.data(), true, &mut ga, 0.0);
                    Tensor::new([m, k], ga).expect("shape")
                });
                let gb = args.needs[1].then(|| {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, a.data(), true, g.data(), false, &mut gb, 0.0);
                    Tensor::new([k, n], gb).expect("shape")
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Per-row matrix transform with a row-dependent matrix:
    /// `out[p] = table[which[p]] · x[rows[p]]` for `x: [n, d_in]` and
    /// `table: [T, d_out, d_in]`, giving `[P, d_out]`.
    ///
    /// Rows sharing a table entry are batched into one matrix product, so the
    /// cost is `P · d_in · d_out` regardless of `T`.
    pub fn gather_transform(
        self,
        table: Var<'t>,
        rows: impl Into<Rc<[usize]>>,
        which: impl Into<Rc<[usize]>>,
    ) -> Result<Var<'t>> {
        let rows: Rc<[usize]> = rows.into();
        let which: Rc<[usize]> = which.into();
        let (value, groups) = {
            let x = self.tape.value(self.id);
            let m = self.tape.value(table.id);
            if x.rank() != 2 || m.rank() != 3 || m.dim(2) != x.dim(1) || rows.len() != which.len() {
                return Err(Error::shape(
                    "gather_transform",
                    format!(
                        "x {:?}, table {:?}, {} rows, {} selectors",
                        x.shape(),
                        m.shape(),
                        rows.len(),
                        which.len()
                    ),
                ));
            }
            let (n, din, t, dout) = (x.dim(0), x.dim(1), m.dim(0), m.dim(1));
            if let Some(&r) = rows.iter().find(|&&r| r >= n) {
                return Err(Error::shape("gather_transform", format!("row {r} out of range for {n} rows")));
            }
            if let Some(&w) = which.iter().find(|&&w| w >= t) {
                return Err(Error::shape("gather_transform", format!("selector {w} out of range for {t} matrices")));
            }
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); t];
            for (p, &w) in which.iter().enumerate() {
                groups[w].push(p);
            }
            let mut out = vec![0.0; rows.len() * dout];
            let mut buf = Vec::new();
            let mut res = Vec::new();
            for (w, members) in groups.iter().enumerate() {
                if members.is_empty() {
                    continue;
                }
                buf.clear();
                for &p in members {
                    buf.extend_from_slice(&x.data()[rows[p] * din..][..din]);
                }
                res.clear();
                res.resize(members.len() * dout, 0.0);
                let mw = &m.data()[w * dout * din..][..dout * din];
                gemm(members.len(), din, dout, &buf, false, mw, true, &mut res, 0.0);
                for (i, &p) in members.iter().enumerate() {
                    out[p * dout..][..dout].copy_from_slice(&res[i * dout..][..dout]);
                }
            }
            (Tensor::new([rows.len(), dout], out)?, Rc::new(groups))
        };
        Ok(self.tape.custom(
            value,
            &[self, table],
            Box::new(move |args| {
                let (x, m, g) = (args.inputs[0], args.inputs[1], args.grad);
                let (din, dout) = (x.dim(1), m.dim(1));
                let mut gx = args.needs[0].then(|| Tensor::zeros(x.shape().to_vec()));
                let mut gm = args.needs[1].then(|| Tensor::zeros(m.shape().to_vec()));
                let mut gbuf: Vec<Real> = Vec::new();
                let mut xbuf: Vec<Real> = Vec::new();
                let mut res: Vec<Real> = Vec::new();
                for (w, members) in groups.iter().enumerate() {
                    if members.is_empty() {
                        continue;
                    }
                    let cnt = members.len();
                    gbuf.clear();
                    for &p in members {
                        gbuf.extend_from_slice(&g.data()[p * dout..][..dout]);
                    }
                    let mw = &m.data()[w * dout * din..][..dout * din];
                    if let Some(gx) = gx.as_mut() {
                        res.clear();
                        res.resize(cnt * din, 0.0);
                        gemm(cnt, dout, din, &gbuf, false, mw, false, &mut res, 0.0);
                        let d = gx.data_mut();
                        for (i, &p) in members.iter().enumerate() {
                            let r = rows[p];
                            for (acc, &v) in d[r * din..][..din].iter_mut().zip(&res[i * din..][..din]) {
                                *acc += v;
                            }
                        }
                    }
                    if let Some(gm) = gm.as_mut() {
                        xbuf.clear();
                        for &p in members {
                            xbuf.extend_from_slice(&x.data()[rows[p] * din..][..din]);
                        }
                        let slot = &mut gm.data_mut()[w * dout * din..][..dout * din];
                        gemm(dout, cnt, din, &gbuf, true, &xbuf, false, slot, 0.0);
                    }
                }
                vec![gx, gm]
            }),
        ))
    }
}
