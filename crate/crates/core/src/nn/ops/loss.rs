use crate::error::{Error, Result};
use crate::nn::{Real, Tensor, Var};

impl<'t> Var<'t> {
    /// Mean squared error against a constant target of the same shape.
    pub fn mse_loss(self, target: &Tensor) -> Result<Var<'t>> {
        let value = {
            let x = self.tape.value(self.id);
            if x.shape() != target.shape() {
                return Err(Error::shape(
                    "mse_loss",
                    format!("prediction {:?} vs target {:?}", x.shape(), target.shape()),
                ));
            }
            let n = x.numel().max(1) as Real;
            let s: Real = x.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
            Tensor::scalar(s / n)
        };
        let target = target.clone();
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let x = args.inputs[0];
                let scale = 2.0 * args.grad.item() / x.numel().max(1) as Real;
                vec![Some(x.zip_map(&target, |a, b| scale * (a - b)))]
            }),
        ))
    }

    /// Mean cross-entropy of `[n, c]` logits against class indices.
    pub fn cross_entropy(self, labels: &[usize]) -> Result<Var<'t>> {
        let (value, probs) = {
            let x = self.tape.value(self.id);
            if x.rank() != 2 || x.dim(0) != labels.len() {
                return Err(Error::shape(
                    "cross_entropy",
                    format!("logits {:?} for {} labels", x.shape(), labels.len()),
                ));
            }
            let c = x.dim(1);
            if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
                return Err(Error::shape("cross_entropy", format!("label {bad} out of range for {c} classes")));
            }
            let mut probs = Vec::with_capacity(x.numel());
            let mut total = 0.0;
            for (row, &l) in x.data().chunks(c.max(1)).zip(labels) {
                let m = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
                let s: Real = row.iter().map(|&v| (v - m).exp()).sum();
                let lse = m + s.ln();
                total += lse - row[l];
                probs.extend(row.iter().map(|&v| (v - lse).exp()));
            }
            let n = labels.len().max(1) as Real;
            (Tensor::scalar(total / n), probs)
        };
        let labels = labels.to_vec();
        Ok(self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let x = args.inputs[0];
                let c = x.dim(1);
                let scale = args.grad.item() / labels.len().max(1) as Real;
                let mut g = probs.clone();
                for (i, &l) in labels.iter().enumerate() {
                    g[i * c + l] -= 1.0;
                }
                for v in &mut g {
                    *v *= scale;
                }
                vec![Some(Tensor::new(x.shape().to_vec(), g).expect("shape"))]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::nn::{Tape, Tensor};

    #[test]
    fn losses() {
        let tape = Tape::new(false);
        let x = tape.leaf(Tensor::from_f64([2, 2], &[0.0, 0.0, 1.0, -1.0]).unwrap());
        let ce = x.cross_entropy(&[0, 1]).unwrap().value().item();
        let want = (2f64.ln() + (1.0 + (2f64).exp()).ln()) / 2.0;
        assert!((ce - want).abs() < 1e-14);
        let t = Tensor::from_f64([2, 2], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((x.mse_loss(&t).unwrap().value().item() - 0.5).abs() < 1e-15);
        assert!(x.cross_entropy(&[0, 2]).is_err());
    }
}
