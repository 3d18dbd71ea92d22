use crate::error::{Error, Result};
use crate::nn::tensor::{broadcast_shape, broadcast_to, sum_to_shape};
use crate::nn::{Real, Tensor, Var};

type BinFn = fn(Real, Real) -> Real;
/// Partial derivative given (a, b, out).
type BinGrad = fn(Real, Real, Real) -> Real;

impl<'t> Var<'t> {
    fn binary(self, other: Var<'t>, op: &'static str, f: BinFn, da: BinGrad, db: BinGrad) -> Result<Var<'t>> {
        let value = {
            let a = self.tape.value(self.id);
            let b = self.tape.value(other.id);
            let shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| {
                Error::shape(op, format!("cannot broadcast {:?} with {:?}", a.shape(), b.shape()))
            })?;
            let a = broadcast_to(&a, &shape);
            let b = broadcast_to(&b, &shape);
            a.zip_map(&b, f)
        };
        Ok(self.tape.custom(
            value,
            &[self, other],
            Box::new(move |args| {
                let shape = args.output.shape();
                let a = broadcast_to(args.inputs[0], shape);
                let b = broadcast_to(args.inputs[1], shape);
                let grad_for = |d: BinGrad, target: &Tensor| {
                    let full: Vec<Real> = args
                        .grad
                        .data()
                        .iter()
                        .zip(a.data().iter().zip(b.data()))
                        .zip(args.output.data())
                        .map(|((&g, (&x, &y)), &o)| g * d(x, y, o))
                        .collect();
                    let full = Tensor::new(shape.to_vec(), full).expect("shape preserved");
                    sum_to_shape(&full, target.shape())
                };
                vec![
                    args.needs[0].then(|| grad_for(da, args.inputs[0])),
                    args.needs[1].then(|| grad_for(db, args.inputs[1])),
                ]
            }),
        ))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |a, b| a + b, |_, _, _| 1.0, |_, _, _| 1.0)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |a, b| a - b, |_, _, _| 1.0, |_, _, _| -1.0)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", |a, b| a * b, |_, b, _| b, |a, _, _| a)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "div", |a, b| a / b, |_, b, _| 1.0 / b, |_, b, o| -o / b)
    }

    /// Elementwise map with derivative expressed through (input, output).
    fn unary(self, f: impl Fn(Real) -> Real, df: fn(Real, Real) -> Real) -> Var<'t> {
        let value = self.tape.value(self.id).map(f);
        self.tape.custom(
            value,
            &[self],
            Box::new(move |args| {
                let g = args
                    .grad
                    .data()
                    .iter()
                    .zip(args.inputs[0].data().iter().zip(args.output.data()))
                    .map(|(&g, (&x, &y))| g * df(x, y))
                    .collect();
                vec![Some(Tensor::new(args.output.shape().to_vec(), g).expect("shape preserved"))]
            }),
        )
    }

    pub fn neg(self) -> Var<'t> {
        self.unary(|x| -x, |_, _| -1.0)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Real::exp, |_, y| y)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(|x| 1.0 / (1.0 + (-x).exp()), |_, y| y * (1.0 - y))
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Real::tanh, |_, y| 1.0 - y * y)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn scale(self, s: Real) -> Var<'t> {
        let value = self.tape.value(self.id).map(|x| x * s);
        self.tape.custom(
            value,
            &[self],
            Box::new(move |args| vec![Some(args.grad.map(|g| g * s))]),
        )
    }

    pub fn add_scalar(self, s: Real) -> Var<'t> {
        let value = self.tape.value(self.id).map(|x| x + s);
        self.tape
            .custom(value, &[self], Box::new(|args| vec![Some(args.grad.clone())]))
    }
}
