//! Central-difference gradient checks.
//!
//! The reported error for one coordinate is
//! `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)`, so that
//! vanishing gradients are compared in absolute terms scaled by the floor.

use crate::error::{Error, Result};
use crate::nn::{ParameterSet, Real, Tape, Tensor, Var};

pub const DEFAULT_EPS: f64 = 1e-4;
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Location of the worst coordinate, e.g. `input 1 [3]` or `w_q [5]`.
    pub worst: String,
}

impl GradCheckReport {
    fn record(&mut self, at: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        self.checked += 1;
        self.max_abs_error = self.max_abs_error.max(abs);
        if rel > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = self.max_rel_error.max(rel);
            self.worst = at();
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

fn scalar_of(v: Var<'_>) -> Result<f64> {
    let t = v.value();
    if t.numel() != 1 {
        return Err(Error::shape("grad_check", format!("function output has shape {:?}", t.shape())));
    }
    Ok(t.item() as f64)
}

/// Evenly spaced coordinates, at most `limit` of them.
fn coordinates(n: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(l) if l < n => (0..l).map(|i| i * n / l).collect(),
        _ => (0..n).collect(),
    }
}

/// Checks the gradient of a scalar function of input tensors.
pub fn grad_check_inputs<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new(false);
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    scalar_of(out)?;
    let grads = tape.gradients(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect();

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let tape = Tape::new(false);
        let vars: Vec<Var<'_>> = probe.iter().map(|t| tape.leaf(t.clone())).collect();
        scalar_of(f(&tape, &vars)?)
    };
    let mut report = GradCheckReport::default();
    let mut probe = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].numel() {
            let orig = probe[i].data()[j];
            probe[i].data_mut()[j] = orig + eps as Real;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = orig - eps as Real;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            report.record(|| format!("input {i} [{j}]"), analytic[i].data()[j] as f64, numeric);
        }
    }
    Ok(report)
}

/// Checks the gradient of a scalar function of a parameter set. At most
/// `per_param` coordinates of each parameter are probed.
pub fn grad_check_params<F>(f: F, params: &ParameterSet, eps: f64, per_param: Option<usize>) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &ParameterSet) -> Result<Var<'t>>,
{
    let mut work = params.clone();
    work.zero_grad();
    {
        let tape = Tape::new(false);
        let out = f(&tape, &work)?;
        scalar_of(out)?;
        let grads = tape.gradients(out)?;
        work.accumulate(&grads);
    }
    let analytic: Vec<Option<Tensor>> = work.iter().map(|p| p.grad.clone()).collect();
    let eval = |ps: &ParameterSet| -> Result<f64> {
        let tape = Tape::new(false);
        scalar_of(f(&tape, ps)?)
    };
    let mut report = GradCheckReport::default();
    let names: Vec<String> = work.names().map(str::to_string).collect();
    for (pi, name) in names.iter().enumerate() {
        if !work.iter().nth(pi).map(|p| p.requires_grad).unwrap_or(false) {
            continue;
        }
        let n = work.get(name).map(Tensor::numel).unwrap_or(0);
        for j in coordinates(n, per_param) {
            let orig = work.get(name).expect("present").data()[j];
            work.get_mut(name).expect("present").data_mut()[j] = orig + eps as Real;
            let plus = eval(&work)?;
            work.get_mut(name).expect("present").data_mut()[j] = orig - eps as Real;
            let minus = eval(&work)?;
            work.get_mut(name).expect("present").data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].as_ref().map(|g| g.data()[j] as f64).unwrap_or(0.0);
            report.record(|| format!("{name} [{j}]"), a, numeric);
        }
    }
    Ok(report)
}
