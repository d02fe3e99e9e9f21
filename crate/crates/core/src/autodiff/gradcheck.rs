//! Central-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::tape::{Tape, Var};

/// Worst-case mismatch found by [`grad_check_many`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(1, |analytic|)` over all coordinates.
    pub max_rel_error: f64,
    pub input: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares the tape gradient of scalar `f` at `x` with central differences
/// of step `eps`, returning the maximum relative error.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let report = grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)?;
    Ok(report.max_rel_error)
}

/// [`grad_check`] over several inputs at once; every coordinate of every
/// input is perturbed.
pub fn grad_check_many<F>(f: F, xs: &[Tensor<f64>], eps: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::Config(format!("grad_check eps {eps} outside [1e-7, 1e-4]")));
    }
    let tape = Tape::new();
    let vars: Vec<_> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&tape, &vars)?;
    check_finite(&out.value())?;
    let grads = tape.backward(out);
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .map(|&v| grads.get(v).cloned().expect("leaf gradient"))
        .collect();

    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let v = f(&tape, &vars)?.value().item();
        if !v.is_finite() {
            return Err(Error::Eval(format!("non-finite function value {v}")));
        }
        Ok(v)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        input: 0,
        coord: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut work: Vec<Tensor<f64>> = xs.to_vec();
    for (i, g) in analytic.iter().enumerate() {
        for c in 0..xs[i].numel() {
            let orig = xs[i].data()[c];
            work[i].data_mut()[c] = orig + eps;
            let fp = eval(&work)?;
            work[i].data_mut()[c] = orig - eps;
            let fm = eval(&work)?;
            work[i].data_mut()[c] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = g.data()[c];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if err > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: err,
                    input: i,
                    coord: c,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}

fn check_finite<T: Scalar>(t: &Tensor<T>) -> Result<()> {
    if t.numel() != 1 {
        return Err(Error::Eval(format!("grad_check needs a scalar output, got {:?}", t.shape())));
    }
    if !t.all_finite() {
        return Err(Error::Eval("non-finite function value".into()));
    }
    Ok(())
}
