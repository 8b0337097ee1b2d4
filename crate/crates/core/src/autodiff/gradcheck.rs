//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values, so it stays
//! independent of the reverse pass it checks.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Default central-difference step.
pub const STEP: f64 = 1e-4;

/// Outcome of checking one input tensor.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub analytic: Tensor,
    pub numeric: Tensor,
}

impl GradCheck {
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, or the absolute
    /// difference when both are (near) zero.
    pub fn relative_error(&self) -> f64 {
        let diff = l2(self.analytic.data().iter().zip(self.numeric.data()).map(|(a, b)| a - b));
        let scale = l2(self.analytic.data().iter().copied()).max(l2(self.numeric.data().iter().copied()));
        if scale < 1e-10 {
            diff
        } else {
            diff / scale
        }
    }
}

fn l2(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

/// Compare reverse-mode and central-difference gradients of the scalar
/// `f(inputs)` with respect to every input.
pub fn check<F>(inputs: &[Tensor], step: f64, f: F) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect();

    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut results = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (k, analytic) in analytic.into_iter().enumerate() {
        let mut numeric = Tensor::zeros(inputs[k].shape().to_vec());
        for j in 0..inputs[k].len() {
            let orig = inputs[k].data()[j];
            work[k].data_mut()[j] = orig + step;
            let plus = eval(&work)?;
            work[k].data_mut()[j] = orig - step;
            let minus = eval(&work)?;
            work[k].data_mut()[j] = orig;
            numeric.data_mut()[j] = (plus - minus) / (2.0 * step);
        }
        results.push(GradCheck { analytic, numeric });
    }
    Ok(results)
}

/// Largest relative error over all inputs.
pub fn max_relative_error<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    Ok(check(inputs, STEP, f)?.iter().map(GradCheck::relative_error).fold(0.0, f64::max))
}
