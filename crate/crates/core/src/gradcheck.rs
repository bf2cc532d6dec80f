//! Gradient verification against central finite differences.
//!
//! The analytic and numeric routes are deliberately decomposed so tests can
//! corrupt one side and confirm the comparison catches it.

use std::collections::BTreeSet;

use rand::Rng;

use crate::tape::{Tape, Var};
use crate::tensor::{Tensor, TensorError};
use crate::util::seeded_rng;

/// A deterministic scalar-valued forward pass built from registered
/// parameter leaves.
pub trait ForwardFn: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError> {}
impl<F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>> ForwardFn for F {}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates sampled per tensor; `usize::MAX` checks every coordinate.
    pub max_coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-5, max_coords_per_tensor: 64, seed: 0x5eed }
    }
}

impl GradCheckOptions {
    pub fn exhaustive() -> Self {
        GradCheckOptions { max_coords_per_tensor: usize::MAX, ..Self::default() }
    }
}

/// Runs the forward pass once with gradients enabled and returns the full
/// analytic gradient for each parameter (zeros where no path reached it).
pub fn analytic_gradients<F: ForwardFn>(
    params: &[Tensor],
    forward: &F,
) -> Result<Vec<Vec<f64>>, TensorError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q.set_requires_grad(true);
            tape.leaf(&q)
        })
        .collect();
    let loss = forward(&mut tape, &vars)?;
    let mut grads = tape.backward(loss)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect())
}

/// Evaluates the loss without gradient tracking.
pub fn loss_value<F: ForwardFn>(params: &[Tensor], forward: &F) -> Result<f64, TensorError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q.set_requires_grad(false);
            tape.leaf(&q)
        })
        .collect();
    let loss = forward(&mut tape, &vars)?;
    let v = tape.scalar_value(loss);
    if !v.is_finite() {
        return Err(TensorError::NonFinite { op: "loss_value" });
    }
    Ok(v)
}

/// Relative error between an analytic and a numeric derivative:
/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0_f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares the tape's gradients against central finite differences over
/// sampled coordinates of every parameter and returns the worst relative
/// error seen.
pub fn grad_check<F: ForwardFn>(
    params: &[Tensor],
    forward: &F,
    opts: &GradCheckOptions,
) -> Result<f64, TensorError> {
    let analytic = analytic_gradients(params, forward)?;
    let mut scratch: Vec<Tensor> = params.to_vec();
    let mut rng = seeded_rng(opts.seed);
    let mut worst = 0.0_f64;
    for pi in 0..params.len() {
        let len = params[pi].len();
        for ci in sample_coords(len, opts.max_coords_per_tensor, &mut rng) {
            let orig = params[pi].data()[ci];
            scratch[pi].data_mut()[ci] = orig + opts.eps;
            let plus = loss_value(&scratch, forward)?;
            scratch[pi].data_mut()[ci] = orig - opts.eps;
            let minus = loss_value(&scratch, forward)?;
            scratch[pi].data_mut()[ci] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            worst = worst.max(relative_error(analytic[pi][ci], numeric));
        }
    }
    Ok(worst)
}

fn sample_coords<R: Rng>(len: usize, max: usize, rng: &mut R) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let mut picked = BTreeSet::new();
    while picked.len() < max {
        picked.insert(rng.random_range(0..len));
    }
    picked.into_iter().collect()
}
