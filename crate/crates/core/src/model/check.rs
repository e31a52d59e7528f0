use alloc::vec::Vec;

use super::{forward, ModelConfig, ModelParams};
use crate::autodiff::{finite_diff_check, BackwardFault, GradCheckReport, Tensor};
use crate::train::mse_loss;
use crate::{Error, Result};

/// Central-difference check of `mse(forward(signal), target)` with respect to
/// every parameter and every input sample.
pub fn gradcheck_model(
    params: &ModelParams,
    cfg: &ModelConfig,
    signal: &Tensor,
    target: &Tensor,
    step: f64,
    fault: Option<BackwardFault>,
) -> Result<GradCheckReport> {
    let mut inputs: Vec<Tensor> = params
        .entries()
        .into_iter()
        .map(|(_, _, t)| t.clone())
        .collect();
    inputs.push(signal.clone());
    finite_diff_check(&inputs, step, |tape, vars| {
        if let Some(f) = fault {
            tape.inject_fault(f);
        }
        let (signal, weights) = vars
            .split_last()
            .ok_or_else(|| Error::Contract("no inputs".into()))?;
        let w = params
            .rebuild(weights.iter().copied())
            .ok_or_else(|| Error::Contract("layout mismatch".into()))?;
        let y = forward(tape, *signal, &w, cfg)?;
        let t = tape.constant(target.clone());
        mse_loss(tape, y, t)
    })
}
