use crate::autodiff::{Tape, Var};
use crate::Result;

/// Mean over all elements of `(target − pred)²`, as a differentiable scalar.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(target, pred)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}
