use alloc::format;
use alloc::vec::Vec;

use super::{Tape, Tensor, Var};
use crate::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Outcome of a central-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(input index, coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares the tape's gradient of `f` against central differences
/// `(f(x+h·e_i) − f(x−h·e_i)) / 2h` for every coordinate of every input.
///
/// The relative error of a coordinate is
/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<F>(inputs: &[Tensor], step: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Contract(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| grads.get(v).unwrap_or(&[]).to_vec())
        .collect();
    drop(tape);

    let mut eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).data()[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("finite-difference evaluation".into()))
        }
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    for (ii, input) in inputs.iter().enumerate() {
        for ci in 0..input.len() {
            let orig = input.data()[ci];
            work[ii].data_mut()[ci] = orig + step;
            let plus = eval(&work)?;
            work[ii].data_mut()[ci] = orig - step;
            let minus = eval(&work)?;
            work[ii].data_mut()[ci] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[ii].get(ci).copied().unwrap_or(0.0);
            let denom = libm::fabs(a).max(libm::fabs(numeric)).max(1e-8);
            let rel = libm::fabs(a - numeric) / denom;
            report.coordinates += 1;
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = rel;
                report.worst = Some((ii, ci));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
