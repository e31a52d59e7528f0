//! Per-primitive gradient-check cases shared by the unit tests and the
//! command-line verification suite.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{finite_diff_check, BackwardFault, GradCheckReport, Tape, Tensor, Var, DEFAULT_STEP};
use crate::rng::seeded;
use crate::Result;

/// One primitive under test: input shapes and a scalar-valued probe.
pub struct PrimitiveCase {
    pub name: &'static str,
    pub shapes: Vec<Vec<usize>>,
    pub probe: Probe,
}

impl PrimitiveCase {
    /// Inputs drawn from U(−1, 1), deterministic in `seed`.
    pub fn inputs(&self, seed: u64) -> Vec<Tensor> {
        self.shapes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = seeded(seed * 31 + i as u64);
                Tensor::from_fn(s.clone(), |_| rng.random_range(-1.0..1.0))
            })
            .collect()
    }

    pub fn check(&self, seed: u64, fault: Option<BackwardFault>) -> Result<GradCheckReport> {
        let probe = self.probe;
        finite_diff_check(&self.inputs(seed), DEFAULT_STEP, |tape, vars| {
            if let Some(f) = fault {
                tape.inject_fault(f);
            }
            probe(tape, vars)
        })
    }
}

pub type Probe = fn(&mut Tape, &[Var]) -> Result<Var>;

/// Reduces any output to a scalar with fixed non-uniform weights so that
/// every output coordinate matters.
pub fn weighted_sum(tape: &mut Tape, y: Var) -> Result<Var> {
    let w = Tensor::from_fn(tape.shape(y).to_vec(), |i| {
        0.3 + ((i * 7919) % 13) as f64 / 10.0 - 0.5 * (i % 2) as f64
    });
    // a plain product, so corrupting the mask primitive only shows up where it is used
    let w = tape.constant(w);
    let wy = tape.mul(y, w)?;
    tape.sum(wy)
}

pub fn primitive_cases() -> Vec<PrimitiveCase> {
    let case = |name, shapes: &[&[usize]], probe: Probe| PrimitiveCase {
        name,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        probe,
    };
    vec![
        case("add", &[&[2, 3], &[2, 3]], |t, v| {
            let y = t.add(v[0], v[1])?;
            weighted_sum(t, y)
        }),
        case("sub", &[&[2, 3], &[2, 3]], |t, v| {
            let y = t.sub(v[0], v[1])?;
            weighted_sum(t, y)
        }),
        case("mul", &[&[2, 3], &[2, 3]], |t, v| {
            let y = t.mul(v[0], v[1])?;
            weighted_sum(t, y)
        }),
        case("scale", &[&[4]], |t, v| {
            let y = t.scale(v[0], -1.7)?;
            weighted_sum(t, y)
        }),
        case("add_row", &[&[3, 4], &[4]], |t, v| {
            let y = t.add_row(v[0], v[1])?;
            weighted_sum(t, y)
        }),
        case("matmul", &[&[2, 3, 4], &[4, 2]], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            weighted_sum(t, y)
        }),
        case("matmul_batched", &[&[2, 3, 4], &[2, 4, 3]], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            weighted_sum(t, y)
        }),
        case("transpose", &[&[2, 3, 4]], |t, v| {
            let y = t.transpose_last2(v[0])?;
            weighted_sum(t, y)
        }),
        case("reshape", &[&[2, 6]], |t, v| {
            let y = t.reshape(v[0], &[3, 4])?;
            weighted_sum(t, y)
        }),
        case("split_concat", &[&[3, 6]], |t, v| {
            let parts = t.split_last(v[0], 3)?;
            let y = t.concat_last(&[parts[2], parts[0], parts[1]])?;
            let y = t.mul(y, y)?;
            weighted_sum(t, y)
        }),
        case("sigmoid", &[&[5]], |t, v| {
            let y = t.sigmoid(v[0])?;
            weighted_sum(t, y)
        }),
        case("tanh", &[&[5]], |t, v| {
            let y = t.tanh(v[0])?;
            weighted_sum(t, y)
        }),
        case("swish", &[&[5]], |t, v| {
            let y = t.swish(v[0])?;
            weighted_sum(t, y)
        }),
        case("gelu", &[&[5]], |t, v| {
            let y = t.gelu(v[0])?;
            weighted_sum(t, y)
        }),
        case("mean", &[&[2, 5]], |t, v| {
            let y = t.mul(v[0], v[0])?;
            t.mean(y)
        }),
        case("layer_norm", &[&[3, 6], &[6], &[6]], |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            weighted_sum(t, y)
        }),
        case("group_norm", &[&[2, 3, 8], &[8], &[8]], |t, v| {
            let y = t.group_norm(v[0], 2, v[1], v[2], 1e-5)?;
            weighted_sum(t, y)
        }),
        case("rotate", &[&[2, 5, 6]], |t, v| {
            let y = t.rotate(v[0], -1.0, 10.0)?;
            weighted_sum(t, y)
        }),
        case("conj_pairs", &[&[3, 4]], |t, v| {
            let y = t.conj_pairs(v[0])?;
            weighted_sum(t, y)
        }),
        case("mul_const", &[&[2, 3, 3]], |t, v| {
            let c = Tensor::from_fn([3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.5 * i as f64 });
            let y = t.mul_const(v[0], c)?;
            weighted_sum(t, y)
        }),
        case("row_normalize", &[&[4, 5]], |t, v| {
            // scaled so that some rows exceed the clamp and some do not
            let s = t.scale(v[0], 1.3)?;
            let y = t.row_normalize(s)?;
            weighted_sum(t, y)
        }),
    ]
}
