use alloc::format;
use alloc::vec::Vec;

use super::params::{BlockWeights, HeadWeights, ModelParams, MsrWeights, Weights};
use super::ModelConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Splits `[B, |s|]` into `[B, T, p]` tokens of consecutive samples.
pub fn patchify(tape: &mut Tape, signal: Var, patch: usize) -> Result<Var> {
    let s = tape.shape(signal).to_vec();
    if s.len() != 2 {
        return Err(Error::Dimension(format!(
            "patchify expects [B, len], got {s:?}"
        )));
    }
    if patch == 0 || s[1] % patch != 0 {
        return Err(Error::Config(format!(
            "seq_len not divisible by patch ({} % {patch} != 0)",
            s[1]
        )));
    }
    tape.reshape(signal, &[s[0], s[1] / patch, patch])
}

/// Inverse of [`patchify`]: concatenates tokens back into `[B, T·p]`.
pub fn unpatchify(tape: &mut Tape, tokens: Var) -> Result<Var> {
    let s = tape.shape(tokens).to_vec();
    if s.len() != 3 {
        return Err(Error::Dimension(format!(
            "unpatchify expects [B, T, p], got {s:?}"
        )));
    }
    tape.reshape(tokens, &[s[0], s[1] * s[2]])
}

/// Patchify followed by a per-token affine projection `p → d_model`.
/// No positional encoding is added; retention carries position itself.
pub fn signal_embedding(tape: &mut Tape, signal: Var, embed_w: Var, embed_b: Var) -> Result<Var> {
    let patch = tape.shape(embed_w)[0];
    let tokens = patchify(tape, signal, patch)?;
    let x = tape.matmul(tokens, embed_w)?;
    tape.add_row(x, embed_b)
}

/// Per-head decay rates `γ_i = 1 − 2^(−5−i)`, shared by all layers.
pub fn head_gammas(heads: usize) -> Vec<f64> {
    (0..heads)
        .map(|i| 1.0 - libm::pow(2.0, -5.0 - i as f64))
        .collect()
}

/// Causal decay matrix: `D[n, m] = γ^(n−m)` for `n ≥ m`, else 0.
pub fn decay_matrix(gamma: f64, tokens: usize) -> Result<Tensor> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!(
            "decay rate must lie in (0, 1), got {gamma}"
        )));
    }
    if tokens == 0 {
        return Err(Error::Config(
            "decay matrix needs at least one position".into(),
        ));
    }
    Ok(Tensor::from_fn([tokens, tokens], |i| {
        let (n, m) = (i / tokens, i % tokens);
        if n >= m {
            libm::pow(gamma, (n - m) as f64)
        } else {
            0.0
        }
    }))
}

/// Pre-mask retention scores `(QΘ)(KΘ̄)ᵀ` for one head, `[B, T, T]`.
///
/// Channel pairs are complex numbers; the product is the real part of the
/// complex (non-conjugating) inner product, so each score depends on
/// positions only through `n − m`.
pub fn retention_scores(
    tape: &mut Tape,
    x: Var,
    head: &HeadWeights<Var>,
    cfg: &ModelConfig,
) -> Result<(Var, Var)> {
    let q = tape.matmul(x, head.wq)?;
    let q = tape.rotate(q, 1.0, cfg.theta_base)?;
    let k = tape.matmul(x, head.wk)?;
    let k = tape.rotate(k, -1.0, cfg.theta_base)?;
    let k = tape.conj_pairs(k)?;
    let kt = tape.transpose_last2(k)?;
    let scores = tape.matmul(q, kt)?;
    let v = tape.matmul(x, head.wv)?;
    Ok((scores, v))
}

/// Single-head retention `(QKᵀ ⊙ D) V` on `[B, T, d]`.
pub fn retention(
    tape: &mut Tape,
    x: Var,
    head: &HeadWeights<Var>,
    gamma: f64,
    cfg: &ModelConfig,
) -> Result<Var> {
    let t = tape.shape(x)[tape.shape(x).len() - 2];
    let d = tape.shape(x)[tape.shape(x).len() - 1];
    let (mut scores, v) = retention_scores(tape, x, head, cfg)?;
    if cfg.stabilized_retention {
        scores = tape.scale(scores, 1.0 / libm::sqrt(d as f64))?;
    }
    let mut masked = tape.mul_const(scores, decay_matrix(gamma, t)?)?;
    if cfg.stabilized_retention {
        masked = tape.row_normalize(masked)?;
    }
    tape.matmul(masked, v)
}

/// Multi-scale retention: per-head retention on channel slices, GroupNorm
/// over heads, swish gate, output projection.
pub fn multi_scale_retention(
    tape: &mut Tape,
    x: Var,
    w: &MsrWeights<Var>,
    cfg: &ModelConfig,
) -> Result<Var> {
    let gammas = head_gammas(w.heads.len());
    let slices = tape.split_last(x, w.heads.len())?;
    let mut outs = Vec::with_capacity(w.heads.len());
    for (i, (xs, hw)) in slices.into_iter().zip(&w.heads).enumerate() {
        let out = retention(tape, xs, hw, gammas[i], cfg).map_err(|e| in_head(e, i))?;
        outs.push(out);
    }
    let y = tape.concat_last(&outs)?;
    let y = tape.group_norm(y, w.heads.len(), w.gn_gamma, w.gn_beta, cfg.eps_gn)?;
    let gate = tape.matmul(x, w.wg)?;
    let gate = tape.swish(gate)?;
    let gated = tape.mul(gate, y)?;
    tape.matmul(gated, w.wo)
}

/// `Y = X + MSR(LN₁(X))`, `Z = Y + FFN(LN₂(Y))`.
pub fn dir_block(tape: &mut Tape, x: Var, w: &BlockWeights<Var>, cfg: &ModelConfig) -> Result<Var> {
    let h = tape.layer_norm(x, w.ln1_gamma, w.ln1_beta, cfg.eps_ln)?;
    let h = multi_scale_retention(tape, h, &w.msr, cfg)?;
    let y = tape.add(x, h)?;
    let h = tape.layer_norm(y, w.ln2_gamma, w.ln2_beta, cfg.eps_ln)?;
    let h = tape.matmul(h, w.ffn_w1)?;
    let h = tape.add_row(h, w.ffn_b1)?;
    let h = tape.gelu(h)?;
    let h = tape.matmul(h, w.ffn_w2)?;
    let h = tape.add_row(h, w.ffn_b2)?;
    tape.add(y, h)
}

/// End-to-end map `[B, |s|] → [B, |s|]`.
pub fn forward(tape: &mut Tape, signal: Var, w: &Weights<Var>, cfg: &ModelConfig) -> Result<Var> {
    let s = tape.shape(signal);
    if s.len() != 2 || s[1] != cfg.seq_len {
        return Err(Error::Config(format!(
            "input shape {s:?} does not match seq_len {}",
            cfg.seq_len
        )));
    }
    let mut x = signal_embedding(tape, signal, w.embed_w, w.embed_b)?;
    for (l, bw) in w.blocks.iter().enumerate() {
        x = dir_block(tape, x, bw, cfg).map_err(|e| in_layer(e, l))?;
    }
    let y = tape.matmul(x, w.out_w)?;
    let y = tape.add_row(y, w.out_b)?;
    unpatchify(tape, y)
}

/// Inference on plain tensors: `[B, |s|]` (or a single `[|s|]` signal).
pub fn predict(params: &ModelParams, cfg: &ModelConfig, signals: &Tensor) -> Result<Tensor> {
    let input = match signals.shape() {
        [n] => signals.clone().reshaped([1, *n])?,
        _ => signals.clone(),
    };
    let mut tape = Tape::new();
    let w = params.bind(&mut tape, false);
    let x = tape.constant(input);
    let y = forward(&mut tape, x, &w, cfg)?;
    let out = tape.value(y).clone();
    match signals.shape() {
        [n] => out.reshaped([*n]),
        _ => Ok(out),
    }
}

fn in_head(e: Error, head: usize) -> Error {
    match e {
        Error::NonFinite(op) => Error::NonFinite(format!("{op} (head {head})")),
        other => other,
    }
}

fn in_layer(e: Error, layer: usize) -> Error {
    match e {
        Error::NonFinite(op) => Error::NonFinite(format!("{op} (layer {layer})")),
        other => other,
    }
}
