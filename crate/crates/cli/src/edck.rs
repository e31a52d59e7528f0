//! The `EDCK` checkpoint container.
//!
//! Little-endian: magic `EDCK`, version `u32`, a config block (`seq_len`,
//! `patch_size`, `d_model`, `heads`, `layers`, `ffn_mult` and a flag word as
//! `u32`; `eps_ln`, `eps_gn`, `theta_base` as `f64`), the tensor count, then
//! per tensor its name (`u32` length + UTF-8), rank, dims and `f64` data in
//! canonical parameter order. An optimizer section follows: a `u32` section
//! version (0 = absent), and when present the step counter (`u64`), the five
//! AdamW hyperparameters and every first then second moment, in parameter
//! order.

use std::path::Path;

use eegdir_core::autodiff::Tensor;
use eegdir_core::model::{ModelConfig, ModelParams};
use eegdir_core::train::{AdamW, OptimState};

use crate::binio::{put_u32, Reader};
use crate::error::{Error, FormatError, Result};
use crate::fsio;

pub const MAGIC: &str = "EDCK";
pub const VERSION: u32 = 1;
pub const OPTIM_VERSION: u32 = 1;

const FLAG_STABILIZED: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub optim: Option<OptimState>,
}

impl Checkpoint {
    /// Fails with a config mismatch unless the stored architecture equals `want`.
    pub fn expect_config(&self, want: &ModelConfig) -> Result<(), FormatError> {
        if &self.config != want {
            return Err(FormatError::ConfigMismatch(format!(
                "checkpoint has {:?}, expected {want:?}",
                self.config
            )));
        }
        Ok(())
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(
    config: &ModelConfig,
    params: &ModelParams,
    optim: Option<&OptimState>,
) -> Result<Vec<u8>, FormatError> {
    config
        .validate()
        .map_err(|e| FormatError::Malformed(e.to_string()))?;
    params
        .validate(config)
        .map_err(|e| FormatError::ConfigMismatch(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (v, what) in [
        (config.seq_len, "seq_len"),
        (config.patch_size, "patch_size"),
        (config.d_model, "d_model"),
        (config.heads, "heads"),
        (config.layers, "layers"),
        (config.ffn_mult, "ffn_mult"),
    ] {
        put_u32(&mut out, v, what)?;
    }
    let flags = if config.stabilized_retention {
        FLAG_STABILIZED
    } else {
        0
    };
    out.extend_from_slice(&flags.to_le_bytes());
    put_f64s(&mut out, &[config.eps_ln, config.eps_gn, config.theta_base]);

    let entries = params.entries();
    put_u32(&mut out, entries.len(), "tensor count")?;
    for (name, _, t) in &entries {
        put_u32(&mut out, name.len(), "name length")?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len(), "rank")?;
        for &d in t.shape() {
            put_u32(&mut out, d, "dimension")?;
        }
        put_f64s(&mut out, t.data());
    }

    match optim {
        None => out.extend_from_slice(&0u32.to_le_bytes()),
        Some(st) => {
            st.validate(params)
                .map_err(|e| FormatError::ConfigMismatch(e.to_string()))?;
            out.extend_from_slice(&OPTIM_VERSION.to_le_bytes());
            out.extend_from_slice(&st.t.to_le_bytes());
            let h = st.hyper;
            put_f64s(&mut out, &[h.lr, h.beta1, h.beta2, h.eps, h.weight_decay]);
            for moments in [&st.m, &st.v] {
                for (_, _, t) in moments.entries() {
                    put_f64s(&mut out, t.data());
                }
            }
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::Version {
            what: "checkpoint",
            found: version,
            supported: VERSION,
        });
    }
    let mut config = ModelConfig {
        seq_len: r.usize("seq_len")?,
        patch_size: r.usize("patch_size")?,
        d_model: r.usize("d_model")?,
        heads: r.usize("heads")?,
        layers: r.usize("layers")?,
        ffn_mult: r.usize("ffn_mult")?,
        ..ModelConfig::default()
    };
    let flags = r.u32("flags")?;
    if flags & !FLAG_STABILIZED != 0 {
        return Err(FormatError::Malformed(format!(
            "unknown config flags {flags:#x}"
        )));
    }
    config.stabilized_retention = flags & FLAG_STABILIZED != 0;
    config.eps_ln = r.f64("eps_ln")?;
    config.eps_gn = r.f64("eps_gn")?;
    config.theta_base = r.f64("theta_base")?;
    config
        .validate()
        .map_err(|e| FormatError::Malformed(e.to_string()))?;

    let expected = ModelParams::shapes(&config);
    let expected = expected.entries();
    let count = r.usize("tensor count")?;
    if count != expected.len() {
        return Err(FormatError::ConfigMismatch(format!(
            "{count} tensors stored, config implies {}",
            expected.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for (want_name, _, want_shape) in &expected {
        let name_len = r.usize("tensor name length")?;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| FormatError::Malformed("tensor name is not UTF-8".into()))?;
        if name != want_name {
            return Err(FormatError::Malformed(format!(
                "expected tensor {want_name}, found {name}"
            )));
        }
        let rank = r.usize(&format!("{name} rank"))?;
        let shape = (0..rank)
            .map(|_| r.usize(&format!("{name} dims")))
            .collect::<Result<Vec<_>, _>>()?;
        if &shape != *want_shape {
            return Err(FormatError::Shape {
                name: name.to_string(),
                expected: want_shape.to_vec(),
                found: shape,
            });
        }
        let data = r.f64s(shape.iter().product(), &format!("{name} data"))?;
        tensors.push(Tensor::new(shape, data).map_err(|e| FormatError::Malformed(e.to_string()))?);
    }
    let params = ModelParams::shapes(&config)
        .rebuild(tensors)
        .expect("count checked above");
    params
        .validate(&config)
        .map_err(|e| FormatError::Malformed(e.to_string()))?;

    let optim = match r.u32("optimizer section version")? {
        0 => None,
        OPTIM_VERSION => {
            let t = r.u64("optimizer step")?;
            let hyper = AdamW {
                lr: r.f64("lr")?,
                beta1: r.f64("beta1")?,
                beta2: r.f64("beta2")?,
                eps: r.f64("eps")?,
                weight_decay: r.f64("weight_decay")?,
            };
            let mut read_moments = |which: &str| -> Result<_, FormatError> {
                let ts = params
                    .entries()
                    .into_iter()
                    .map(|(name, _, p)| {
                        let data = r.f64s(p.len(), &format!("{which} moment of {name}"))?;
                        Tensor::new(p.shape().to_vec(), data)
                            .map_err(|e| FormatError::Malformed(e.to_string()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(params.rebuild(ts).expect("one moment per parameter"))
            };
            let m = read_moments("first")?;
            let v = read_moments("second")?;
            let st = OptimState { m, v, t, hyper };
            st.validate(&params)
                .map_err(|e| FormatError::Malformed(e.to_string()))?;
            Some(st)
        }
        other => {
            return Err(FormatError::Version {
                what: "optimizer section",
                found: other,
                supported: OPTIM_VERSION,
            })
        }
    };
    r.finish()?;
    Ok(Checkpoint {
        config,
        params,
        optim,
    })
}

pub fn save(
    path: &Path,
    config: &ModelConfig,
    params: &ModelParams,
    optim: Option<&OptimState>,
) -> Result<()> {
    let bytes = encode(config, params, optim).map_err(|e| Error::format(path, e))?;
    fsio::write_atomic(path, &bytes)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&fsio::read(path)?).map_err(|e| Error::format(path, e))
}
