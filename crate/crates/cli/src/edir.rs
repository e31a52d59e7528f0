//! The `EDIR` dataset container.
//!
//! Little-endian throughout: magic `EDIR`, version `u32`, sample count `u32`,
//! segment length `u32`, grid length `u32`, the SNR grid as `i32`s, then per
//! sample `clean` and `noisy` as `f32 × len`, `sigma_y` as `f32` and the SNR
//! label as `i32`. Values are widened to `f64` on read.

use std::path::Path;

use eegdir_core::data::{Dataset, SamplePair};

use crate::binio::{put_u32, Reader};
use crate::error::{Error, FormatError, Result};
use crate::fsio;

pub const MAGIC: &str = "EDIR";
pub const VERSION: u32 = 1;

fn put_f32s(out: &mut Vec<u8>, xs: &[f64], what: &str) -> Result<(), FormatError> {
    for &x in xs {
        let v = x as f32;
        if !v.is_finite() {
            return Err(FormatError::Malformed(format!(
                "{what}: {x} is not representable as a finite f32"
            )));
        }
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode(data: &Dataset) -> Result<Vec<u8>, FormatError> {
    data.validate()
        .map_err(|e| FormatError::Malformed(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + data.samples.len() * (8 * data.seq_len + 8));
    out.extend_from_slice(MAGIC.as_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, data.samples.len(), "sample count")?;
    put_u32(&mut out, data.seq_len, "seq_len")?;
    put_u32(&mut out, data.snr_grid.len(), "grid length")?;
    for g in &data.snr_grid {
        out.extend_from_slice(&g.to_le_bytes());
    }
    for (i, s) in data.samples.iter().enumerate() {
        put_f32s(&mut out, &s.clean, &format!("sample {i} clean"))?;
        put_f32s(&mut out, &s.noisy, &format!("sample {i} noisy"))?;
        put_f32s(&mut out, &[s.sigma_y], &format!("sample {i} sigma_y"))?;
        out.extend_from_slice(&s.snr_db.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::Version {
            what: "dataset",
            found: version,
            supported: VERSION,
        });
    }
    let n = r.usize("sample count")?;
    let seq_len = r.usize("seq_len")?;
    if seq_len == 0 {
        return Err(FormatError::Malformed("seq_len is zero".into()));
    }
    let grid_len = r.usize("grid length")?;
    let snr_grid = (0..grid_len)
        .map(|_| r.i32("SNR grid"))
        .collect::<Result<Vec<_>, _>>()?;
    let mut samples = Vec::with_capacity(n.min(1 << 16));
    for i in 0..n {
        let what = |f: &str| format!("sample {i} {f}");
        let mut floats = |f: &str| -> Result<Vec<f64>, FormatError> {
            let bytes = seq_len
                .checked_mul(4)
                .ok_or_else(|| FormatError::Malformed("seq_len overflows".into()))?;
            let raw = r.take(bytes, &what(f))?;
            Ok(raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect())
        };
        let clean = floats("clean")?;
        let noisy = floats("noisy")?;
        let sigma_y = r.f32(&what("sigma_y"))? as f64;
        let snr_db = r.i32(&what("snr_db"))?;
        samples.push(SamplePair {
            clean,
            noisy,
            sigma_y,
            snr_db,
        });
    }
    r.finish()?;
    let data = Dataset {
        seq_len,
        snr_grid,
        samples,
    };
    data.validate()
        .map_err(|e| FormatError::Malformed(e.to_string()))?;
    Ok(data)
}

pub fn write(path: &Path, data: &Dataset) -> Result<()> {
    let bytes = encode(data).map_err(|e| Error::format(path, e))?;
    fsio::write_atomic(path, &bytes)
}

pub fn read(path: &Path) -> Result<Dataset> {
    decode(&fsio::read(path)?).map_err(|e| Error::format(path, e))
}

/// Rounds every stored value to `f32`, i.e. what a write/read cycle yields.
pub fn quantize(data: &Dataset) -> Dataset {
    let q = |xs: &[f64]| xs.iter().map(|&x| x as f32 as f64).collect();
    Dataset {
        seq_len: data.seq_len,
        snr_grid: data.snr_grid.clone(),
        samples: data
            .samples
            .iter()
            .map(|s| SamplePair {
                clean: q(&s.clean),
                noisy: q(&s.noisy),
                sigma_y: s.sigma_y as f32 as f64,
                snr_db: s.snr_db,
            })
            .collect(),
    }
}
