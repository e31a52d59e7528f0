use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// One training/evaluation record. `clean` and `noisy` are stored divided by
/// `sigma_y`, the population standard deviation of the raw noisy segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    pub sigma_y: f64,
    pub snr_db: i32,
}

/// Root mean square `sqrt(mean(x²))`.
pub fn rms(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Contract("rms of an empty sequence".into()));
    }
    Ok(libm::sqrt(
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64,
    ))
}

/// Population (divide-by-N) standard deviation.
pub fn std_pop(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Contract("std of an empty sequence".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    Ok(libm::sqrt(
        x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n,
    ))
}

/// `10·log₁₀(RMS(x) / RMS(scaled_noise))`.
pub fn measure_snr(x: &[f64], scaled_noise: &[f64]) -> Result<f64> {
    let rn = rms(scaled_noise)?;
    if rn == 0.0 {
        return Err(Error::Contract("SNR of a silent noise component".into()));
    }
    Ok(10.0 * libm::log10(rms(x)? / rn))
}

/// Noise gain λ such that `measure_snr(x, λ·n) == snr_db`:
/// `λ = RMS(x) / (RMS(n) · 10^(snr_db/10))`.
pub fn lambda_for_snr(x: &[f64], n: &[f64], snr_db: f64) -> Result<f64> {
    let rn = rms(n)?;
    if rn == 0.0 {
        return Err(Error::Contract(
            "cannot scale silent noise to a target SNR".into(),
        ));
    }
    Ok(rms(x)? / (rn * libm::pow(10.0, snr_db / 10.0)))
}

/// Mixes `y = x + λ·n` at `snr_db` and normalizes both segments by `σ_y`.
pub fn mix_pair(x: &[f64], n: &[f64], snr_db: i32) -> Result<SamplePair> {
    if x.len() != n.len() || x.is_empty() {
        return Err(Error::Dimension(format!(
            "clean length {} vs noise length {}",
            x.len(),
            n.len()
        )));
    }
    let lambda = lambda_for_snr(x, n, snr_db as f64)?;
    let y: Vec<f64> = x.iter().zip(n).map(|(a, b)| a + lambda * b).collect();
    let sigma_y = std_pop(&y)?;
    if !(sigma_y > 0.0) || !sigma_y.is_finite() {
        return Err(Error::Degenerate(format!(
            "noisy segment has standard deviation {sigma_y}"
        )));
    }
    Ok(SamplePair {
        clean: x.iter().map(|v| v / sigma_y).collect(),
        noisy: y.iter().map(|v| v / sigma_y).collect(),
        sigma_y,
        snr_db,
    })
}
