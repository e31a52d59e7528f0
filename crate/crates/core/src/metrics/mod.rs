//! Temporal/spectral RRMSE, correlation coefficient and per-SNR reports.

mod fft;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

pub use fft::{dft, dft_direct, periodogram_psd};

use crate::autodiff::Tensor;
use crate::data::Dataset;
use crate::model::{predict, ModelConfig, ModelParams};
use crate::{Error, Result};

fn check_lengths(xhat: &[f64], x: &[f64]) -> Result<()> {
    if xhat.len() != x.len() || x.is_empty() {
        return Err(Error::Dimension(format!(
            "estimate length {} vs reference length {}",
            xhat.len(),
            x.len()
        )));
    }
    Ok(())
}

fn rms(x: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = x.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    libm::sqrt(sum / n as f64)
}

/// `RMS(x̂ − x) / RMS(x)`.
pub fn rrmse_temporal(xhat: &[f64], x: &[f64]) -> Result<f64> {
    check_lengths(xhat, x)?;
    let denom = rms(x.iter().copied());
    if denom == 0.0 {
        return Err(Error::Contract(
            "temporal RRMSE against a silent reference".into(),
        ));
    }
    Ok(rms(xhat.iter().zip(x).map(|(a, b)| a - b)) / denom)
}

/// `RMS(PSD(x̂) − PSD(x)) / RMS(PSD(x))` with the raw periodogram as PSD.
pub fn rrmse_spectral(xhat: &[f64], x: &[f64]) -> Result<f64> {
    check_lengths(xhat, x)?;
    let px = periodogram_psd(x)?;
    let ph = periodogram_psd(xhat)?;
    let denom = rms(px.iter().copied());
    if denom == 0.0 {
        return Err(Error::Contract(
            "spectral RRMSE against a degenerate reference spectrum".into(),
        ));
    }
    Ok(rms(ph.iter().zip(&px).map(|(a, b)| a - b)) / denom)
}

/// Pearson correlation between estimate and reference.
pub fn correlation_coefficient(xhat: &[f64], x: &[f64]) -> Result<f64> {
    check_lengths(xhat, x)?;
    let n = x.len() as f64;
    let mh = xhat.iter().sum::<f64>() / n;
    let mx = x.iter().sum::<f64>() / n;
    let (mut cov, mut vh, mut vx) = (0.0, 0.0, 0.0);
    for (a, b) in xhat.iter().zip(x) {
        let (da, db) = (a - mh, b - mx);
        cov += da * db;
        vh += da * da;
        vx += db * db;
    }
    if vh == 0.0 || vx == 0.0 {
        return Err(Error::Contract(
            "correlation with a constant sequence".into(),
        ));
    }
    Ok((cov / libm::sqrt(vh * vx)).clamp(-1.0, 1.0))
}

/// The three measures for one estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleMetrics {
    pub rrmse_temporal: f64,
    pub rrmse_spectral: f64,
    pub cc: f64,
}

impl SampleMetrics {
    pub fn compute(xhat: &[f64], x: &[f64]) -> Result<Self> {
        Ok(Self {
            rrmse_temporal: rrmse_temporal(xhat, x)?,
            rrmse_spectral: rrmse_spectral(xhat, x)?,
            cc: correlation_coefficient(xhat, x)?,
        })
    }
}

/// Means over one SNR level (or over everything when `snr_db` is `None`).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub snr_db: Option<i32>,
    pub rrmse_temporal: f64,
    pub rrmse_spectral: f64,
    pub cc: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Ascending by SNR.
    pub rows: Vec<MetricsRow>,
    pub all: MetricsRow,
}

impl MetricsReport {
    /// Averages per-sample metrics by SNR label and overall.
    pub fn aggregate(samples: &[(i32, SampleMetrics)]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Contract(
                "cannot report on an empty evaluation set".into(),
            ));
        }
        let mut groups: BTreeMap<i32, Vec<SampleMetrics>> = BTreeMap::new();
        for (snr, m) in samples {
            groups.entry(*snr).or_default().push(*m);
        }
        let rows = groups
            .iter()
            .map(|(snr, ms)| mean_row(Some(*snr), ms))
            .collect();
        let all: Vec<SampleMetrics> = samples.iter().map(|(_, m)| *m).collect();
        Ok(Self {
            rows,
            all: mean_row(None, &all),
        })
    }
}

fn mean_row(snr_db: Option<i32>, ms: &[SampleMetrics]) -> MetricsRow {
    let n = ms.len() as f64;
    MetricsRow {
        snr_db,
        rrmse_temporal: ms.iter().map(|m| m.rrmse_temporal).sum::<f64>() / n,
        rrmse_spectral: ms.iter().map(|m| m.rrmse_spectral).sum::<f64>() / n,
        cc: ms.iter().map(|m| m.cc).sum::<f64>() / n,
        n_samples: ms.len(),
    }
}

/// Denoises every sample in `batch`-sized chunks and scores it against the
/// clean reference, all in the normalized domain.
pub fn sample_metrics(
    params: &ModelParams,
    cfg: &ModelConfig,
    data: &Dataset,
    batch: usize,
) -> Result<Vec<(i32, SampleMetrics)>> {
    if data.seq_len != cfg.seq_len {
        return Err(Error::Config(format!(
            "model seq_len {} does not match dataset seq_len {}",
            cfg.seq_len, data.seq_len
        )));
    }
    let mut out = Vec::with_capacity(data.samples.len());
    for chunk in data.samples.chunks(batch.max(1)) {
        let mut flat = Vec::with_capacity(chunk.len() * data.seq_len);
        for s in chunk {
            flat.extend_from_slice(&s.noisy);
        }
        let pred = predict(
            params,
            cfg,
            &Tensor::new([chunk.len(), data.seq_len], flat)?,
        )?;
        for (s, xhat) in chunk.iter().zip(pred.data().chunks(data.seq_len)) {
            out.push((s.snr_db, SampleMetrics::compute(xhat, &s.clean)?));
        }
    }
    Ok(out)
}

/// Full report for a trained model over a dataset.
pub fn evaluate(params: &ModelParams, cfg: &ModelConfig, data: &Dataset) -> Result<MetricsReport> {
    MetricsReport::aggregate(&sample_metrics(params, cfg, data, 32)?)
}

/// Report for the identity map `x̂ = y`.
pub fn evaluate_identity(data: &Dataset) -> Result<MetricsReport> {
    let per: Result<Vec<_>> = data
        .samples
        .iter()
        .map(|s| Ok((s.snr_db, SampleMetrics::compute(&s.noisy, &s.clean)?)))
        .collect();
    MetricsReport::aggregate(&per?)
}
