use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use super::mixing::rms;
use crate::rng::seeded;
use crate::{Error, Result};

/// Sampling rate of every synthetic segment, in Hz.
pub const SAMPLE_RATE: f64 = 256.0;

/// Shortest segment the generators accept.
pub const MIN_LEN: usize = 16;

/// Shape of the synthetic clean EEG stand-in.
#[derive(Clone, Debug, PartialEq)]
pub struct CleanSynthConfig {
    pub sample_rate: f64,
    pub min_tones: usize,
    pub max_tones: usize,
    pub band_hz: (f64, f64),
    /// Power of the 1/f background relative to the tones, in dB.
    pub background_db: f64,
}

impl Default for CleanSynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            min_tones: 3,
            max_tones: 6,
            band_hz: (4.0, 30.0),
            background_db: -20.0,
        }
    }
}

/// Which artifact family a dataset is contaminated with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Eog,
    Emg,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Eog => "eog",
            NoiseKind::Emg => "emg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eog" => Ok(NoiseKind::Eog),
            "emg" => Ok(NoiseKind::Emg),
            other => Err(Error::Config(format!(
                "unknown noise kind {other:?} (expected eog or emg)"
            ))),
        }
    }

    pub fn generate(self, len: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            NoiseKind::Eog => synth_eog_noise(len, seed),
            NoiseKind::Emg => synth_emg_noise(len, seed),
        }
    }
}

fn check_len(len: usize) -> Result<()> {
    if len < MIN_LEN {
        return Err(Error::Contract(format!(
            "synthetic segments need at least {MIN_LEN} samples, got {len}"
        )));
    }
    Ok(())
}

fn remove_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

fn add_tone(out: &mut [f64], amp: f64, freq: f64, phase: f64, rate: f64) {
    let w = 2.0 * PI * freq / rate;
    for (t, v) in out.iter_mut().enumerate() {
        *v += amp * libm::sin(w * t as f64 + phase);
    }
}

/// Clean EEG stand-in: a handful of random tones in the configured band over
/// a weak 1/f background, with the sample mean removed.
pub fn synth_clean(len: usize, seed: u64, cfg: &CleanSynthConfig) -> Result<Vec<f64>> {
    check_len(len)?;
    if cfg.min_tones == 0 || cfg.min_tones > cfg.max_tones || !(cfg.band_hz.0 < cfg.band_hz.1) {
        return Err(Error::Config(format!(
            "invalid clean synthesis settings {cfg:?}"
        )));
    }
    let mut rng = seeded(seed);
    let mut tones = alloc::vec![0.0; len];
    for _ in 0..rng.random_range(cfg.min_tones..=cfg.max_tones) {
        let freq = rng.random_range(cfg.band_hz.0..cfg.band_hz.1);
        let amp = rng.random_range(0.5..1.5);
        let phase = rng.random_range(0.0..2.0 * PI);
        add_tone(&mut tones, amp, freq, phase, cfg.sample_rate);
    }

    // 1/f power: amplitude ∝ f^(-1/2) on every resolvable bin
    let mut background = alloc::vec![0.0; len];
    for k in 1..=len / 2 {
        let freq = k as f64 * cfg.sample_rate / len as f64;
        let phase = rng.random_range(0.0..2.0 * PI);
        add_tone(
            &mut background,
            1.0 / libm::sqrt(freq),
            freq,
            phase,
            cfg.sample_rate,
        );
    }
    let gain = rms(&tones)? * libm::pow(10.0, cfg.background_db / 20.0) / rms(&background)?;
    let mut out: Vec<f64> = tones
        .iter()
        .zip(&background)
        .map(|(a, b)| a + gain * b)
        .collect();
    remove_mean(&mut out);
    Ok(out)
}

/// Ocular artifact stand-in: large slow waves (0.5–4 Hz) plus a few smoothed
/// steps, mean removed.
pub fn synth_eog_noise(len: usize, seed: u64) -> Result<Vec<f64>> {
    check_len(len)?;
    let mut rng = seeded(seed);
    let mut out = alloc::vec![0.0; len];
    for _ in 0..rng.random_range(1..=3usize) {
        let freq = rng.random_range(0.5..4.0);
        let amp = rng.random_range(2.0..5.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        add_tone(&mut out, amp, freq, phase, SAMPLE_RATE);
    }
    for _ in 0..rng.random_range(1..=3usize) {
        let at = rng.random_range(0.0..len as f64);
        let height = rng.random_range(-4.0..4.0);
        let width = rng.random_range(0.05..0.2) * SAMPLE_RATE;
        for (t, v) in out.iter_mut().enumerate() {
            *v += height * 0.5 * (1.0 + libm::tanh((t as f64 - at) / width));
        }
    }
    remove_mean(&mut out);
    Ok(out)
}

/// Muscle artifact stand-in: random-phase noise restricted to 20–80 Hz,
/// modulated by a slow burst envelope, mean removed.
pub fn synth_emg_noise(len: usize, seed: u64) -> Result<Vec<f64>> {
    check_len(len)?;
    let mut rng = seeded(seed);
    let mut carrier = alloc::vec![0.0; len];
    let df = SAMPLE_RATE / len as f64;
    let mut k = libm::ceil(20.0 / df) as usize;
    while k as f64 * df <= 80.0 && k <= len / 2 {
        // Rayleigh magnitude with uniform phase is a Gaussian bin
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let amp = libm::sqrt(-2.0 * libm::log(u));
        let phase = rng.random_range(0.0..2.0 * PI);
        add_tone(&mut carrier, amp, k as f64 * df, phase, SAMPLE_RATE);
        k += 1;
    }
    let mut envelope = alloc::vec![0.3; len];
    for _ in 0..rng.random_range(1..=3usize) {
        let center = rng.random_range(0.0..len as f64);
        let half = rng.random_range(0.1..0.4) * SAMPLE_RATE;
        let height = rng.random_range(0.5..1.5);
        for (t, e) in envelope.iter_mut().enumerate() {
            let d = (t as f64 - center) / half;
            if d.abs() < 1.0 {
                *e += height * 0.5 * (1.0 + libm::cos(PI * d));
            }
        }
    }
    let mut out: Vec<f64> = carrier.iter().zip(&envelope).map(|(c, e)| c * e).collect();
    remove_mean(&mut out);
    Ok(out)
}
