use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::mixing::{mix_pair, SamplePair};
use super::synth::{synth_clean, CleanSynthConfig, NoiseKind};
use crate::rng::{derive, derive_seed};
use crate::{Error, Result};

/// An in-memory collection of normalized sample pairs sharing one length.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub seq_len: usize,
    pub snr_grid: Vec<i32>,
    pub samples: Vec<SamplePair>,
}

impl Dataset {
    /// Checks lengths, positivity of `sigma_y` and finiteness of every value.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.clean.len() != self.seq_len || s.noisy.len() != self.seq_len {
                return Err(Error::Dimension(format!(
                    "sample {i}: lengths {}/{} but seq_len is {}",
                    s.clean.len(),
                    s.noisy.len(),
                    self.seq_len
                )));
            }
            if !(s.sigma_y > 0.0 && s.sigma_y.is_finite()) {
                return Err(Error::Degenerate(format!(
                    "sample {i}: sigma_y = {}",
                    s.sigma_y
                )));
            }
            if s.clean.iter().chain(&s.noisy).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("sample {i}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample count per grid level, in grid order.
    pub fn counts_per_snr(&self) -> Vec<(i32, usize)> {
        self.snr_grid
            .iter()
            .map(|&g| (g, self.samples.iter().filter(|s| s.snr_db == g).count()))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Everything needed to synthesize a train/test pair of datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildSpec {
    pub clean_sources: usize,
    pub noise_sources: usize,
    pub noise_kind: NoiseKind,
    pub snr_grid: Vec<i32>,
    pub split_ratio: f64,
    pub seq_len: usize,
    pub seed: u64,
    pub clean: CleanSynthConfig,
}

impl BuildSpec {
    /// `pairs` clean and `pairs` noise sources over an integer SNR range.
    pub fn new(
        pairs: usize,
        noise_kind: NoiseKind,
        snr_min: i32,
        snr_max: i32,
        seq_len: usize,
        seed: u64,
    ) -> Self {
        Self {
            clean_sources: pairs,
            noise_sources: pairs,
            noise_kind,
            snr_grid: (snr_min..=snr_max).collect(),
            split_ratio: 0.8,
            seq_len,
            seed,
            clean: CleanSynthConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split ratio must lie in (0, 1), got {}",
                self.split_ratio
            )));
        }
        if self.snr_grid.is_empty() {
            return Err(Error::Config("SNR grid is empty".into()));
        }
        if self.clean_sources < 2 {
            return Err(Error::Config(
                "need at least two clean sources to form both splits".into(),
            ));
        }
        if self.noise_sources == 0 {
            return Err(Error::Config("need at least one noise source".into()));
        }
        Ok(())
    }

    fn clean_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, 2 * index as u64)
    }

    fn noise_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, 2 * index as u64 + 1)
    }
}

/// One clean/noise pairing and the split it belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairPlan {
    pub pair: usize,
    pub clean_index: usize,
    pub noise_index: usize,
    pub split: Split,
}

/// Pairs sources (cycling the shorter list) and assigns each pair to a split
/// through its clean source, so no clean segment lands in both splits.
pub fn plan_pairs(spec: &BuildSpec) -> Result<Vec<PairPlan>> {
    spec.validate()?;
    let c = spec.clean_sources;
    let n_train = ((spec.split_ratio * c as f64).round() as usize).clamp(1, c - 1);
    let mut order: Vec<usize> = (0..c).collect();
    order.shuffle(&mut derive(spec.seed, u64::MAX));
    let mut is_train = alloc::vec![false; c];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    Ok((0..c.max(spec.noise_sources))
        .map(|pair| {
            let clean_index = pair % c;
            PairPlan {
                pair,
                clean_index,
                noise_index: pair % spec.noise_sources,
                split: if is_train[clean_index] {
                    Split::Train
                } else {
                    Split::Test
                },
            }
        })
        .collect())
}

/// Mixes one pair at every grid level. Degenerate mixtures are returned as
/// skipped SNR labels instead of failing the whole build.
pub fn expand_pair(spec: &BuildSpec, plan: &PairPlan) -> Result<(Vec<SamplePair>, Vec<i32>)> {
    let clean = synth_clean(spec.seq_len, spec.clean_seed(plan.clean_index), &spec.clean)?;
    let noise = spec
        .noise_kind
        .generate(spec.seq_len, spec.noise_seed(plan.noise_index))?;
    let mut out = Vec::with_capacity(spec.snr_grid.len());
    let mut skipped = Vec::new();
    for &snr in &spec.snr_grid {
        match mix_pair(&clean, &noise, snr) {
            Ok(s) => out.push(s),
            Err(Error::Degenerate(_)) => skipped.push(snr),
            Err(e) => return Err(e),
        }
    }
    Ok((out, skipped))
}

/// Train and test sets plus the bookkeeping needed to audit them.
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub plans: Vec<PairPlan>,
    /// `(pair, snr_db)` mixtures dropped because `σ_y` was zero.
    pub skipped: Vec<(usize, i32)>,
}

impl BuiltDataset {
    /// Clean-source indices used by one split, ascending and deduplicated.
    pub fn clean_indices(&self, split: Split) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .plans
            .iter()
            .filter(|p| p.split == split)
            .map(|p| p.clean_index)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Collects expanded pairs (in plan order) into the two splits.
pub fn assemble(
    spec: &BuildSpec,
    plans: Vec<PairPlan>,
    expanded: Vec<(Vec<SamplePair>, Vec<i32>)>,
) -> Result<BuiltDataset> {
    if plans.len() != expanded.len() {
        return Err(Error::Contract(format!(
            "{} plans but {} expanded pairs",
            plans.len(),
            expanded.len()
        )));
    }
    let empty = || Dataset {
        seq_len: spec.seq_len,
        snr_grid: spec.snr_grid.clone(),
        samples: Vec::new(),
    };
    let (mut train, mut test, mut skipped) = (empty(), empty(), Vec::new());
    for (plan, (samples, dropped)) in plans.iter().zip(expanded) {
        match plan.split {
            Split::Train => train.samples.extend(samples),
            Split::Test => test.samples.extend(samples),
        }
        skipped.extend(dropped.into_iter().map(|snr| (plan.pair, snr)));
    }
    Ok(BuiltDataset {
        train,
        test,
        plans,
        skipped,
    })
}

/// Synthesizes sources, splits by clean source, then mixes each pair at
/// every SNR level. Bit-reproducible for a fixed spec.
pub fn build_dataset(spec: &BuildSpec) -> Result<BuiltDataset> {
    let plans = plan_pairs(spec)?;
    let expanded = plans
        .iter()
        .map(|p| expand_pair(spec, p))
        .collect::<Result<Vec<_>>>()?;
    assemble(spec, plans, expanded)
}
