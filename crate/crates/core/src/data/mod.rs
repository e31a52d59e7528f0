//! SNR-controlled mixing, σ_y normalization, synthetic sources and
//! train/test set construction.

mod dataset;
mod mixing;
mod synth;
#[cfg(test)]
mod tests;

pub use dataset::{
    assemble, build_dataset, expand_pair, plan_pairs, BuildSpec, BuiltDataset, Dataset, PairPlan,
    Split,
};
pub use mixing::{lambda_for_snr, measure_snr, mix_pair, rms, std_pop, SamplePair};
pub use synth::{
    synth_clean, synth_emg_noise, synth_eog_noise, CleanSynthConfig, NoiseKind, MIN_LEN,
    SAMPLE_RATE,
};
