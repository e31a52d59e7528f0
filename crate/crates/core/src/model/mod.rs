//! The denoising network: patch embedding, stacked DiR blocks (pre-norm,
//! multi-scale retention, FFN, residuals) and a per-token output head.

mod check;
mod config;
mod network;
mod params;

pub use check::gradcheck_model;
pub use config::ModelConfig;
pub use network::{
    decay_matrix, dir_block, forward, head_gammas, multi_scale_retention, patchify, predict,
    retention, retention_scores, signal_embedding, unpatchify,
};
pub use params::{BlockWeights, HeadWeights, ModelParams, MsrWeights, ParamKind, Weights};
