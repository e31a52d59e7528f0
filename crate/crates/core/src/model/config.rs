use alloc::format;

use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Samples per input segment.
    pub seq_len: usize,
    /// Samples merged into one token.
    pub patch_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    /// FFN hidden width as a multiple of `d_model`.
    pub ffn_mult: usize,
    pub eps_ln: f64,
    pub eps_gn: f64,
    /// Adds `1/√d` score scaling and row-sum clamping to retention.
    pub stabilized_retention: bool,
    pub theta_base: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 512,
            patch_size: 16,
            d_model: 64,
            heads: 4,
            layers: 2,
            ffn_mult: 2,
            eps_ln: 1e-5,
            eps_gn: 1e-5,
            stabilized_retention: false,
            theta_base: 10_000.0,
        }
    }
}

impl ModelConfig {
    pub fn new(
        seq_len: usize,
        patch_size: usize,
        d_model: usize,
        heads: usize,
        layers: usize,
    ) -> Result<Self> {
        let cfg = Self {
            seq_len,
            patch_size,
            d_model,
            heads,
            layers,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: alloc::string::String| Err(Error::Config(m));
        if self.patch_size == 0 || self.seq_len == 0 {
            return fail(format!(
                "seq_len ({}) and patch ({}) must be positive",
                self.seq_len, self.patch_size
            ));
        }
        if self.seq_len % self.patch_size != 0 {
            return fail(format!(
                "seq_len not divisible by patch ({} % {} != 0)",
                self.seq_len, self.patch_size
            ));
        }
        if self.heads == 0 || self.d_model == 0 || self.d_model % self.heads != 0 {
            return fail(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if self.head_dim() % 2 != 0 {
            return fail(format!(
                "head dim {} must be even for pairwise rotation",
                self.head_dim()
            ));
        }
        if self.layers == 0 {
            return fail("layers must be at least 1".into());
        }
        if self.ffn_mult == 0 {
            return fail("ffn_mult must be at least 1".into());
        }
        if !(self.eps_ln > 0.0 && self.eps_gn > 0.0) {
            return fail(format!(
                "norm eps must be positive (ln {}, gn {})",
                self.eps_ln, self.eps_gn
            ));
        }
        if !(self.theta_base > 0.0) {
            return fail(format!(
                "theta_base must be positive, got {}",
                self.theta_base
            ));
        }
        Ok(())
    }

    /// Token count `seq_len / patch_size`.
    pub fn tokens(&self) -> usize {
        self.seq_len / self.patch_size
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        self.ffn_mult * self.d_model
    }
}
