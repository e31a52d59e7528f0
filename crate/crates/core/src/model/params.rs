use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::ModelConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::rng::seeded;
use crate::{Error, Result};

/// Role of a learnable tensor; decides whether weight decay applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Linear weight matrix (decayed).
    Weight,
    Bias,
    /// Norm scale or shift.
    Norm,
}

/// Per-head projections `W_Q`, `W_K`, `W_V` (each `d×d`).
#[derive(Clone, Debug, PartialEq)]
pub struct HeadWeights<T> {
    pub wq: T,
    pub wk: T,
    pub wv: T,
}

/// Multi-scale retention: per-head projections, gate `W_G`, output `W_O` and
/// the GroupNorm affine.
#[derive(Clone, Debug, PartialEq)]
pub struct MsrWeights<T> {
    pub heads: Vec<HeadWeights<T>>,
    pub wg: T,
    pub wo: T,
    pub gn_gamma: T,
    pub gn_beta: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights<T> {
    pub ln1_gamma: T,
    pub ln1_beta: T,
    pub msr: MsrWeights<T>,
    pub ln2_gamma: T,
    pub ln2_beta: T,
    pub ffn_w1: T,
    pub ffn_b1: T,
    pub ffn_w2: T,
    pub ffn_b2: T,
}

/// Every learnable quantity of the network, generic over storage so the
/// same layout holds plain tensors ([`ModelParams`]) or tape handles.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<T> {
    pub embed_w: T,
    pub embed_b: T,
    pub blocks: Vec<BlockWeights<T>>,
    pub out_w: T,
    pub out_b: T,
}

pub type ModelParams = Weights<Tensor>;

impl<T> Weights<T> {
    /// Maps every entry in canonical order, passing its dotted name and kind.
    pub fn try_map<'a, U, E>(
        &'a self,
        f: &mut impl FnMut(&str, ParamKind, &'a T) -> Result<U, E>,
    ) -> Result<Weights<U>, E> {
        use ParamKind::*;
        let embed_w = f("embed.w", Weight, &self.embed_w)?;
        let embed_b = f("embed.b", Bias, &self.embed_b)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (l, b) in self.blocks.iter().enumerate() {
            let p = |s: &str| format!("blocks.{l}.{s}");
            let mut heads = Vec::with_capacity(b.msr.heads.len());
            for (h, hw) in b.msr.heads.iter().enumerate() {
                heads.push(HeadWeights {
                    wq: f(&p(&format!("msr.heads.{h}.wq")), Weight, &hw.wq)?,
                    wk: f(&p(&format!("msr.heads.{h}.wk")), Weight, &hw.wk)?,
                    wv: f(&p(&format!("msr.heads.{h}.wv")), Weight, &hw.wv)?,
                });
            }
            blocks.push(BlockWeights {
                ln1_gamma: f(&p("ln1.gamma"), Norm, &b.ln1_gamma)?,
                ln1_beta: f(&p("ln1.beta"), Norm, &b.ln1_beta)?,
                msr: MsrWeights {
                    heads,
                    wg: f(&p("msr.wg"), Weight, &b.msr.wg)?,
                    wo: f(&p("msr.wo"), Weight, &b.msr.wo)?,
                    gn_gamma: f(&p("msr.gn.gamma"), Norm, &b.msr.gn_gamma)?,
                    gn_beta: f(&p("msr.gn.beta"), Norm, &b.msr.gn_beta)?,
                },
                ln2_gamma: f(&p("ln2.gamma"), Norm, &b.ln2_gamma)?,
                ln2_beta: f(&p("ln2.beta"), Norm, &b.ln2_beta)?,
                ffn_w1: f(&p("ffn.w1"), Weight, &b.ffn_w1)?,
                ffn_b1: f(&p("ffn.b1"), Bias, &b.ffn_b1)?,
                ffn_w2: f(&p("ffn.w2"), Weight, &b.ffn_w2)?,
                ffn_b2: f(&p("ffn.b2"), Bias, &b.ffn_b2)?,
            });
        }
        Ok(Weights {
            embed_w,
            embed_b,
            blocks,
            out_w: f("out.w", Weight, &self.out_w)?,
            out_b: f("out.b", Bias, &self.out_b)?,
        })
    }

    pub fn map<'a, U>(&'a self, mut f: impl FnMut(&str, ParamKind, &'a T) -> U) -> Weights<U> {
        match self.try_map::<U, core::convert::Infallible>(&mut |n, k, t| Ok(f(n, k, t))) {
            Ok(w) => w,
            Err(e) => match e {},
        }
    }

    /// Rebuilds this layout from items supplied in canonical order. Returns
    /// `None` when the iterator runs short.
    pub fn rebuild<U>(&self, items: impl IntoIterator<Item = U>) -> Option<Weights<U>> {
        let mut it = items.into_iter();
        self.try_map(&mut |_, _, _| it.next().ok_or(())).ok()
    }

    /// `(name, kind, entry)` triples in canonical order.
    pub fn entries(&self) -> Vec<(String, ParamKind, &T)> {
        let mut out = Vec::new();
        self.map(|n, k, t| out.push((String::from(n), k, t)));
        out
    }

    /// Mutable access in canonical order.
    pub fn entries_mut(&mut self) -> Vec<(ParamKind, &mut T)> {
        use ParamKind::*;
        let mut out: Vec<(ParamKind, &mut T)> = Vec::new();
        let Weights {
            embed_w,
            embed_b,
            blocks,
            out_w,
            out_b,
        } = self;
        out.push((Weight, embed_w));
        out.push((Bias, embed_b));
        for b in blocks.iter_mut() {
            let BlockWeights {
                ln1_gamma,
                ln1_beta,
                msr,
                ln2_gamma,
                ln2_beta,
                ffn_w1,
                ffn_b1,
                ffn_w2,
                ffn_b2,
            } = b;
            let MsrWeights {
                heads,
                wg,
                wo,
                gn_gamma,
                gn_beta,
            } = msr;
            for h in heads.iter_mut() {
                out.push((Weight, &mut h.wq));
                out.push((Weight, &mut h.wk));
                out.push((Weight, &mut h.wv));
            }
            out.push((Norm, ln1_gamma));
            out.push((Norm, ln1_beta));
            out.push((Weight, wg));
            out.push((Weight, wo));
            out.push((Norm, gn_gamma));
            out.push((Norm, gn_beta));
            out.push((Norm, ln2_gamma));
            out.push((Norm, ln2_beta));
            out.push((Weight, ffn_w1));
            out.push((Bias, ffn_b1));
            out.push((Weight, ffn_w2));
            out.push((Bias, ffn_b2));
        }
        out.push((Weight, out_w));
        out.push((Bias, out_b));
        out
    }
}

impl ModelParams {
    /// Expected shape of every entry under `cfg`, in canonical order.
    pub fn shapes(cfg: &ModelConfig) -> Weights<Vec<usize>> {
        let (p, dm, d, f) = (cfg.patch_size, cfg.d_model, cfg.head_dim(), cfg.ffn_dim());
        let v = |s: &[usize]| s.to_vec();
        Weights {
            embed_w: v(&[p, dm]),
            embed_b: v(&[dm]),
            blocks: (0..cfg.layers)
                .map(|_| BlockWeights {
                    ln1_gamma: v(&[dm]),
                    ln1_beta: v(&[dm]),
                    msr: MsrWeights {
                        heads: (0..cfg.heads)
                            .map(|_| HeadWeights {
                                wq: v(&[d, d]),
                                wk: v(&[d, d]),
                                wv: v(&[d, d]),
                            })
                            .collect(),
                        wg: v(&[dm, dm]),
                        wo: v(&[dm, dm]),
                        gn_gamma: v(&[dm]),
                        gn_beta: v(&[dm]),
                    },
                    ln2_gamma: v(&[dm]),
                    ln2_beta: v(&[dm]),
                    ffn_w1: v(&[dm, f]),
                    ffn_b1: v(&[f]),
                    ffn_w2: v(&[f, dm]),
                    ffn_b2: v(&[dm]),
                })
                .collect(),
            out_w: v(&[dm, p]),
            out_b: v(&[p]),
        }
    }

    /// Linear weights ~ U(−√(1/fan_in), √(1/fan_in)), biases and norm shifts
    /// zero, norm scales one. Deterministic in `seed`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seeded(seed);
        let shapes = Self::shapes(cfg);
        Ok(shapes.map(|name, kind, shape| match kind {
            ParamKind::Weight => {
                let bound = libm::sqrt(1.0 / shape[0] as f64);
                Tensor::from_fn(shape.clone(), |_| rng.random_range(-bound..=bound))
            }
            ParamKind::Norm if name.ends_with("gamma") => Tensor::full(shape.clone(), 1.0),
            _ => Tensor::zeros(shape.clone()),
        }))
    }

    /// Checks every entry against the shapes implied by `cfg` and for finiteness.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let want = Self::shapes(cfg);
        if want.blocks.len() != self.blocks.len()
            || want
                .blocks
                .iter()
                .zip(&self.blocks)
                .any(|(a, b)| a.msr.heads.len() != b.msr.heads.len())
        {
            return Err(Error::Config(format!(
                "parameter layout ({} blocks) does not match config ({} layers, {} heads)",
                self.blocks.len(),
                cfg.layers,
                cfg.heads
            )));
        }
        for ((name, _, w), (_, _, t)) in want.entries().into_iter().zip(self.entries()) {
            if t.shape() != w.as_slice() {
                return Err(Error::Config(format!(
                    "{name}: shape {:?}, config expects {w:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(())
    }

    /// Records every entry on `tape`, as leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Weights<Var> {
        self.map(|_, _, t| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
    }

    pub fn num_scalars(&self) -> usize {
        self.entries().iter().map(|(_, _, t)| t.len()).sum()
    }
}
