//! A small masked-token transformer whose attention logits can be blended with a
//! spectral similarity prior, trained with hand-derived gradients.
//!
//! Layout: the projected text condition occupies slot 0, motion tokens follow at
//! slots `1..=T`. Each layer is pre-norm attention followed by a pre-norm GELU
//! feed-forward block, both residual. A final layer norm and a linear head give
//! `V`-way logits for every motion slot.

mod backward;
mod forward;
mod fusion;
mod train;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream_rng, Stream};

pub use backward::{backward, Gradients};
pub use forward::{attention_forward, forward_with_cache, masked_cross_entropy, AttentionRecord, SpectralPrior};
pub use fusion::{alpha_schedule, fuse_logits, FUSION_BYPASS};
pub use train::{train, TrainSample, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    /// Number of real tokens; the embedding table has one extra row for MASK.
    pub vocab: usize,
    pub max_len: usize,
    pub cond_dim: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
}

impl ModelShape {
    pub fn from_config(config: &Config, vocab: usize, max_len: usize, cond_dim: usize) -> Self {
        Self {
            vocab,
            max_len,
            cond_dim,
            dim: config.dim,
            heads: config.heads,
            layers: config.layers,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn mask_row(&self) -> usize {
        self.vocab
    }

    fn check(&self) -> Result<()> {
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::ShapeMismatch(format!(
                "{} heads do not divide width {}",
                self.heads, self.dim
            )));
        }
        if self.vocab < 2 || self.max_len == 0 || self.cond_dim == 0 || self.layers == 0 {
            return Err(Error::ShapeMismatch(format!("degenerate model shape {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub ln1_g: Matrix,
    pub ln1_b: Matrix,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln2_g: Matrix,
    pub ln2_b: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub tok_emb: Matrix,
    pub pos_emb: Matrix,
    pub cond_w: Matrix,
    pub cond_b: Matrix,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Matrix,
    pub lnf_b: Matrix,
    pub w_out: Matrix,
    pub b_out: Matrix,
}

impl Params {
    pub fn zeros(shape: &ModelShape) -> Self {
        let d = shape.dim;
        let layer = || LayerParams {
            ln1_g: Matrix::zeros(1, d),
            ln1_b: Matrix::zeros(1, d),
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            ln2_g: Matrix::zeros(1, d),
            ln2_b: Matrix::zeros(1, d),
            w1: Matrix::zeros(d, 4 * d),
            b1: Matrix::zeros(1, 4 * d),
            w2: Matrix::zeros(4 * d, d),
            b2: Matrix::zeros(1, d),
        };
        Self {
            tok_emb: Matrix::zeros(shape.vocab + 1, d),
            pos_emb: Matrix::zeros(shape.max_len, d),
            cond_w: Matrix::zeros(shape.cond_dim, d),
            cond_b: Matrix::zeros(1, d),
            layers: (0..shape.layers).map(|_| layer()).collect(),
            lnf_g: Matrix::zeros(1, d),
            lnf_b: Matrix::zeros(1, d),
            w_out: Matrix::zeros(d, shape.vocab),
            b_out: Matrix::zeros(1, shape.vocab),
        }
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("tok_emb".into(), &self.tok_emb),
            ("pos_emb".into(), &self.pos_emb),
            ("cond_w".into(), &self.cond_w),
            ("cond_b".into(), &self.cond_b),
        ];
        for (l, p) in self.layers.iter().enumerate() {
            for (name, m) in [
                ("ln1_g", &p.ln1_g),
                ("ln1_b", &p.ln1_b),
                ("wq", &p.wq),
                ("wk", &p.wk),
                ("wv", &p.wv),
                ("wo", &p.wo),
                ("ln2_g", &p.ln2_g),
                ("ln2_b", &p.ln2_b),
                ("w1", &p.w1),
                ("b1", &p.b1),
                ("w2", &p.w2),
                ("b2", &p.b2),
            ] {
                out.push((format!("layer{l}.{name}"), m));
            }
        }
        out.extend([
            ("lnf_g".to_string(), &self.lnf_g),
            ("lnf_b".to_string(), &self.lnf_b),
            ("w_out".to_string(), &self.w_out),
            ("b_out".to_string(), &self.b_out),
        ]);
        out
    }

    /// Mutable view in the same order as [`Params::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = vec![
            &mut self.tok_emb,
            &mut self.pos_emb,
            &mut self.cond_w,
            &mut self.cond_b,
        ];
        for p in self.layers.iter_mut() {
            out.extend([
                &mut p.ln1_g,
                &mut p.ln1_b,
                &mut p.wq,
                &mut p.wk,
                &mut p.wv,
                &mut p.wo,
                &mut p.ln2_g,
                &mut p.ln2_b,
                &mut p.w1,
                &mut p.b1,
                &mut p.w2,
                &mut p.b2,
            ]);
        }
        out.extend([
            &mut self.lnf_g,
            &mut self.lnf_b,
            &mut self.w_out,
            &mut self.b_out,
        ]);
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// `self -= lr · grads`
    pub fn sgd_step(&mut self, grads: &Params, lr: f64) {
        for (p, (_, g)) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            for (w, dw) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *w -= lr * dw;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub shape: ModelShape,
    pub params: Params,
}

impl ToyModel {
    /// Random initialization: N(0, 0.5²) embeddings, N(0, 1/fan_in) projections,
    /// unit layer-norm gains and zero biases.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        shape.check()?;
        let mut rng = stream_rng(seed, Stream::Init, 0);
        let mut params = Params::zeros(&shape);
        let mut fill = |m: &mut Matrix, std: f64| {
            let dist = Normal::new(0.0, std).expect("positive std");
            for v in m.as_mut_slice() {
                *v = dist.sample(&mut rng);
            }
        };
        let d = shape.dim as f64;
        fill(&mut params.tok_emb, 0.5);
        fill(&mut params.pos_emb, 0.5);
        fill(&mut params.cond_w, 1.0 / (shape.cond_dim as f64).sqrt());
        for l in params.layers.iter_mut() {
            for m in [&mut l.wq, &mut l.wk, &mut l.wv, &mut l.wo, &mut l.w1] {
                fill(m, 1.0 / d.sqrt());
            }
            fill(&mut l.w2, 1.0 / (4.0 * d).sqrt());
            l.ln1_g.as_mut_slice().fill(1.0);
            l.ln2_g.as_mut_slice().fill(1.0);
        }
        params.lnf_g.as_mut_slice().fill(1.0);
        fill(&mut params.w_out, 1.0 / d.sqrt());
        Ok(Self { shape, params })
    }

    pub fn from_params(shape: ModelShape, params: Params) -> Result<Self> {
        shape.check()?;
        let reference = Params::zeros(&shape);
        for ((name, a), (_, b)) in params.tensors().iter().zip(reference.tensors()) {
            if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
                return Err(Error::ShapeMismatch(format!(
                    "{name} is {}x{}, expected {}x{}",
                    a.rows(),
                    a.cols(),
                    b.rows(),
                    b.cols()
                )));
            }
        }
        if params.tensors().len() != reference.tensors().len() {
            return Err(Error::ShapeMismatch("wrong number of tensors".into()));
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self { shape, params })
    }
}
