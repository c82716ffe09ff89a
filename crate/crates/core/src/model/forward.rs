use serde::{Deserialize, Serialize};

use super::fusion::{alpha_schedule, fuse_cached, slot_validity, FusionCache};
use super::ToyModel;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::spectral::similarity_matrix;
use crate::types::{SpectralProfile, TextCondition, TokenState};

pub use super::fusion::SpectralPrior;

pub(crate) const LN_EPS: f64 = 1e-5;

/// Attention maps and fused pre-softmax logits, indexed `[layer][head]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub maps: Vec<Vec<Matrix>>,
    pub fused_logits: Vec<Vec<Matrix>>,
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    pub xhat: Matrix,
    pub rstd: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct HeadCache {
    pub probs: Matrix,
    pub fusion: Option<FusionCache>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub ln1: LnCache,
    pub a: Matrix,
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    pub heads: Vec<HeadCache>,
    pub o: Matrix,
    pub ln2: LnCache,
    pub b: Matrix,
    pub u: Matrix,
    pub g: Matrix,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) token_rows: Vec<usize>,
    pub(crate) condition: Vec<f64>,
    pub(crate) keys: Vec<bool>,
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) lnf: LnCache,
    pub(crate) y: Matrix,
}

pub(crate) fn layer_norm(x: &Matrix, g: &Matrix, b: &Matrix) -> (Matrix, LnCache) {
    let d = x.cols();
    let mut out = Matrix::zeros(x.rows(), d);
    let mut xhat = Matrix::zeros(x.rows(), d);
    let mut rstd = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(r);
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat.set(i, j, h);
            out.set(i, j, h * g.get(0, j) + b.get(0, j));
        }
    }
    (out, LnCache { xhat, rstd })
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let th = inner.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Softmax over the keys flagged valid; other entries get probability 0.
pub(crate) fn masked_softmax(row: &[f64], keys: &[bool]) -> Vec<f64> {
    let max = row
        .iter()
        .zip(keys)
        .filter(|(_, &k)| k)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = row
        .iter()
        .zip(keys)
        .map(|(x, &k)| if k { (x - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

fn add_bias(m: &mut Matrix, b: &Matrix) {
    for i in 0..m.rows() {
        for (x, bb) in m.row_mut(i).iter_mut().zip(b.row(0)) {
            *x += bb;
        }
    }
}

/// Full forward pass returning logits (`T × V`), the backprop cache and the
/// attention record. `prior = None` runs without any fusion code.
pub fn forward_with_cache(
    model: &ToyModel,
    tokens: &TokenState,
    condition: &TextCondition,
    prior: Option<&SpectralPrior>,
    alpha0: f64,
) -> Result<(Matrix, ForwardCache, AttentionRecord)> {
    let shape = &model.shape;
    let p = &model.params;
    let t = tokens.len();
    if t == 0 || t > shape.max_len {
        return Err(Error::DimMismatch {
            expected: shape.max_len,
            got: t,
        });
    }
    if condition.dim() != shape.cond_dim {
        return Err(Error::DimMismatch {
            expected: shape.cond_dim,
            got: condition.dim(),
        });
    }
    if let Some(pr) = prior {
        if pr.len() != t {
            return Err(Error::DimMismatch {
                expected: t,
                got: pr.len(),
            });
        }
    }
    let d = shape.dim;
    let heads = shape.heads;
    let dh = shape.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let mut token_rows = Vec::with_capacity(t);
    for (tok, &ok) in tokens.tokens.iter().zip(&tokens.valid) {
        let row = match tok {
            Some(v) if *v < shape.vocab => *v,
            Some(v) if ok => {
                return Err(Error::TokenOutOfRange {
                    token: *v,
                    vocab: shape.vocab,
                })
            }
            _ => shape.mask_row(),
        };
        token_rows.push(row);
    }

    let n = t + 1;
    let mut x = Matrix::zeros(n, d);
    let c = condition.vector();
    for j in 0..d {
        let mut acc = p.cond_b.get(0, j);
        for (e, &ce) in c.iter().enumerate() {
            acc += ce * p.cond_w.get(e, j);
        }
        x.set(0, j, acc);
    }
    for (i, &row) in token_rows.iter().enumerate() {
        for j in 0..d {
            x.set(i + 1, j, p.tok_emb.get(row, j) + p.pos_emb.get(i, j));
        }
    }

    let keys = slot_validity(&tokens.valid);
    let mut record = AttentionRecord {
        maps: Vec::with_capacity(shape.layers),
        fused_logits: Vec::with_capacity(shape.layers),
    };
    let mut caches = Vec::with_capacity(shape.layers);
    for (l, lp) in p.layers.iter().enumerate() {
        let alpha = alpha_schedule(alpha0, l);
        let (a, ln1) = layer_norm(&x, &lp.ln1_g, &lp.ln1_b);
        let q = a.matmul(&lp.wq);
        let k = a.matmul(&lp.wk);
        let v = a.matmul(&lp.wv);
        let mut o = Matrix::zeros(n, d);
        let mut head_caches = Vec::with_capacity(heads);
        let mut maps = Vec::with_capacity(heads);
        let mut fused_all = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = h * dh..(h + 1) * dh;
            let logits = Matrix::from_fn(n, n, |i, j| {
                let qi = &q.row(i)[cols.clone()];
                let kj = &k.row(j)[cols.clone()];
                qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale
            });
            let (fused, fusion) = match prior {
                Some(pr) => fuse_cached(&logits, pr, alpha, &keys),
                None => (logits, None),
            };
            let mut probs = Matrix::zeros(n, n);
            for i in 0..n {
                probs.row_mut(i).copy_from_slice(&masked_softmax(fused.row(i), &keys));
            }
            for i in 0..n {
                for j in 0..n {
                    let pij = probs.get(i, j);
                    if pij == 0.0 {
                        continue;
                    }
                    for (c_, col) in cols.clone().enumerate() {
                        let cur = o.get(i, h * dh + c_);
                        o.set(i, h * dh + c_, cur + pij * v.get(j, col));
                    }
                }
            }
            maps.push(probs.clone());
            fused_all.push(fused);
            head_caches.push(HeadCache { probs, fusion });
        }
        let attn_out = o.matmul(&lp.wo);
        x.add_assign(&attn_out);

        let (b, ln2) = layer_norm(&x, &lp.ln2_g, &lp.ln2_b);
        let mut u = b.matmul(&lp.w1);
        add_bias(&mut u, &lp.b1);
        let g = Matrix::from_vec(u.rows(), u.cols(), u.as_slice().iter().map(|&z| gelu(z)).collect())?;
        let mut ff = g.matmul(&lp.w2);
        add_bias(&mut ff, &lp.b2);
        x.add_assign(&ff);

        if !x.is_finite() {
            return Err(Error::NonFinite("hidden state"));
        }
        record.maps.push(maps);
        record.fused_logits.push(fused_all);
        caches.push(LayerCache {
            ln1,
            a,
            q,
            k,
            v,
            heads: head_caches,
            o,
            ln2,
            b,
            u,
            g,
            alpha,
        });
    }

    let motion = Matrix::from_fn(t, d, |i, j| x.get(i + 1, j));
    let (y, lnf) = layer_norm(&motion, &p.lnf_g, &p.lnf_b);
    let mut logits = y.matmul(&p.w_out);
    add_bias(&mut logits, &p.b_out);
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits"));
    }
    Ok((
        logits,
        ForwardCache {
            token_rows,
            condition: c.to_vec(),
            keys,
            layers: caches,
            lnf,
            y,
        },
        record,
    ))
}

/// Forward pass with motion-aware attention when a spectral profile is given.
pub fn attention_forward(
    model: &ToyModel,
    corrupted: &TokenState,
    condition: &TextCondition,
    profile: Option<&SpectralProfile>,
    config: &Config,
) -> Result<(Matrix, AttentionRecord)> {
    let prior = profile.map(|pr| SpectralPrior::new(&similarity_matrix(pr, config.tau)));
    let (logits, _, record) =
        forward_with_cache(model, corrupted, condition, prior.as_ref(), config.alpha0)?;
    Ok((logits, record))
}

pub(crate) fn log_softmax_at(row: &[f64], target: usize) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row[target] - lse
}

/// Mean negative log-likelihood of the targets over positions in `loss_mask`.
pub fn masked_cross_entropy(logits: &Matrix, targets: &[usize], loss_mask: &[bool]) -> Result<f64> {
    if targets.len() != logits.rows() || loss_mask.len() != logits.rows() {
        return Err(Error::DimMismatch {
            expected: logits.rows(),
            got: targets.len().min(loss_mask.len()),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, (&tgt, &m)) in targets.iter().zip(loss_mask).enumerate() {
        if !m {
            continue;
        }
        if tgt >= logits.cols() {
            return Err(Error::TokenOutOfRange {
                token: tgt,
                vocab: logits.cols(),
            });
        }
        total -= log_softmax_at(logits.row(i), tgt);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(total / count as f64)
}
