//! Reverse-mode gradients of the masked cross-entropy.
//!
//! The spectral prior is a constant input; gradients flow through the z-scoring
//! of the learned logits but not into the similarity matrix.

use super::forward::{forward_with_cache, ForwardCache, LnCache};
use super::fusion::fuse_backward;
use super::{Params, SpectralPrior, ToyModel};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::masking::TrainingExample;
use crate::matrix::Matrix;
use crate::spectral::similarity_matrix;
use crate::types::TextCondition;

pub type Gradients = Params;

fn ln_backward(dy: &Matrix, cache: &LnCache, g: &Matrix, dg: &mut Matrix, db: &mut Matrix) -> Matrix {
    let d = dy.cols();
    let mut dx = Matrix::zeros(dy.rows(), d);
    let mut dxhat = vec![0.0; d];
    for i in 0..dy.rows() {
        let xh = cache.xhat.row(i);
        let row = dy.row(i);
        for j in 0..d {
            dg.as_mut_slice()[j] += row[j] * xh[j];
            db.as_mut_slice()[j] += row[j];
            dxhat[j] = row[j] * g.get(0, j);
        }
        let mean = dxhat.iter().sum::<f64>() / d as f64;
        let mean_x = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let r = cache.rstd[i];
        for j in 0..d {
            dx.set(i, j, r * (dxhat[j] - mean - xh[j] * mean_x));
        }
    }
    dx
}

fn col_sums_into(m: &Matrix, out: &mut Matrix) {
    for row in m.iter_rows() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Loss and parameter gradients for one example.
pub fn backward(model: &ToyModel, example: &TrainingExample, config: &Config) -> Result<(f64, Gradients)> {
    let condition = example
        .condition
        .as_ref()
        .ok_or_else(|| Error::Format("training example has no condition".into()))?;
    let prior = example
        .profile
        .as_ref()
        .map(|pr| SpectralPrior::new(&similarity_matrix(pr, config.tau)));
    backward_with_prior(
        model,
        example,
        condition,
        prior.as_ref(),
        config.alpha0,
    )
}

pub(crate) fn backward_with_prior(
    model: &ToyModel,
    example: &TrainingExample,
    condition: &TextCondition,
    prior: Option<&SpectralPrior>,
    alpha0: f64,
) -> Result<(f64, Gradients)> {
    let (logits, cache, _) =
        forward_with_cache(model, &example.corrupted, condition, prior, alpha0)?;
    let loss = super::masked_cross_entropy(&logits, &example.targets, &example.loss_mask)?;
    let grads = gradients(model, &logits, &cache, &example.targets, &example.loss_mask);
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    Ok((loss, grads))
}

fn gradients(
    model: &ToyModel,
    logits: &Matrix,
    cache: &ForwardCache,
    targets: &[usize],
    loss_mask: &[bool],
) -> Gradients {
    let shape = &model.shape;
    let p = &model.params;
    let mut gr = Params::zeros(shape);
    let t = logits.rows();
    let n = t + 1;
    let d = shape.dim;
    let dh = shape.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let count = loss_mask.iter().filter(|&&m| m).count() as f64;

    let mut dlogits = Matrix::zeros(t, shape.vocab);
    for i in (0..t).filter(|&i| loss_mask[i]) {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
        for j in 0..shape.vocab {
            let pj = (row[j] - max).exp() / z;
            let onehot = if j == targets[i] { 1.0 } else { 0.0 };
            dlogits.set(i, j, (pj - onehot) / count);
        }
    }

    gr.w_out = cache.y.t_matmul(&dlogits);
    col_sums_into(&dlogits, &mut gr.b_out);
    let dy = dlogits.matmul_t(&p.w_out);
    let dmotion = ln_backward(&dy, &cache.lnf, &p.lnf_g, &mut gr.lnf_g, &mut gr.lnf_b);
    let mut dx = Matrix::zeros(n, d);
    for i in 0..t {
        dx.row_mut(i + 1).copy_from_slice(dmotion.row(i));
    }

    for (l, (lp, lc)) in p.layers.iter().zip(&cache.layers).enumerate().rev() {
        let lg = &mut gr.layers[l];

        // feed-forward block
        lg.w2 = lc.g.t_matmul(&dx);
        col_sums_into(&dx, &mut lg.b2);
        let dg = dx.matmul_t(&lp.w2);
        let du = Matrix::from_fn(n, 4 * d, |i, j| {
            dg.get(i, j) * super::forward::gelu_grad(lc.u.get(i, j))
        });
        lg.w1 = lc.b.t_matmul(&du);
        col_sums_into(&du, &mut lg.b1);
        let db = du.matmul_t(&lp.w1);
        let dres = ln_backward(&db, &lc.ln2, &lp.ln2_g, &mut lg.ln2_g, &mut lg.ln2_b);
        dx.add_assign(&dres);

        // attention block
        lg.wo = lc.o.t_matmul(&dx);
        let d_o = dx.matmul_t(&lp.wo);
        let mut dq = Matrix::zeros(n, d);
        let mut dk = Matrix::zeros(n, d);
        let mut dv = Matrix::zeros(n, d);
        for (h, hc) in lc.heads.iter().enumerate() {
            let c0 = h * dh;
            let probs = &hc.probs;
            let mut d_fused = Matrix::zeros(n, n);
            for i in 0..n {
                let mut dp = vec![0.0; n];
                for (j, dpj) in dp.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for c in 0..dh {
                        acc += d_o.get(i, c0 + c) * lc.v.get(j, c0 + c);
                    }
                    *dpj = acc;
                }
                let dot: f64 = (0..n).map(|j| probs.get(i, j) * dp[j]).sum();
                for j in 0..n {
                    d_fused.set(i, j, probs.get(i, j) * (dp[j] - dot));
                }
                for j in 0..n {
                    let pij = probs.get(i, j);
                    if pij == 0.0 {
                        continue;
                    }
                    for c in 0..dh {
                        let cur = dv.get(j, c0 + c);
                        dv.set(j, c0 + c, cur + pij * d_o.get(i, c0 + c));
                    }
                }
            }
            let d_logits = match &hc.fusion {
                Some(fc) => fuse_backward(&d_fused, fc, lc.alpha, &cache.keys),
                None => d_fused,
            };
            for i in 0..n {
                for j in 0..n {
                    let g = d_logits.get(i, j) * scale;
                    if g == 0.0 {
                        continue;
                    }
                    for c in 0..dh {
                        let col = c0 + c;
                        dq.set(i, col, dq.get(i, col) + g * lc.k.get(j, col));
                        dk.set(j, col, dk.get(j, col) + g * lc.q.get(i, col));
                    }
                }
            }
        }
        lg.wq = lc.a.t_matmul(&dq);
        lg.wk = lc.a.t_matmul(&dk);
        lg.wv = lc.a.t_matmul(&dv);
        let mut da = dq.matmul_t(&lp.wq);
        da.add_assign(&dk.matmul_t(&lp.wk));
        da.add_assign(&dv.matmul_t(&lp.wv));
        let dres = ln_backward(&da, &lc.ln1, &lp.ln1_g, &mut lg.ln1_g, &mut lg.ln1_b);
        dx.add_assign(&dres);
    }

    for (e, &ce) in cache.condition.iter().enumerate() {
        for j in 0..d {
            let cur = gr.cond_w.get(e, j);
            gr.cond_w.set(e, j, cur + ce * dx.get(0, j));
        }
    }
    gr.cond_b.as_mut_slice().copy_from_slice(dx.row(0));
    for (i, &row) in cache.token_rows.iter().enumerate() {
        for j in 0..d {
            let g = dx.get(i + 1, j);
            gr.tok_emb.set(row, j, gr.tok_emb.get(row, j) + g);
            gr.pos_emb.set(i, j, gr.pos_emb.get(i, j) + g);
        }
    }
    gr
}
