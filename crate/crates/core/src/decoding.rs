//! Iterative confidence-based decoding with complexity-aware exploration.
//!
//! Each step recomputes spectral descriptors from the current best guess, runs the
//! model, and turns a per-frame exploration score into a sampling temperature and
//! a Gumbel noise scale. The most confident positions are frozen on a cosine
//! schedule; the rest go back to MASK for the next step.

use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::masking::cosine_ratio;
use crate::matrix::Matrix;
use crate::model::{attention_forward, ToyModel};
use crate::rng::Rng;
use crate::spectral::msd_with;
use crate::stats::{ceil_budget, sigmoid, zscore};
use crate::types::{Codebook, SpectralProfile, TextCondition, TokenState};

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
        for (o, x) in out.row_mut(i).iter_mut().zip(row) {
            *o = (x - max).exp() / z;
        }
    }
    out
}

/// `b_t = σ(λ_D·zscore(Ω)_t + (1−λ_D)·zscore(1 − max_v p_t,v)_t)` over the
/// positions flagged in `active`; other positions get the neutral 0.5.
/// Without a profile the complexity term is 0.
pub fn exploration_scores(
    profile: Option<&SpectralProfile>,
    probs: &Matrix,
    lambda_d: f64,
    active: &[bool],
) -> Result<Vec<f64>> {
    let t = active.len();
    if probs.rows() != t {
        return Err(Error::DimMismatch {
            expected: t,
            got: probs.rows(),
        });
    }
    let mut uncertainty = vec![0.0; t];
    for i in (0..t).filter(|&i| active[i]) {
        let row = probs.row(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::BadProbabilities { row: i, sum });
        }
        uncertainty[i] = 1.0 - row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    if !active.iter().any(|&a| a) {
        return Ok(vec![0.5; t]);
    }
    let u_hat = zscore(&uncertainty, active)?;
    let k_hat = match profile {
        Some(p) => zscore(&p.omega, active)?,
        None => vec![0.0; t],
    };
    Ok(k_hat
        .iter()
        .zip(&u_hat)
        .map(|(k, u)| sigmoid(lambda_d * k + (1.0 - lambda_d) * u))
        .collect())
}

/// `T_t = T_global · (1 + β·b_t)`
pub fn adaptive_temperature(t_global: f64, beta: f64, b: &[f64]) -> Vec<f64> {
    b.iter().map(|bt| t_global * (1.0 + beta * bt)).collect()
}

/// `σ_t = σ_max · b_t`
pub fn adaptive_noise(sigma_max: f64, b: &[f64]) -> Vec<f64> {
    b.iter().map(|bt| sigma_max * bt).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeepCount {
    /// Positions still masked after the step.
    pub masked: usize,
    pub cumulative_frozen: usize,
    pub newly_frozen: usize,
}

fn masked_after(n_valid: usize, step: usize, total: usize) -> Result<usize> {
    if step == 0 {
        return Ok(n_valid);
    }
    if step >= total {
        return Ok(0);
    }
    let gamma = cosine_ratio(step as f64 / total as f64)?;
    Ok(ceil_budget(n_valid as f64 * gamma).min(n_valid))
}

/// Remask schedule: `m_s = ⌈n·γ(s/S)⌉` for `s < S` and `m_S = 0`.
pub fn keep_count(n_valid: usize, step: usize, total: usize) -> Result<KeepCount> {
    if total == 0 || step == 0 || step > total {
        return Err(Error::OutOfRange {
            name: "step",
            value: step as f64,
        });
    }
    let before = masked_after(n_valid, step - 1, total)?;
    let masked = masked_after(n_valid, step, total)?;
    Ok(KeepCount {
        masked,
        cumulative_frozen: n_valid - masked,
        newly_frozen: before - masked,
    })
}

/// Samples every unfrozen valid position from `logits/T_t + σ_t·g` with standard
/// Gumbel `g`. Confidence is the noise-free `softmax(logits/T_t)` probability of
/// the sampled token. Frozen positions pass through with confidence 1; invalid
/// positions yield `None` and confidence 0.
pub fn sample_step(
    logits: &Matrix,
    temps: &[f64],
    noises: &[f64],
    state: &TokenState,
    rng: &mut Rng,
) -> Result<(Vec<Option<usize>>, Vec<f64>)> {
    let t = state.len();
    if logits.rows() != t || temps.len() != t || noises.len() != t {
        return Err(Error::DimMismatch {
            expected: t,
            got: logits.rows(),
        });
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits"));
    }
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit scale");
    let v = logits.cols();
    let mut tokens = vec![None; t];
    let mut conf = vec![0.0; t];
    let mut scaled = vec![0.0; v];
    for i in 0..t {
        if !state.valid[i] {
            continue;
        }
        if state.frozen[i] {
            tokens[i] = state.tokens[i];
            conf[i] = 1.0;
            continue;
        }
        let temp = temps[i];
        for (s, x) in scaled.iter_mut().zip(logits.row(i)) {
            *s = x / temp;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (j, &s) in scaled.iter().enumerate() {
            let perturbed = if noises[i] > 0.0 {
                s + noises[i] * gumbel.sample(rng)
            } else {
                s
            };
            if perturbed > best.1 {
                best = (j, perturbed);
            }
        }
        if !best.1.is_finite() {
            return Err(Error::NonFinite("perturbed logits"));
        }
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scaled.iter().map(|s| (s - max).exp()).sum();
        tokens[i] = Some(best.0);
        conf[i] = (scaled[best.0] - max).exp() / z;
    }
    Ok((tokens, conf))
}

/// One decoding step. Per-position fields are `None` where the position was
/// already frozen before the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub frozen_positions: Vec<usize>,
    pub b: Vec<Option<f64>>,
    #[serde(rename = "T")]
    pub temperature: Vec<Option<f64>>,
    pub sigma: Vec<Option<f64>>,
    /// Sampled tokens for active positions, frozen tokens elsewhere.
    pub tokens: Vec<Option<usize>>,
    pub confidences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub steps: Vec<StepRecord>,
    pub final_state: TokenState,
}

/// Spectral profile of the current best guess. Frozen and previously sampled
/// positions use their codebook rows, never-sampled positions the centroid.
fn guess_profile(
    codebook: &Codebook,
    guess: &[Option<usize>],
    valid: &[bool],
    config: &Config,
) -> Result<SpectralProfile> {
    let centroid = codebook.centroid();
    let mut emb = Matrix::zeros(guess.len(), codebook.dim());
    for (i, g) in guess.iter().enumerate() {
        let row = match g {
            Some(v) => codebook.entry(*v),
            None => &centroid,
        };
        emb.row_mut(i).copy_from_slice(row);
    }
    if guess.len() < 2 {
        return Ok(SpectralProfile {
            phi: Matrix::zeros(guess.len(), config.window),
            omega: vec![0.0; guess.len()],
            valid: valid.to_vec(),
        });
    }
    msd_with(&emb, valid, config.window, config.epsilon)
}

/// Generates `len` tokens in `config.steps` steps.
pub fn decode(
    model: &ToyModel,
    codebook: &Codebook,
    condition: &TextCondition,
    len: usize,
    config: &Config,
    rng: &mut Rng,
) -> Result<DecodeTrace> {
    if len == 0 {
        return Err(Error::TooShort { min: 1, got: 0 });
    }
    if codebook.size() != model.shape.vocab {
        return Err(Error::DimMismatch {
            expected: model.shape.vocab,
            got: codebook.size(),
        });
    }
    let total = config.steps;
    let mut state = TokenState::fully_masked(len);
    let mut guess: Vec<Option<usize>> = vec![None; len];
    let n_valid = state.valid.iter().filter(|&&v| v).count();
    let mut steps = Vec::with_capacity(total);

    for s in 1..=total {
        let profile = guess_profile(codebook, &guess, &state.valid, config)?;
        let (logits, _) = attention_forward(model, &state, condition, Some(&profile), config)?;
        let probs = softmax_rows(&logits);
        let active: Vec<bool> = (0..len).map(|i| state.valid[i] && !state.frozen[i]).collect();
        let b = exploration_scores(Some(&profile), &probs, config.lambda_d, &active)?;
        let temps = adaptive_temperature(config.t_global, config.beta, &b);
        let noises = adaptive_noise(config.sigma_max, &b);
        let (sampled, conf) = sample_step(&logits, &temps, &noises, &state, rng)?;

        let newly = keep_count(n_valid, s, total)?.newly_frozen;
        let mut candidates: Vec<usize> = (0..len).filter(|&i| active[i]).collect();
        candidates.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
        let mut frozen_now: Vec<usize> = candidates.into_iter().take(newly).collect();
        frozen_now.sort_unstable();
        for &i in &frozen_now {
            state.tokens[i] = sampled[i];
            state.frozen[i] = true;
        }
        let on_active = |v: &[f64]| -> Vec<Option<f64>> {
            v.iter()
                .zip(&active)
                .map(|(x, &a)| a.then_some(*x))
                .collect()
        };
        steps.push(StepRecord {
            step: s,
            frozen_positions: frozen_now,
            b: on_active(&b),
            temperature: on_active(&temps),
            sigma: on_active(&noises),
            tokens: sampled.clone(),
            confidences: conf,
        });
        for (g, t) in guess.iter_mut().zip(&sampled) {
            if t.is_some() {
                *g = *t;
            }
        }
    }
    Ok(DecodeTrace {
        steps,
        final_state: state,
    })
}
