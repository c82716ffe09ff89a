//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use motionmask::config::Config;
use motionmask::decoding::keep_count;
use motionmask::masking::{build_example_at, Selection, TrainingExample, TrainingInput};
use motionmask::matrix::Matrix;
use motionmask::model::{attention_forward, backward, masked_cross_entropy, ModelShape, ToyModel};
use motionmask::rng::{stream_rng, Stream};
use motionmask::synth::synth_condition;
use motionmask::types::{Codebook, TextCondition, TokenState};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-4;

/// Double-loop DCT-II, written straight from the sum.
pub fn naive_dct(x: &Matrix) -> Matrix {
    let w = x.rows();
    let mut out = Matrix::zeros(w, x.cols());
    for k in 0..w {
        for d in 0..x.cols() {
            let mut acc = 0.0;
            for n in 0..w {
                acc += x.get(n, d) * (std::f64::consts::PI / w as f64 * (n as f64 + 0.5) * k as f64).cos();
            }
            out.set(k, d, acc);
        }
    }
    out
}

/// Content-focused selection by brute force: linear scans instead of sorting.
pub fn reference_cfs(
    s_dyn: &[f64],
    s_sem: &[f64],
    k: usize,
    lambda: f64,
    r_exp: usize,
    valid: &[bool],
) -> Vec<(usize, &'static str)> {
    let t = valid.len();
    let n_valid = valid.iter().filter(|v| **v).count();
    let n_sem = ((lambda * k as f64).round() as usize).min(k);
    let n_dyn = k - n_sem;

    // best remaining index by score, ties to the lower index
    let best = |scores: &[f64], excluded: &[usize]| -> Option<usize> {
        let mut pick: Option<usize> = None;
        for i in 0..t {
            if !valid[i] || excluded.contains(&i) {
                continue;
            }
            if pick.is_none_or(|p| scores[i] > scores[p]) {
                pick = Some(i);
            }
        }
        pick
    };

    let mut seeds: Vec<(usize, &'static str)> = Vec::new();
    let mut used: Vec<usize> = Vec::new();
    for _ in 0..n_dyn {
        match best(s_dyn, &used) {
            Some(i) => {
                used.push(i);
                seeds.push((i, "dynamic"));
            }
            None => break,
        }
    }
    for _ in 0..n_sem {
        match best(s_sem, &used) {
            Some(i) => {
                used.push(i);
                seeds.push((i, "semantic"));
            }
            None => break,
        }
    }

    let mut list: Vec<(usize, &'static str)> = Vec::new();
    for &(seed, tag) in &seeds {
        if !list.iter().any(|(i, _)| *i == seed) {
            list.push((seed, tag));
        }
        for d in 1..=r_exp as i64 {
            for j in [seed as i64 + d, seed as i64 - d] {
                if j >= 0 && (j as usize) < t && valid[j as usize] && !list.iter().any(|(i, _)| *i == j as usize) {
                    list.push((j as usize, "expansion"));
                }
            }
        }
    }
    let target = k.min(n_valid);
    list.truncate(target);
    while list.len() < target {
        let taken: Vec<usize> = list.iter().map(|(i, _)| *i).collect();
        let i = best(s_dyn, &taken).expect("enough valid frames");
        list.push((i, "fill"));
    }
    list
}

/// Plain confidence decoding: argmax at a fixed temperature, no spectral input,
/// freezing the most confident positions on the cosine schedule. Returns the
/// per-step sampled tokens.
pub fn plain_decode(model: &ToyModel, cond: &TextCondition, len: usize, cfg: &Config) -> Vec<Vec<Option<usize>>> {
    let mut state = TokenState::fully_masked(len);
    let mut records = Vec::new();
    for s in 1..=cfg.steps {
        let (logits, _) = attention_forward(model, &state, cond, None, cfg).unwrap();
        let v = logits.cols();
        let mut sampled = vec![None; len];
        let mut conf = vec![0.0; len];
        for i in 0..len {
            if state.frozen[i] {
                sampled[i] = state.tokens[i];
                continue;
            }
            let scaled: Vec<f64> = logits.row(i).iter().map(|x| x / cfg.t_global).collect();
            let mut arg = 0;
            for j in 1..v {
                if scaled[j] > scaled[arg] {
                    arg = j;
                }
            }
            let max = scaled[arg];
            let z: f64 = scaled.iter().map(|x| (x - max).exp()).sum();
            sampled[i] = Some(arg);
            conf[i] = 1.0 / z;
        }
        let newly = keep_count(len, s, cfg.steps).unwrap().newly_frozen;
        let mut order: Vec<usize> = (0..len).filter(|&i| !state.frozen[i]).collect();
        order.sort_by(|&a, &b| conf[b].partial_cmp(&conf[a]).unwrap().then(a.cmp(&b)));
        for &i in order.iter().take(newly) {
            state.frozen[i] = true;
            state.tokens[i] = sampled[i];
        }
        records.push(sampled);
    }
    records
}

/// Small model plus one content-focused training example.
pub fn gradcheck_setup(alpha0: f64, seed: u64) -> (ToyModel, TrainingExample, Config) {
    let cfg = Config {
        dim: 8,
        layers: 2,
        heads: 2,
        alpha0,
        window: 4,
        r_exp: 1,
        ..Config::default()
    };
    let t = 6;
    let vocab = 16;
    let emb_dim = 3;
    let mut rng = stream_rng(seed, Stream::Init, 7);
    let codebook = Codebook::new(Matrix::from_fn(vocab, emb_dim, |_, _| rng.random_range(-1.0..1.0))).unwrap();
    let tokens: Vec<usize> = (0..t).map(|_| rng.random_range(0..vocab)).collect();
    let valid = vec![true; t];
    let condition = synth_condition(emb_dim, seed, 0);
    let input = TrainingInput {
        tokens: &tokens,
        valid: &valid,
        codebook: &codebook,
        condition: &condition,
    };
    let mut mrng = stream_rng(seed, Stream::Masking, 0);
    let ex = build_example_at(&input, 0.3, &cfg, Selection::ContentFocused, &mut mrng).unwrap();
    let shape = ModelShape::from_config(&cfg, vocab, t, emb_dim);
    let model = ToyModel::init(shape, seed).unwrap();
    (model, ex, cfg)
}

fn loss_of(model: &ToyModel, ex: &TrainingExample, cfg: &Config) -> f64 {
    let (logits, _) = attention_forward(
        model,
        &ex.corrupted,
        ex.condition.as_ref().unwrap(),
        ex.profile.as_ref(),
        cfg,
    )
    .unwrap();
    masked_cross_entropy(&logits, &ex.targets, &ex.loss_mask).unwrap()
}

/// Worst relative error between analytic and central-difference gradients over
/// every parameter; exact zeros on both sides count as agreement.
pub fn worst_relative_error(model: &ToyModel, ex: &TrainingExample, cfg: &Config) -> (f64, String) {
    let (_, grads) = backward(model, ex, cfg).unwrap();
    let mut worst = (0.0, String::new());
    let mut probe = model.clone();
    let names: Vec<String> = model.params.tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads
        .tensors()
        .into_iter()
        .map(|(_, m)| m.as_slice().to_vec())
        .collect();
    for (ti, name) in names.iter().enumerate() {
        for k in 0..analytic[ti].len() {
            let orig = probe.params.tensors_mut()[ti].as_slice()[k];
            probe.params.tensors_mut()[ti].as_mut_slice()[k] = orig + FD_STEP;
            let up = loss_of(&probe, ex, cfg);
            probe.params.tensors_mut()[ti].as_mut_slice()[k] = orig - FD_STEP;
            let down = loss_of(&probe, ex, cfg);
            probe.params.tensors_mut()[ti].as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[ti][k];
            let denom = a.abs().max(numeric.abs());
            if denom == 0.0 {
                continue;
            }
            let rel = (a - numeric).abs() / denom;
            if rel > worst.0 {
                worst = (rel, format!("{name}[{k}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

/// Random model with a random codebook and condition.
pub fn decode_fixture(seed: u64, len: usize, cfg: &Config) -> (ToyModel, Codebook, TextCondition) {
    let mut rng = stream_rng(seed, Stream::Init, 99);
    let codebook = Codebook::new(Matrix::from_fn(cfg.vocab, 4, |_, _| rng.random_range(-1.0..1.0))).unwrap();
    let shape = ModelShape::from_config(cfg, cfg.vocab, len, 4);
    let model = ToyModel::init(shape, seed).unwrap();
    (model, codebook, synth_condition(4, seed, 0))
}
