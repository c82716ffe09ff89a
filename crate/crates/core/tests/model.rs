use motionmask::config::Config;
use motionmask::experiment::tokenize_corpus;
use motionmask::masking::Selection;
use motionmask::matrix::Matrix;
use motionmask::model::{alpha_schedule, attention_forward, masked_cross_entropy, train, ModelShape, ToyModel};
use motionmask::rng::{stream_rng, Stream};
use motionmask::spectral::msd_with;
use motionmask::synth::{mixed_corpus, synth_condition, Dynamics};
use motionmask::types::{SpectralProfile, TokenState};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

fn random_profile(t: usize, w: usize, valid: &[bool], seed: u64) -> SpectralProfile {
    let mut rng = stream_rng(seed, Stream::Corpus, 9);
    let emb = Matrix::from_fn(t.max(2), 3, |_, _| StandardNormal.sample(&mut rng));
    let mut p = msd_with(&emb, &vec![true; t.max(2)], w, 1e-8).unwrap();
    p.phi = Matrix::from_fn(t, w, |r, c| p.phi.get(r, c));
    p.omega.truncate(t);
    p.valid = valid.to_vec();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attention_rows_are_distributions(seed in any::<u64>(), t in 1usize..10, alpha0 in 0.0f64..=1.0) {
        let mut rng = stream_rng(seed, Stream::Init, 1);
        let cfg = Config { alpha0, dim: 8, heads: 2, layers: 3, window: 4, ..Config::default() };
        let model = ToyModel::init(ModelShape::from_config(&cfg, 6, t, 3), seed).unwrap();
        let mut valid: Vec<bool> = (0..t).map(|_| rng.random_bool(0.8)).collect();
        valid[0] = true;
        let tokens = (0..t).map(|_| rng.random_bool(0.5).then(|| rng.random_range(0..6))).collect();
        let state = TokenState::new(tokens, valid.clone()).unwrap();
        let profile = random_profile(t, 4, &valid, seed);
        let (_, rec) = attention_forward(&model, &state, &synth_condition(3, seed, 0), Some(&profile), &cfg).unwrap();
        for layer in &rec.maps {
            for map in layer {
                for i in 0..=t {
                    let row = map.row(i);
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
                    for j in 1..=t {
                        if !valid[j - 1] {
                            prop_assert_eq!(row[j], 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cross_entropy_ignores_row_shifts(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = stream_rng(seed, Stream::Init, 2);
        let logits = Matrix::from_fn(5, 7, |_, _| rng.random_range(-3.0..3.0));
        let targets: Vec<usize> = (0..5).map(|_| rng.random_range(0..7)).collect();
        let mask = [true, false, true, true, false];
        let shifted = Matrix::from_fn(5, 7, |i, j| logits.get(i, j) + shift * i as f64);
        let a = masked_cross_entropy(&logits, &targets, &mask).unwrap();
        let b = masked_cross_entropy(&shifted, &targets, &mask).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn alpha_decreases_with_depth() {
    for l in 0..10 {
        assert!(alpha_schedule(0.3, l + 1) < alpha_schedule(0.3, l));
        assert_eq!(alpha_schedule(0.0, l), 0.0);
    }
}

#[test]
fn token_relabeling_permutes_logits() {
    let cfg = Config { dim: 8, heads: 2, window: 4, ..Config::default() };
    let (v, t) = (6, 7);
    let model = ToyModel::init(ModelShape::from_config(&cfg, v, t, 3), 3).unwrap();
    let perm = [3usize, 0, 5, 1, 4, 2];
    let mut relabeled = model.clone();
    for (old, &new) in perm.iter().enumerate() {
        relabeled.params.tok_emb.row_mut(new).copy_from_slice(model.params.tok_emb.row(old));
        for d in 0..cfg.dim {
            relabeled.params.w_out.set(d, new, model.params.w_out.get(d, old));
        }
        relabeled.params.b_out.set(0, new, model.params.b_out.get(0, old));
    }
    let tokens: Vec<Option<usize>> = vec![Some(0), None, Some(2), Some(5), None, Some(1), Some(4)];
    let moved: Vec<Option<usize>> = tokens.iter().map(|t| t.map(|x| perm[x])).collect();
    let valid = vec![true; t];
    let profile = random_profile(t, 4, &valid, 1);
    let cond = synth_condition(3, 2, 0);
    let (a, _) = attention_forward(&model, &TokenState::new(tokens, valid.clone()).unwrap(), &cond, Some(&profile), &cfg).unwrap();
    let (b, _) = attention_forward(&relabeled, &TokenState::new(moved, valid).unwrap(), &cond, Some(&profile), &cfg).unwrap();
    for i in 0..t {
        for (old, &new) in perm.iter().enumerate() {
            assert!((a.get(i, old) - b.get(i, new)).abs() <= 1e-12);
        }
    }
}

fn small_training_run(lr: f64, seed: u64) -> (ToyModel, ToyModel, Vec<f64>) {
    let cfg = Config { lr, seed, ..Config::default() };
    let corpus = mixed_corpus(8, 3, 8, 4, cfg.window, Dynamics::Periodic, seed).unwrap();
    let (codebook, samples) = tokenize_corpus(&corpus, None, cfg.vocab, seed).unwrap();
    let init = ToyModel::init(ModelShape::from_config(&cfg, cfg.vocab, 24, 4), seed).unwrap();
    let mut model = init.clone();
    let report = train(&mut model, &samples, &codebook, &cfg, Selection::ContentFocused).unwrap();
    (init, model, report.epoch_losses)
}

#[test]
fn training_reduces_loss() {
    let (_, _, losses) = small_training_run(0.05, 0);
    assert_eq!(losses.len(), 30);
    assert!(losses.last().unwrap() < &losses[0], "{losses:?}");
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let (init, trained, _) = small_training_run(0.0, 1);
    let bits = |m: &ToyModel| -> Vec<u64> {
        m.params.tensors().iter().flat_map(|(_, t)| t.as_slice().iter().map(|x| x.to_bits())).collect()
    };
    assert_eq!(bits(&init), bits(&trained));
}

#[test]
fn training_is_deterministic() {
    let (_, a, la) = small_training_run(0.05, 2);
    let (_, b, lb) = small_training_run(0.05, 2);
    assert_eq!(la, lb);
    assert_eq!(a, b);
}
