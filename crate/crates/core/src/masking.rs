//! Training-time mask construction.
//!
//! The number of masked positions follows the cosine schedule; which positions
//! are masked is decided by content-focused selection (CFS): one quota goes to
//! frames with high spectral complexity, one to frames aligned with the text
//! condition, and an optional radius grows each pick into its temporal
//! neighbourhood. Selected positions are then corrupted BERT-style.

use std::f64::consts::FRAC_PI_2;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};
use crate::rng::Rng;
use crate::spectral::msd_sequence;
use crate::stats::{ceil_budget, zscore};
use crate::types::{Codebook, SpectralProfile, TextCondition, TokenState};

/// `γ(r) = cos(πr/2)`
pub fn cosine_ratio(r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::OutOfRange {
            name: "r",
            value: r,
        });
    }
    Ok((FRAC_PI_2 * r).cos())
}

/// Mask budget `⌈γ(r) · n_valid⌉`.
pub fn mask_budget(r: f64, n_valid: usize) -> Result<usize> {
    Ok(ceil_budget(cosine_ratio(r)? * n_valid as f64).min(n_valid))
}

pub fn dynamic_scores(profile: &SpectralProfile, valid: &[bool]) -> Result<Vec<f64>> {
    zscore(&profile.omega, valid)
}

/// Z-scored cosine similarity between each frame embedding and the condition.
pub fn semantic_scores(
    embeddings: &Matrix,
    condition: &TextCondition,
    valid: &[bool],
) -> Result<Vec<f64>> {
    if condition.dim() != embeddings.cols() {
        return Err(Error::DimMismatch {
            expected: embeddings.cols(),
            got: condition.dim(),
        });
    }
    let c = condition.vector();
    let cn = norm(c);
    let cos: Vec<f64> = embeddings
        .iter_rows()
        .map(|x| {
            let xn = norm(x);
            if xn == 0.0 || cn == 0.0 {
                0.0
            } else {
                dot(x, c) / (xn * cn)
            }
        })
        .collect();
    zscore(&cos, valid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Dynamic,
    Semantic,
    Expansion,
    Fill,
    /// Picked by uniform random selection.
    Uniform,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Dynamic => "dynamic",
            Provenance::Semantic => "semantic",
            Provenance::Expansion => "expansion",
            Provenance::Fill => "fill",
            Provenance::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    /// Selected frames in selection order.
    pub positions: Vec<usize>,
    pub provenance: Vec<Provenance>,
    /// Requested budget.
    pub budget: usize,
}

impl MaskPlan {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&q| q == p).count()
    }

    pub fn selected_mask(&self, len: usize) -> Vec<bool> {
        let mut m = vec![false; len];
        for &p in &self.positions {
            m[p] = true;
        }
        m
    }
}

/// Valid indices sorted by descending score, ties to the lower index.
fn ranked(scores: &[f64], valid: &[bool]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| valid[i]).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Dual-quota content-focused selection.
///
/// The semantic quota is `round(λK)` and the dynamic quota the remainder. Seeds are the top dynamic frames, then the top semantic
/// frames not already taken. Seeds are visited in that order and each is followed
/// by its unselected valid neighbours at offsets `+1, −1, …, +r, −r`. The list is
/// cut to `min(K, #valid)` and, if short, topped up by descending dynamic score.
pub fn cfs_select(
    s_dyn: &[f64],
    s_sem: &[f64],
    budget: usize,
    lambda_sem: f64,
    r_exp: usize,
    valid: &[bool],
) -> MaskPlan {
    let t = valid.len();
    assert_eq!(s_dyn.len(), t);
    assert_eq!(s_sem.len(), t);
    let n_valid = valid.iter().filter(|&&v| v).count();
    let k = budget.min(n_valid);
    let n_sem = ((lambda_sem * budget as f64).round() as usize).min(budget);
    let n_dyn = budget - n_sem;

    let dyn_order = ranked(s_dyn, valid);
    let mut taken = vec![false; t];
    let mut seeds = Vec::with_capacity(k);
    for &i in dyn_order.iter().take(n_dyn) {
        taken[i] = true;
        seeds.push((i, Provenance::Dynamic));
    }
    let sem_picks: Vec<usize> = ranked(s_sem, valid)
        .into_iter()
        .filter(|&i| !taken[i])
        .take(n_sem)
        .collect();
    seeds.extend(sem_picks.into_iter().map(|i| (i, Provenance::Semantic)));

    let mut chosen = vec![false; t];
    let mut positions = Vec::with_capacity(k);
    let mut provenance = Vec::with_capacity(k);
    let mut push = |i: usize, p: Provenance, chosen: &mut Vec<bool>| {
        if !chosen[i] {
            chosen[i] = true;
            positions.push(i);
            provenance.push(p);
        }
    };
    for &(seed, tag) in &seeds {
        push(seed, tag, &mut chosen);
        for d in 1..=r_exp {
            for off in [d as isize, -(d as isize)] {
                let j = seed as isize + off;
                if (0..t as isize).contains(&j) && valid[j as usize] {
                    push(j as usize, Provenance::Expansion, &mut chosen);
                }
            }
        }
    }
    positions.truncate(k);
    provenance.truncate(k);
    if positions.len() < k {
        let mut in_plan = vec![false; t];
        positions.iter().for_each(|&i| in_plan[i] = true);
        for i in dyn_order {
            if positions.len() == k {
                break;
            }
            if !in_plan[i] {
                positions.push(i);
                provenance.push(Provenance::Fill);
            }
        }
    }
    MaskPlan {
        positions,
        provenance,
        budget,
    }
}

/// `min(K, #valid)` valid positions drawn uniformly without replacement.
pub fn uniform_select(budget: usize, valid: &[bool], rng: &mut Rng) -> MaskPlan {
    let pool: Vec<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    let k = budget.min(pool.len());
    let positions: Vec<usize> = sample(rng, pool.len(), k)
        .into_iter()
        .map(|j| pool[j])
        .collect();
    MaskPlan {
        provenance: vec![Provenance::Uniform; positions.len()],
        positions,
        budget,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub corrupted: TokenState,
    pub targets: Vec<usize>,
    /// True exactly on the selected positions.
    pub loss_mask: Vec<bool>,
    pub condition: Option<TextCondition>,
    pub profile: Option<SpectralProfile>,
    pub plan: MaskPlan,
}

/// Corrupts each selected position: mask with probability `ratios[0]`, a uniform
/// random token with `ratios[1]`, otherwise left as is. Every selected position
/// is scored by the loss whatever happened to it.
pub fn apply_masking(
    tokens: &[usize],
    valid: &[bool],
    plan: &MaskPlan,
    ratios: [f64; 3],
    vocab: usize,
    rng: &mut Rng,
) -> TrainingExample {
    let mut corrupted = TokenState::new(tokens.iter().map(|&t| Some(t)).collect(), valid.to_vec())
        .expect("tokens and validity have equal length");
    let mut loss_mask = vec![false; tokens.len()];
    for &p in &plan.positions {
        loss_mask[p] = true;
        let u: f64 = rng.random();
        if u < ratios[0] {
            corrupted.tokens[p] = None;
        } else if u < ratios[0] + ratios[1] {
            corrupted.tokens[p] = Some(rng.random_range(0..vocab));
        }
    }
    TrainingExample {
        corrupted,
        targets: tokens.to_vec(),
        loss_mask,
        condition: None,
        profile: None,
        plan: plan.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    ContentFocused,
    Uniform,
}

/// Token sequence plus everything needed to build its training examples.
#[derive(Debug, Clone)]
pub struct TrainingInput<'a> {
    pub tokens: &'a [usize],
    pub valid: &'a [bool],
    pub codebook: &'a Codebook,
    pub condition: &'a TextCondition,
}

/// One training example: draws `r ~ U(0,1)`, then builds with [`build_example_at`].
pub fn build_training_example(
    input: &TrainingInput<'_>,
    config: &Config,
    selection: Selection,
    rng: &mut Rng,
) -> Result<TrainingExample> {
    let r: f64 = rng.random();
    build_example_at(input, r, config, selection, rng)
}

/// Builds an example for a fixed schedule position `r`.
pub fn build_example_at(
    input: &TrainingInput<'_>,
    r: f64,
    config: &Config,
    selection: Selection,
    rng: &mut Rng,
) -> Result<TrainingExample> {
    let n_valid = input.valid.iter().filter(|&&v| v).count();
    let budget = mask_budget(r, n_valid)?;
    let state = TokenState::new(
        input.tokens.iter().map(|&t| Some(t)).collect(),
        input.valid.to_vec(),
    )?;
    state.check_vocab(input.codebook.size())?;
    let embeddings = crate::tokenizer::lookup_embeddings(
        &state,
        input.codebook,
        &input.codebook.centroid(),
    )?;
    let profile = msd_sequence(&embeddings, input.valid, config)?;
    let plan = match selection {
        Selection::ContentFocused => {
            let s_dyn = dynamic_scores(&profile, input.valid)?;
            let s_sem = semantic_scores(&embeddings, input.condition, input.valid)?;
            cfs_select(&s_dyn, &s_sem, budget, config.lambda_sem, config.r_exp, input.valid)
        }
        Selection::Uniform => uniform_select(budget, input.valid, rng),
    };
    let mut ex = apply_masking(
        input.tokens,
        input.valid,
        &plan,
        config.bert_ratios,
        input.codebook.size(),
        rng,
    );
    ex.condition = Some(input.condition.clone());
    ex.profile = Some(profile);
    Ok(ex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use approx::assert_abs_diff_eq;

    #[test]
    fn cosine_ratio_examples() {
        assert_eq!(cosine_ratio(0.0).unwrap(), 1.0);
        assert!(cosine_ratio(1.0).unwrap().abs() < 1e-15);
        assert_abs_diff_eq!(cosine_ratio(0.5).unwrap(), 0.5f64.sqrt(), epsilon = 1e-15);
        assert!(cosine_ratio(1.5).is_err());
        assert!(cosine_ratio(-0.1).is_err());
        assert_eq!(mask_budget(1.0, 49).unwrap(), 0);
        assert_eq!(mask_budget(0.0, 49).unwrap(), 49);
    }

    fn profile_with(omega: Vec<f64>) -> SpectralProfile {
        SpectralProfile {
            phi: Matrix::zeros(omega.len(), 4),
            valid: vec![true; omega.len()],
            omega,
        }
    }

    #[test]
    fn dynamic_score_examples() {
        let v = [true; 4];
        assert_eq!(dynamic_scores(&profile_with(vec![0.2; 4]), &v).unwrap(), vec![0.0; 4]);
        assert_eq!(
            dynamic_scores(&profile_with(vec![0.0, 0.0, 1.0, 1.0]), &v).unwrap(),
            vec![-1.0, -1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn semantic_score_examples() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).unwrap();
        let c = TextCondition::new(vec![1.0, 0.0]).unwrap();
        let s = semantic_scores(&x, &c, &[true; 3]).unwrap();
        for (a, b) in s.iter().zip([1.224745, 0.0, -1.224745]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
        let c5 = TextCondition::new(vec![5.0, 0.0]).unwrap();
        assert_eq!(semantic_scores(&x, &c5, &[true; 3]).unwrap(), s);

        let par = Matrix::from_rows(&[[2.0, 0.0], [0.5, 0.0]]).unwrap();
        assert_eq!(semantic_scores(&par, &c, &[true; 2]).unwrap(), vec![0.0; 2]);

        let c3 = TextCondition::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            semantic_scores(&x, &c3, &[true; 3]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn quota_example() {
        let s_dyn: Vec<f64> = (0..10).map(|i| 0.9 - 0.1 * i as f64).collect();
        let s_sem: Vec<f64> = s_dyn.iter().rev().cloned().collect();
        let plan = cfs_select(&s_dyn, &s_sem, 4, 0.25, 0, &[true; 10]);
        assert_eq!(plan.positions, vec![0, 1, 2, 9]);
        assert_eq!(
            plan.provenance,
            vec![
                Provenance::Dynamic,
                Provenance::Dynamic,
                Provenance::Dynamic,
                Provenance::Semantic
            ]
        );
        assert!(cfs_select(&s_dyn, &s_sem, 0, 0.25, 2, &[true; 10]).is_empty());
    }

    #[test]
    fn expansion_follows_each_seed() {
        let mut s_dyn = vec![0.0; 10];
        s_dyn[5] = 2.0;
        s_dyn[0] = 1.0;
        let plan = cfs_select(&s_dyn, &[0.0; 10], 4, 0.0, 1, &[true; 10]);
        assert_eq!(plan.positions, vec![5, 6, 4, 0]);
        assert_eq!(plan.count(Provenance::Expansion), 2);
    }

    #[test]
    fn budget_clamps_to_valid() {
        let mut valid = vec![true; 6];
        valid[2] = false;
        let plan = cfs_select(&[0.0; 6], &[0.0; 6], 100, 0.3, 2, &valid);
        assert_eq!(plan.len(), 5);
        assert!(!plan.positions.contains(&2));
    }

    #[test]
    fn corruption_degenerate_ratios() {
        let tokens: Vec<usize> = (0..10).collect();
        let valid = vec![true; 10];
        let plan = cfs_select(&[0.0; 10], &[0.0; 10], 6, 0.0, 0, &valid);
        let mut rng = stream_rng(1, Stream::Masking, 0);
        let ex = apply_masking(&tokens, &valid, &plan, [1.0, 0.0, 0.0], 10, &mut rng);
        for &p in &plan.positions {
            assert_eq!(ex.corrupted.tokens[p], None);
        }
        let ex = apply_masking(&tokens, &valid, &plan, [0.0, 0.0, 1.0], 10, &mut rng);
        assert!(ex.corrupted.tokens.iter().zip(&tokens).all(|(a, b)| *a == Some(*b)));
        assert_eq!(ex.loss_mask.iter().filter(|&&m| m).count(), 6);
        assert_eq!(ex.targets, tokens);
    }

    #[test]
    fn corruption_frequencies() {
        let n = 10_000;
        let tokens = vec![3usize; n];
        let valid = vec![true; n];
        let plan = MaskPlan {
            positions: (0..n).collect(),
            provenance: vec![Provenance::Fill; n],
            budget: n,
        };
        let mut rng = stream_rng(2, Stream::Masking, 0);
        let vocab = 1_000_000;
        let ex = apply_masking(&tokens, &valid, &plan, [0.8, 0.1, 0.1], vocab, &mut rng);
        let masked = ex.corrupted.tokens.iter().filter(|t| t.is_none()).count() as f64 / n as f64;
        let kept = ex.corrupted.tokens.iter().filter(|&&t| t == Some(3)).count() as f64 / n as f64;
        let random = 1.0 - masked - kept;
        assert!((masked - 0.8).abs() < 0.02, "{masked}");
        assert!((random - 0.1).abs() < 0.02, "{random}");
        assert!((kept - 0.1).abs() < 0.02, "{kept}");
    }

    #[test]
    fn uniform_selection_respects_budget() {
        let mut valid = vec![true; 20];
        valid[7] = false;
        let mut rng = stream_rng(3, Stream::Masking, 0);
        let plan = uniform_select(8, &valid, &mut rng);
        assert_eq!(plan.len(), 8);
        assert!(!plan.positions.contains(&7));
        let mut p = plan.positions.clone();
        p.sort_unstable();
        p.dedup();
        assert_eq!(p.len(), 8);
    }
}
