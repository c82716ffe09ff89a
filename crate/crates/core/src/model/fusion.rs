//! Blending of attention logits with the spectral similarity prior.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::spectral::SimilarityMatrix;
use crate::stats::{zscore, ZSCORE_MIN_STD};

/// Fusion weights below this leave the logits untouched.
pub const FUSION_BYPASS: f64 = 1e-12;

/// `α_ℓ = α₀ · exp(−ℓ/3)`, layers counted from 0.
pub fn alpha_schedule(alpha0: f64, layer: usize) -> f64 {
    alpha0 * (-(layer as f64) / 3.0).exp()
}

/// Row-wise z-scored similarity over valid keys, shared by all heads and layers.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPrior {
    pub(crate) s_hat: Matrix,
    pub(crate) valid: Vec<bool>,
}

impl SpectralPrior {
    pub fn new(sim: &SimilarityMatrix) -> Self {
        let t = sim.len();
        let mut s_hat = Matrix::zeros(t, t);
        if sim.valid.iter().any(|&v| v) {
            for i in 0..t {
                let z = zscore(sim.s.row(i), &sim.valid).expect("at least one valid key");
                s_hat.row_mut(i).copy_from_slice(&z);
            }
        }
        Self {
            s_hat,
            valid: sim.valid.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }
}

/// Z-scored logits and their per-row standard deviations, kept for backprop.
#[derive(Debug, Clone)]
pub(crate) struct FusionCache {
    pub a_hat: Matrix,
    pub std: Vec<f64>,
}

/// Validity over all slots: the condition slot is always a valid key.
pub(crate) fn slot_validity(valid: &[bool]) -> Vec<bool> {
    std::iter::once(true).chain(valid.iter().copied()).collect()
}

fn row_stats(row: &[f64], keys: &[bool]) -> (f64, f64) {
    let n = keys.iter().filter(|&&k| k).count() as f64;
    let mean = row.iter().zip(keys).filter(|(_, &k)| k).map(|(x, _)| x).sum::<f64>() / n;
    let var = row
        .iter()
        .zip(keys)
        .filter(|(_, &k)| k)
        .map(|(x, _)| (x - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Fuses one `(T+1) × (T+1)` logit map. Returns `None` for the cache when bypassed.
pub(crate) fn fuse_cached(
    logits: &Matrix,
    prior: &SpectralPrior,
    alpha: f64,
    keys: &[bool],
) -> (Matrix, Option<FusionCache>) {
    if alpha < FUSION_BYPASS {
        return (logits.clone(), None);
    }
    let n = logits.rows();
    let mut fused = Matrix::zeros(n, n);
    let mut a_hat = Matrix::zeros(n, n);
    let mut stds = vec![0.0; n];
    for i in 0..n {
        let row = logits.row(i);
        let (mean, std) = row_stats(row, keys);
        stds[i] = std;
        for j in 0..n {
            if !keys[j] {
                fused.set(i, j, f64::NEG_INFINITY);
                continue;
            }
            let ah = if std >= ZSCORE_MIN_STD {
                (row[j] - mean) / std
            } else {
                0.0
            };
            a_hat.set(i, j, ah);
            let v = if i > 0 && j > 0 {
                (1.0 - alpha) * ah + alpha * prior.s_hat.get(i - 1, j - 1)
            } else {
                ah
            };
            fused.set(i, j, v);
        }
    }
    (fused, Some(FusionCache { a_hat, std: stds }))
}

/// Gradient of the fused map back onto the raw logits.
pub(crate) fn fuse_backward(d_fused: &Matrix, cache: &FusionCache, alpha: f64, keys: &[bool]) -> Matrix {
    let n = d_fused.rows();
    let count = keys.iter().filter(|&&k| k).count() as f64;
    let mut d_logits = Matrix::zeros(n, n);
    let mut g = vec![0.0; n];
    for i in 0..n {
        let std = cache.std[i];
        if std < ZSCORE_MIN_STD {
            continue;
        }
        for j in 0..n {
            g[j] = if !keys[j] {
                0.0
            } else if i > 0 && j > 0 {
                (1.0 - alpha) * d_fused.get(i, j)
            } else {
                d_fused.get(i, j)
            };
        }
        let y = cache.a_hat.row(i);
        let mean_g = g.iter().sum::<f64>() / count;
        let mean_gy = g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / count;
        for j in 0..n {
            if keys[j] {
                d_logits.set(i, j, (g[j] - mean_g - y[j] * mean_gy) / std);
            }
        }
    }
    d_logits
}

/// Blends raw attention logits over `T+1` slots (slot 0 is the condition) with
/// the spectral prior.
///
/// Both sides are z-scored per query row over valid keys and mixed as
/// `(1−α)Â + αŜ` on motion–motion pairs; pairs touching the condition slot keep
/// `Â`. Invalid keys become `−∞`. For `α` below [`FUSION_BYPASS`] the logits are
/// returned unchanged.
pub fn fuse_logits(
    logits: &Matrix,
    s_freq: &SimilarityMatrix,
    alpha: f64,
    valid: &[bool],
) -> Result<Matrix> {
    let n = valid.len() + 1;
    if logits.rows() != n || logits.cols() != n || s_freq.len() != valid.len() {
        return Err(Error::ShapeMismatch(format!(
            "logits {}x{}, similarity {}, {} frames",
            logits.rows(),
            logits.cols(),
            s_freq.len(),
            valid.len()
        )));
    }
    let prior = SpectralPrior::new(s_freq);
    Ok(fuse_cached(logits, &prior, alpha, &slot_validity(valid)).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_schedule(0.2, 0), 0.2);
        assert_abs_diff_eq!(alpha_schedule(0.2, 3), 0.073576, epsilon = 1e-5);
        assert_eq!(alpha_schedule(0.0, 5), 0.0);
        for l in 0..10 {
            assert!(alpha_schedule(0.4, l + 1) < alpha_schedule(0.4, l));
        }
    }

    fn random_case(t: usize, seed: u64) -> (Matrix, SimilarityMatrix) {
        let mut rng = stream_rng(seed, Stream::Init, 99);
        let a = Matrix::from_fn(t + 1, t + 1, |_, _| rng.random_range(-3.0..3.0));
        let mut s = Matrix::from_fn(t, t, |_, _| -rng.random_range(0.0..1.0));
        for i in 0..t {
            s.set(i, i, 0.0);
            for j in 0..i {
                let v = s.get(i, j);
                s.set(j, i, v);
            }
        }
        (a, SimilarityMatrix { s, valid: vec![true; t] })
    }

    #[test]
    fn zero_alpha_is_identity() {
        let (a, s) = random_case(5, 1);
        assert_eq!(fuse_logits(&a, &s, 0.0, &[true; 5]).unwrap(), a);
    }

    #[test]
    fn unit_alpha_gives_prior_on_motion_rows() {
        let (a, s) = random_case(6, 2);
        let f = fuse_logits(&a, &s, 1.0, &[true; 6]).unwrap();
        for i in 0..6 {
            let z = zscore(s.s.row(i), &[true; 6]).unwrap();
            for j in 0..6 {
                assert_abs_diff_eq!(f.get(i + 1, j + 1), z[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn blend_is_convex() {
        let (a, s) = random_case(7, 3);
        let f = fuse_logits(&a, &s, 0.3, &[true; 7]).unwrap();
        for i in 1..8 {
            let ah = zscore(a.row(i), &[true; 8]).unwrap();
            let sh = zscore(s.s.row(i - 1), &[true; 7]).unwrap();
            for j in 1..8 {
                let (lo, hi) = (ah[j].min(sh[j - 1]), ah[j].max(sh[j - 1]));
                assert!(f.get(i, j) >= lo - 1e-12 && f.get(i, j) <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn invalid_keys_are_masked() {
        let (a, mut s) = random_case(4, 4);
        s.valid[2] = false;
        let mut valid = vec![true; 4];
        valid[2] = false;
        let f = fuse_logits(&a, &s, 0.5, &valid).unwrap();
        for i in 0..5 {
            assert_eq!(f.get(i, 3), f64::NEG_INFINITY);
        }
        assert!(fuse_logits(&a, &s, 0.5, &[true; 3]).is_err());
    }

    #[test]
    fn zscore_preserves_row_argmax() {
        let (_, s) = random_case(9, 5);
        let prior = SpectralPrior::new(&s);
        for i in 0..9 {
            let am = |r: &[f64]| {
                (0..r.len())
                    .max_by(|&a, &b| r[a].total_cmp(&r[b]).then(b.cmp(&a)))
                    .unwrap()
            };
            assert_eq!(am(s.s.row(i)), am(prior.s_hat.row(i)));
        }
    }
}
