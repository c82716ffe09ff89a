//! Frame-to-token quantization against a codebook, the inverse embedding lookup,
//! and a k-means codebook fit for desk-scale corpora.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream_rng, Stream};
use crate::types::{Codebook, TokenState};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index of the nearest codebook entry; ties go to the lowest index.
pub fn nearest(x: &[f64], codebook: &Codebook) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for v in 0..codebook.size() {
        let d = sq_dist(x, codebook.entry(v));
        if d < best.1 {
            best = (v, d);
        }
    }
    best
}

/// Nearest-neighbour token for every row of `features`.
pub fn quantize(features: &Matrix, codebook: &Codebook) -> Result<Vec<usize>> {
    if features.cols() != codebook.dim() {
        return Err(Error::DimMismatch {
            expected: codebook.dim(),
            got: features.cols(),
        });
    }
    Ok(features
        .iter_rows()
        .map(|row| nearest(row, codebook).0)
        .collect())
}

/// Embeds tokens through the codebook; masked positions receive `mask_fill`.
pub fn lookup_embeddings(
    tokens: &TokenState,
    codebook: &Codebook,
    mask_fill: &[f64],
) -> Result<Matrix> {
    if mask_fill.len() != codebook.dim() {
        return Err(Error::DimMismatch {
            expected: codebook.dim(),
            got: mask_fill.len(),
        });
    }
    let mut out = Matrix::zeros(tokens.len(), codebook.dim());
    for (t, tok) in tokens.tokens.iter().enumerate() {
        let row = match tok {
            Some(v) if *v < codebook.size() => codebook.entry(*v),
            Some(v) => {
                return Err(Error::TokenOutOfRange {
                    token: *v,
                    vocab: codebook.size(),
                })
            }
            None => mask_fill,
        };
        out.row_mut(t).copy_from_slice(row);
    }
    Ok(out)
}

/// Codebook rows for a plain token list.
pub fn embed_tokens(tokens: &[usize], codebook: &Codebook) -> Result<Matrix> {
    lookup_embeddings(&TokenState::from_tokens(tokens), codebook, &codebook.centroid())
}

/// Sum of squared distances from each sample to its nearest entry.
pub fn quantization_error(features: &Matrix, codebook: &Codebook) -> f64 {
    features
        .iter_rows()
        .map(|row| nearest(row, codebook).1)
        .sum()
}

#[derive(Debug, Clone)]
pub struct CodebookFit {
    pub codebook: Codebook,
    /// Total quantization error after initialization and after each iteration.
    pub error_history: Vec<f64>,
}

/// Lloyd's k-means with farthest-point initialization.
///
/// The first centre is a seeded random sample; each further centre is the sample
/// farthest from the current centres. Clusters left empty by an assignment step
/// are reseeded to the sample with the largest residual.
pub fn fit_codebook(features: &Matrix, vocab: usize, iters: usize, seed: u64) -> Result<Codebook> {
    fit_codebook_traced(features, vocab, iters, seed).map(|f| f.codebook)
}

pub fn fit_codebook_traced(
    features: &Matrix,
    vocab: usize,
    iters: usize,
    seed: u64,
) -> Result<CodebookFit> {
    let n = features.rows();
    if n < vocab || vocab < 2 {
        return Err(Error::TooFewSamples {
            needed: vocab.max(2),
            got: n,
        });
    }
    if iters == 0 {
        return Err(Error::OutOfRange {
            name: "iters",
            value: 0.0,
        });
    }
    if !features.is_finite() {
        return Err(Error::NonFinite("codebook training features"));
    }
    let dim = features.cols();
    let mut rng = stream_rng(seed, Stream::Codebook, 0);

    let mut centres = Matrix::zeros(vocab, dim);
    let first = rng.random_range(0..n);
    centres.row_mut(0).copy_from_slice(features.row(first));
    let mut min_d: Vec<f64> = features
        .iter_rows()
        .map(|r| sq_dist(r, features.row(first)))
        .collect();
    for c in 1..vocab {
        let far = argmax_first(&min_d);
        centres.row_mut(c).copy_from_slice(features.row(far));
        for (i, row) in features.iter_rows().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(row, features.row(far)));
        }
    }

    let mut codebook = Codebook::new(centres)?;
    let mut history = vec![quantization_error(features, &codebook)];
    for _ in 0..iters {
        let assign: Vec<(usize, f64)> = features
            .iter_rows()
            .map(|r| nearest(r, &codebook))
            .collect();
        let mut sums = Matrix::zeros(vocab, dim);
        let mut counts = vec![0usize; vocab];
        for (row, &(c, _)) in features.iter_rows().zip(&assign) {
            counts[c] += 1;
            for (s, x) in sums.row_mut(c).iter_mut().zip(row) {
                *s += x;
            }
        }
        let mut residual: Vec<f64> = assign.iter().map(|&(_, d)| d).collect();
        let mut next = codebook.entries().clone();
        for c in 0..vocab {
            if counts[c] > 0 {
                let k = counts[c] as f64;
                for (dst, s) in next.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / k;
                }
            } else {
                let far = argmax_first(&residual);
                next.row_mut(c).copy_from_slice(features.row(far));
                residual[far] = 0.0;
            }
        }
        codebook = Codebook::new(next)?;
        history.push(quantization_error(features, &codebook));
    }
    Ok(CodebookFit {
        codebook,
        error_history: history,
    })
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn two_point() -> Codebook {
        Codebook::new(Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap()).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let cb = two_point();
        let x = Matrix::from_rows(&[[0.9, 0.8], [0.5, 0.5], [0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(quantize(&x, &cb).unwrap(), vec![1, 0, 0, 1]);
        let bad = Matrix::zeros(1, 3);
        assert!(matches!(quantize(&bad, &cb), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn lookup_examples() {
        let cb = two_point();
        let out = embed_tokens(&[0, 1], &cb).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.0]);
        assert_eq!(out.row(1), &[1.0, 1.0]);
        let masked = TokenState::fully_masked(1);
        let out = lookup_embeddings(&masked, &cb, &cb.centroid()).unwrap();
        assert_eq!(out.row(0), &[0.5, 0.5]);
        let bad = TokenState::from_tokens(&[2]);
        assert_eq!(
            lookup_embeddings(&bad, &cb, &cb.centroid()),
            Err(Error::TokenOutOfRange { token: 2, vocab: 2 })
        );
        let back = quantize(cb.entries(), &cb).unwrap();
        assert_eq!(back, vec![0, 1]);
    }

    #[test]
    fn exact_cover_fit() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [3.0, 1.0], [-2.0, 5.0], [7.0, 7.0]]).unwrap();
        let fit = fit_codebook_traced(&pts, 4, 5, 11).unwrap();
        assert_eq!(*fit.error_history.last().unwrap(), 0.0);
        let mut rows: Vec<Vec<f64>> = fit.codebook.entries().iter_rows().map(|r| r.to_vec()).collect();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(rows, vec![vec![-2.0, 5.0], vec![0.0, 0.0], vec![3.0, 1.0], vec![7.0, 7.0]]);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            fit_codebook(&Matrix::zeros(3, 2), 4, 1, 0),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn blobs_recovered() {
        let sigma = 0.5;
        let per_blob = 200;
        let mut rng = stream_rng(5, Stream::Corpus, 0);
        let means = [[-10.0, 0.0], [10.0, 4.0]];
        let mut rows = Vec::new();
        for m in means {
            for _ in 0..per_blob {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                rows.push([m[0] + sigma * a, m[1] + sigma * b]);
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let cb = fit_codebook(&x, 2, 10, 3).unwrap();
        let tol = 3.0 * sigma / (per_blob as f64).sqrt();
        for m in means {
            let hit = cb
                .entries()
                .iter_rows()
                .any(|c| (c[0] - m[0]).abs() < tol && (c[1] - m[1]).abs() < tol);
            assert!(hit, "no centroid near {m:?}: {:?}", cb.entries());
        }
        assert_eq!(cb, fit_codebook(&x, 2, 10, 3).unwrap());
    }

    proptest! {
        #[test]
        fn quantize_matches_exhaustive_scan(
            seed in 0u64..1000,
            t in 1usize..30,
            v in 2usize..12,
            d in 1usize..5,
        ) {
            let mut rng = stream_rng(seed, Stream::Corpus, 1);
            let mut draw = |r: usize| Matrix::from_fn(r, d, |_, _| {
                // coarse grid so exact ties actually occur
                (rng.random_range(-3i32..=3)) as f64 * 0.5
            });
            let cb = Codebook::new(draw(v)).unwrap();
            let x = draw(t);
            let got = quantize(&x, &cb).unwrap();
            for (row, &tok) in x.iter_rows().zip(&got) {
                let dists: Vec<f64> = (0..v)
                    .map(|j| (0..d).map(|k| (row[k] - cb.entry(j)[k]).powi(2)).sum())
                    .collect();
                let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
                let first = dists.iter().position(|&q| q == min).unwrap();
                prop_assert_eq!(tok, first);
            }
        }

        #[test]
        fn lloyd_error_never_increases(seed in 0u64..200, v in 2usize..8) {
            let mut rng = stream_rng(seed, Stream::Corpus, 2);
            let x = Matrix::from_fn(40, 3, |_, _| StandardNormal.sample(&mut rng));
            let fit = fit_codebook_traced(&x, v, 8, seed).unwrap();
            for w in fit.error_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
        }
    }
}
