//! Small statistics helpers shared by masking, attention fusion and decoding.

use crate::error::{Error, Result};

/// Population standard deviations below this are treated as zero.
pub const ZSCORE_MIN_STD: f64 = 1e-12;

/// Standardizes `values` over the entries flagged in `valid`.
///
/// Uses the population standard deviation. Invalid entries come back as 0, and a
/// (numerically) constant input maps to all zeros instead of failing.
pub fn zscore(values: &[f64], valid: &[bool]) -> Result<Vec<f64>> {
    assert_eq!(values.len(), valid.len(), "values/valid length mismatch");
    let n = valid.iter().filter(|&&v| v).count();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mean = masked(values, valid).sum::<f64>() / n as f64;
    let var = masked(values, valid).map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    Ok(values
        .iter()
        .zip(valid)
        .map(|(&x, &ok)| {
            if ok && std >= ZSCORE_MIN_STD {
                (x - mean) / std
            } else {
                0.0
            }
        })
        .collect())
}

fn masked<'a>(values: &'a [f64], valid: &'a [bool]) -> impl Iterator<Item = f64> + 'a {
    values.iter().zip(valid).filter(|(_, &ok)| ok).map(|(&x, _)| x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `⌈x⌉` that ignores floating-point dust just above an integer, so that
/// `n · cos(π/2)` rounds up to 0 rather than 1.
pub fn ceil_budget(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Fractional ranks (1-based, ties share their average rank).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}
