//! Short-time spectral complexity descriptors of embedding-space motion.
//!
//! For each frame the velocity (first difference) is windowed around the frame,
//! transformed with an unnormalized Type-II DCT along time, aggregated over feature
//! dimensions by L2 norm and normalized to a unit descriptor `phi`. Its mean `omega`
//! is the scalar complexity: `1/W` for a single active bin, up to `1/√W` for a
//! flat spectrum, and 0 for a frame with no motion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::SpectralProfile;

/// First differences along time; the first row repeats the second.
pub fn velocity(embeddings: &Matrix) -> Result<Matrix> {
    let t = embeddings.rows();
    if t < 2 {
        return Err(Error::TooShort { min: 2, got: t });
    }
    if !embeddings.is_finite() {
        return Err(Error::NonFinite("embeddings"));
    }
    let mut v = Matrix::zeros(t, embeddings.cols());
    for i in 1..t {
        let (prev, cur) = (embeddings.row(i - 1), embeddings.row(i));
        for (o, (c, p)) in v.row_mut(i).iter_mut().zip(cur.iter().zip(prev)) {
            *o = c - p;
        }
    }
    let second = v.row(1).to_vec();
    v.row_mut(0).copy_from_slice(&second);
    Ok(v)
}

/// Cosine basis `cos(π/W · (n + ½) · k)`, indexed `[k][n]`.
#[derive(Debug, Clone)]
pub struct DctBasis {
    w: usize,
    table: Vec<f64>,
}

impl DctBasis {
    pub fn new(w: usize) -> Self {
        let wf = w as f64;
        let mut table = Vec::with_capacity(w * w);
        for k in 0..w {
            for n in 0..w {
                table.push((PI / wf * (n as f64 + 0.5) * k as f64).cos());
            }
        }
        Self { w, table }
    }

    pub fn len(&self) -> usize {
        self.w
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0
    }

    /// Transforms each column of a `W × D` window.
    pub fn apply(&self, window: &Matrix) -> Result<Matrix> {
        if window.rows() != self.w {
            return Err(Error::ShapeMismatch(format!(
                "window has {} rows, expected {}",
                window.rows(),
                self.w
            )));
        }
        let mut out = Matrix::zeros(self.w, window.cols());
        for k in 0..self.w {
            let basis = &self.table[k * self.w..(k + 1) * self.w];
            let row = out.row_mut(k);
            for (n, &c) in basis.iter().enumerate() {
                for (o, &x) in row.iter_mut().zip(window.row(n)) {
                    *o += x * c;
                }
            }
        }
        Ok(out)
    }
}

/// Unnormalized Type-II DCT of every column; the window length is the row count.
pub fn dct_window(window: &Matrix) -> Result<Matrix> {
    DctBasis::new(window.rows()).apply(window)
}

/// L2 norm of each DCT row across feature dimensions.
pub fn spectrum_magnitude(spectrum: &Matrix) -> Result<Vec<f64>> {
    if !spectrum.is_finite() {
        return Err(Error::NonFinite("spectrum"));
    }
    Ok(spectrum
        .iter_rows()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect())
}

/// `f / (‖f‖ + ε)`; the zero spectrum stays zero.
pub fn normalize_msd(f: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if f.iter().any(|&x| x < 0.0) {
        return Err(Error::NegativeInput);
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("magnitude spectrum"));
    }
    let n = f.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = n + epsilon;
    Ok(f.iter().map(|x| x / denom).collect())
}

/// Mean activation of a descriptor.
pub fn omega(phi: &[f64]) -> f64 {
    if phi.is_empty() {
        return 0.0;
    }
    phi.iter().sum::<f64>() / phi.len() as f64
}

/// Frame range `[t − ⌊W/2⌋, t + ⌈W/2⌉ − 1]`, clamped per index to `[0, len−1]`.
pub fn window_indices(t: usize, w: usize, len: usize) -> impl Iterator<Item = usize> {
    let left = (w / 2) as isize;
    let last = (len - 1) as isize;
    (0..w).map(move |n| (t as isize - left + n as isize).clamp(0, last) as usize)
}

/// Descriptor for every frame; invalid frames get zero rows.
pub fn msd_sequence(embeddings: &Matrix, valid: &[bool], config: &Config) -> Result<SpectralProfile> {
    msd_with(embeddings, valid, config.window, config.epsilon)
}

pub fn msd_with(embeddings: &Matrix, valid: &[bool], w: usize, epsilon: f64) -> Result<SpectralProfile> {
    let t = embeddings.rows();
    if valid.len() != t {
        return Err(Error::DimMismatch {
            expected: t,
            got: valid.len(),
        });
    }
    let v = velocity(embeddings)?;
    let basis = DctBasis::new(w);
    let mut phi = Matrix::zeros(t, w);
    let mut om = vec![0.0; t];
    let mut window = Matrix::zeros(w, v.cols());
    for i in (0..t).filter(|&i| valid[i]) {
        for (n, src) in window_indices(i, w, t).enumerate() {
            window.row_mut(n).copy_from_slice(v.row(src));
        }
        let spec = basis.apply(&window)?;
        let f = spectrum_magnitude(&spec)?;
        let p = normalize_msd(&f, epsilon)?;
        om[i] = omega(&p);
        phi.row_mut(i).copy_from_slice(&p);
    }
    Ok(SpectralProfile {
        phi,
        omega: om,
        valid: valid.to_vec(),
    })
}

/// Softmax-normalized `exp(−k/3)`: more weight on low-frequency bins.
pub fn frequency_weights(w: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..w).map(|k| (-(k as f64) / 3.0).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

/// `−(1/τ) Σ_k w_k (φ_i,k − φ_j,k)²`
pub fn spectral_similarity(phi_i: &[f64], phi_j: &[f64], weights: &[f64], tau: f64) -> f64 {
    let d: f64 = phi_i
        .iter()
        .zip(phi_j)
        .zip(weights)
        .map(|((a, b), w)| w * (a - b).powi(2))
        .sum();
    -d / tau
}

/// Pairwise spectral similarity between frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub s: Matrix,
    pub valid: Vec<bool>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }
}

/// All pairwise similarities. Rows and columns of invalid frames hold the
/// smallest valid entry minus one.
pub fn similarity_matrix(profile: &SpectralProfile, tau: f64) -> SimilarityMatrix {
    let t = profile.len();
    let weights = frequency_weights(profile.window());
    let mut s = Matrix::zeros(t, t);
    let mut min = 0.0f64;
    for i in 0..t {
        if !profile.valid[i] {
            continue;
        }
        for j in i..t {
            if !profile.valid[j] {
                continue;
            }
            let v = spectral_similarity(profile.phi.row(i), profile.phi.row(j), &weights, tau);
            s.set(i, j, v);
            s.set(j, i, v);
            min = min.min(v);
        }
    }
    let sentinel = min - 1.0;
    for i in 0..t {
        for j in 0..t {
            if !(profile.valid[i] && profile.valid[j]) {
                s.set(i, j, sentinel);
            }
        }
    }
    SimilarityMatrix {
        s,
        valid: profile.valid.clone(),
    }
}
