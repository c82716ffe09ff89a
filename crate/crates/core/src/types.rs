//! Validated domain types. Construction rejects non-finite values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-frame motion features with a validity mask for padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    frames: Matrix,
    valid: Vec<bool>,
}

impl MotionSequence {
    pub fn new(frames: Matrix, valid: Vec<bool>) -> Result<Self> {
        if frames.rows() == 0 {
            return Err(Error::TooShort { min: 1, got: 0 });
        }
        if valid.len() != frames.rows() {
            return Err(Error::DimMismatch {
                expected: frames.rows(),
                got: valid.len(),
            });
        }
        if !frames.is_finite() {
            return Err(Error::NonFinite("motion frames"));
        }
        if !valid.iter().any(|&v| v) {
            return Err(Error::EmptyInput);
        }
        Ok(Self { frames, valid })
    }

    /// All frames valid.
    pub fn dense(frames: Matrix) -> Result<Self> {
        let n = frames.rows();
        Self::new(frames, vec![true; n])
    }

    pub fn frames(&self) -> &Matrix {
        &self.frames
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn dims(&self) -> usize {
        self.frames.cols()
    }
}

/// Token embedding table. Index order is the token id; duplicate rows are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    entries: Matrix,
}

impl Codebook {
    pub fn new(entries: Matrix) -> Result<Self> {
        if entries.rows() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "codebook needs at least 2 entries, got {}",
                entries.rows()
            )));
        }
        if !entries.is_finite() {
            return Err(Error::NonFinite("codebook"));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn entry(&self, token: usize) -> &[f64] {
        self.entries.row(token)
    }

    /// Number of tokens `V`.
    pub fn size(&self) -> usize {
        self.entries.rows()
    }

    /// Embedding width `D`.
    pub fn dim(&self) -> usize {
        self.entries.cols()
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim()];
        for row in self.entries.iter_rows() {
            for (a, b) in c.iter_mut().zip(row) {
                *a += b;
            }
        }
        let v = self.size() as f64;
        c.iter_mut().for_each(|a| *a /= v);
        c
    }
}

/// A token id, or `None` for the mask sentinel.
pub type Token = Option<usize>;

/// Token sequence under masking or decoding. Token ids are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenState {
    pub tokens: Vec<Token>,
    /// Positions finalized during decoding.
    pub frozen: Vec<bool>,
    pub valid: Vec<bool>,
}

impl TokenState {
    pub fn new(tokens: Vec<Token>, valid: Vec<bool>) -> Result<Self> {
        if tokens.len() != valid.len() {
            return Err(Error::DimMismatch {
                expected: tokens.len(),
                got: valid.len(),
            });
        }
        let frozen = vec![false; tokens.len()];
        Ok(Self {
            tokens,
            frozen,
            valid,
        })
    }

    pub fn from_tokens(tokens: &[usize]) -> Self {
        Self {
            tokens: tokens.iter().map(|&t| Some(t)).collect(),
            frozen: vec![false; tokens.len()],
            valid: vec![true; tokens.len()],
        }
    }

    pub fn fully_masked(len: usize) -> Self {
        Self {
            tokens: vec![None; len],
            frozen: vec![false; len],
            valid: vec![true; len],
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn check_vocab(&self, vocab: usize) -> Result<()> {
        for (t, ok) in self.tokens.iter().zip(&self.valid) {
            if let (Some(t), true) = (t, ok) {
                if *t >= vocab {
                    return Err(Error::TokenOutOfRange { token: *t, vocab });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextCondition {
    vector: Vec<f64>,
}

impl TextCondition {
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::EmptyInput);
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("text condition"));
        }
        Ok(Self { vector })
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Per-frame spectral descriptors `phi` (unit-norm or zero rows) and their means `omega`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub phi: Matrix,
    pub omega: Vec<f64>,
    pub valid: Vec<bool>,
}

impl SpectralProfile {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn window(&self) -> usize {
        self.phi.cols()
    }
}
