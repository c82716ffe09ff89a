//! Synthetic motion with known per-frame complexity labels.
//!
//! Recipes are written as `+`-joined segments, e.g. `static:32+sine:2:32+noise:32`:
//!
//! * `static:LEN` holds the previous pose (label 0)
//! * `sine:BIN:LEN` has first differences that are a cosine at DCT bin `BIN` of the
//!   configured window (label 1)
//! * `chirp:FROM:TO:LEN` sweeps the bin linearly from `FROM` to `TO` (label 1)
//! * `noise:LEN` draws i.i.d. standard normal rows (label 2)
//!
//! Every output is linear in `amplitude` for a fixed seed.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};
use crate::rng::{stream_rng, Rng, Stream};
use crate::types::{MotionSequence, TextCondition};

pub const LABEL_STATIC: u8 = 0;
pub const LABEL_PERIODIC: u8 = 1;
pub const LABEL_IRREGULAR: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SegmentKind {
    Static,
    Sine { bin: f64 },
    Chirp { from: f64, to: f64 },
    Noise,
}

impl SegmentKind {
    pub fn label(&self) -> u8 {
        match self {
            SegmentKind::Static => LABEL_STATIC,
            SegmentKind::Sine { .. } | SegmentKind::Chirp { .. } => LABEL_PERIODIC,
            SegmentKind::Noise => LABEL_IRREGULAR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub segments: Vec<Segment>,
    pub dims: usize,
    pub amplitude: f64,
    /// Window length the sine bins refer to.
    pub window: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn single(kind: SegmentKind, frames: usize, dims: usize, window: usize, seed: u64) -> Self {
        Self {
            segments: vec![Segment { kind, len: frames }],
            dims,
            amplitude: 1.0,
            window,
            seed,
        }
    }

    pub fn from_recipe(recipe: &str, dims: usize, window: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            segments: parse_recipe(recipe)?,
            dims,
            amplitude: 1.0,
            window,
            seed,
        })
    }

    pub fn frames(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() || self.frames() == 0 {
            return Err(Error::BadSpec("no frames".into()));
        }
        if self.dims == 0 {
            return Err(Error::BadSpec("dims must be positive".into()));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::BadSpec("amplitude must be positive".into()));
        }
        if self.window < 2 {
            return Err(Error::BadSpec("window must be at least 2".into()));
        }
        let max_bin = (self.window - 1) as f64;
        for s in &self.segments {
            if s.len == 0 {
                return Err(Error::BadSpec("empty segment".into()));
            }
            let bins = match s.kind {
                SegmentKind::Sine { bin } => vec![bin],
                SegmentKind::Chirp { from, to } => vec![from, to],
                _ => vec![],
            };
            if bins.iter().any(|b| !(1.0..=max_bin).contains(b)) {
                return Err(Error::BadSpec(format!(
                    "bins must lie in [1, {}]",
                    self.window - 1
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SegmentKind::Static => write!(f, "static:{}", self.len),
            SegmentKind::Sine { bin } => write!(f, "sine:{bin}:{}", self.len),
            SegmentKind::Chirp { from, to } => write!(f, "chirp:{from}:{to}:{}", self.len),
            SegmentKind::Noise => write!(f, "noise:{}", self.len),
        }
    }
}

impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| -> Result<f64> {
            p.parse()
                .map_err(|_| Error::BadSpec(format!("cannot parse `{p}` in `{s}`")))
        };
        let len = |p: &str| -> Result<usize> {
            p.parse()
                .map_err(|_| Error::BadSpec(format!("cannot parse length `{p}` in `{s}`")))
        };
        let seg = match parts.as_slice() {
            ["static", n] => Segment {
                kind: SegmentKind::Static,
                len: len(n)?,
            },
            ["noise", n] => Segment {
                kind: SegmentKind::Noise,
                len: len(n)?,
            },
            ["sine", m, n] => Segment {
                kind: SegmentKind::Sine { bin: num(m)? },
                len: len(n)?,
            },
            ["chirp", a, b, n] => Segment {
                kind: SegmentKind::Chirp {
                    from: num(a)?,
                    to: num(b)?,
                },
                len: len(n)?,
            },
            _ => return Err(Error::BadSpec(format!("unrecognized segment `{s}`"))),
        };
        Ok(seg)
    }
}

pub fn parse_recipe(recipe: &str) -> Result<Vec<Segment>> {
    recipe.split('+').map(str::parse).collect()
}

/// Generates the sequence and its per-frame labels.
pub fn synth_motion(spec: &SynthSpec) -> Result<(MotionSequence, Vec<u8>)> {
    spec.validate()?;
    let dims = spec.dims;
    let a = spec.amplitude;
    let w = spec.window as f64;
    let mut rng = stream_rng(spec.seed, Stream::Corpus, 0);

    let mut dir: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm(&dir);
    if n > 0.0 {
        dir.iter_mut().for_each(|x| *x /= n);
    } else {
        dir[0] = 1.0;
    }
    let base: Vec<f64> = (0..dims)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            a * z
        })
        .collect();

    let mut frames = Matrix::zeros(spec.frames(), dims);
    let mut labels = Vec::with_capacity(spec.frames());
    let mut prev = base;
    let mut t = 0;
    for seg in &spec.segments {
        let mut phase = 0.0;
        for tau in 0..seg.len {
            let row: Vec<f64> = match seg.kind {
                SegmentKind::Static => prev.clone(),
                SegmentKind::Noise => (0..dims)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        a * z
                    })
                    .collect(),
                SegmentKind::Sine { bin } => {
                    let c = (PI * (tau as f64 + 0.5) * bin / w).cos();
                    step(&prev, &dir, a * c)
                }
                SegmentKind::Chirp { from, to } => {
                    let frac = if seg.len > 1 {
                        tau as f64 / (seg.len - 1) as f64
                    } else {
                        0.0
                    };
                    let bin = from + (to - from) * frac;
                    let c = (phase + PI * bin / (2.0 * w)).cos();
                    phase += PI * bin / w;
                    step(&prev, &dir, a * c)
                }
            };
            frames.row_mut(t).copy_from_slice(&row);
            labels.push(seg.kind.label());
            prev = row;
            t += 1;
        }
    }
    Ok((MotionSequence::dense(frames)?, labels))
}

fn step(prev: &[f64], dir: &[f64], scale: f64) -> Vec<f64> {
    prev.iter().zip(dir).map(|(p, d)| p + scale * d).collect()
}

/// Sequences with per-frame complexity labels and per-sequence text conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub sequences: Vec<MotionSequence>,
    pub complexity_labels: Vec<Vec<u8>>,
    pub text_conditions: Vec<TextCondition>,
}

impl LabeledCorpus {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// All frames of all sequences stacked row-wise.
    pub fn stacked_frames(&self) -> Matrix {
        let dims = self.sequences.first().map_or(0, |s| s.dims());
        let rows: Vec<&[f64]> = self
            .sequences
            .iter()
            .flat_map(|s| s.frames().iter_rows())
            .collect();
        let mut m = Matrix::zeros(rows.len(), dims);
        for (i, r) in rows.into_iter().enumerate() {
            m.row_mut(i).copy_from_slice(r);
        }
        m
    }
}

/// Condition vector for a synthetic sequence: a seeded Gaussian direction.
pub fn synth_condition(dims: usize, seed: u64, id: u64) -> TextCondition {
    let mut rng = stream_rng(seed, Stream::Corpus, 1_000_000 + id);
    let v = (0..dims).map(|_| StandardNormal.sample(&mut rng)).collect();
    TextCondition::new(v).expect("gaussian draws are finite")
}

/// Builds `count` sequences from one recipe, each with its own noise seed.
pub fn recipe_corpus(
    recipe: &[Segment],
    count: usize,
    dims: usize,
    window: usize,
    seed: u64,
) -> Result<LabeledCorpus> {
    let mut corpus = LabeledCorpus {
        sequences: Vec::with_capacity(count),
        complexity_labels: Vec::with_capacity(count),
        text_conditions: Vec::with_capacity(count),
    };
    for i in 0..count {
        let spec = SynthSpec {
            segments: recipe.to_vec(),
            dims,
            amplitude: 1.0,
            window,
            seed: derive_seed(seed, i as u64),
        };
        let (seq, labels) = synth_motion(&spec)?;
        corpus.sequences.push(seq);
        corpus.complexity_labels.push(labels);
        corpus.text_conditions.push(synth_condition(dims, seed, i as u64));
    }
    Ok(corpus)
}

/// Which dynamic segment kinds a mixed corpus draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// Static, sine and i.i.d. noise blocks; at least one static and one noise block.
    Irregular,
    /// Static, sine and chirp blocks; at least one static and one sine block.
    Periodic,
}

/// Sequences made of `segments_per_sequence` shuffled blocks of the kinds
/// allowed by `dynamics`.
///
/// Every sequence contains at least one static and one dynamic block so that
/// complexity varies within each sequence.
pub fn mixed_corpus(
    count: usize,
    segments_per_sequence: usize,
    segment_len: usize,
    dims: usize,
    window: usize,
    dynamics: Dynamics,
    seed: u64,
) -> Result<LabeledCorpus> {
    if segments_per_sequence < 2 {
        return Err(Error::BadSpec("need at least two segments per sequence".into()));
    }
    if window < 4 {
        return Err(Error::BadSpec("mixed corpora need a window of at least 4".into()));
    }
    let mut rng: Rng = stream_rng(seed, Stream::Corpus, 2);
    let mut recipes = Vec::with_capacity(count);
    for _ in 0..count {
        let sine = |rng: &mut Rng| SegmentKind::Sine {
            bin: rng.random_range(1..window / 2) as f64,
        };
        let mut kinds = match dynamics {
            Dynamics::Irregular => vec![SegmentKind::Static, SegmentKind::Noise],
            Dynamics::Periodic => vec![SegmentKind::Static, sine(&mut rng)],
        };
        while kinds.len() < segments_per_sequence {
            kinds.push(match (rng.random_range(0..3), dynamics) {
                (0, _) => SegmentKind::Static,
                (1, _) => sine(&mut rng),
                (_, Dynamics::Irregular) => SegmentKind::Noise,
                (_, Dynamics::Periodic) => {
                    let from = rng.random_range(1..window / 2) as f64;
                    SegmentKind::Chirp {
                        from,
                        to: from + 1.0,
                    }
                }
            });
        }
        kinds.shuffle(&mut rng);
        recipes.push(
            kinds
                .into_iter()
                .map(|kind| Segment {
                    kind,
                    len: segment_len,
                })
                .collect::<Vec<_>>(),
        );
    }
    let mut corpus = LabeledCorpus {
        sequences: Vec::with_capacity(count),
        complexity_labels: Vec::with_capacity(count),
        text_conditions: Vec::with_capacity(count),
    };
    for (i, segments) in recipes.into_iter().enumerate() {
        let spec = SynthSpec {
            segments,
            dims,
            amplitude: 1.0,
            window,
            seed: derive_seed(seed, i as u64),
        };
        let (seq, labels) = synth_motion(&spec)?;
        corpus.sequences.push(seq);
        corpus.complexity_labels.push(labels);
        corpus.text_conditions.push(synth_condition(dims, seed, i as u64));
    }
    Ok(corpus)
}

/// Mixes a run seed with an item index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, id: u64) -> u64 {
    let mut z = seed ^ id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
