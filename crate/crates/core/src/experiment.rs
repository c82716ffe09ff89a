//! Synthetic-corpus experiments: complexity-signal ranking and content-focused
//! versus uniform masking.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};
use crate::model::{attention_forward, train, ModelShape, ToyModel, TrainSample};
use crate::masking::Selection;
use crate::spectral::{msd_sequence, velocity, window_indices};
use crate::stats::spearman;
use crate::synth::{mixed_corpus, Dynamics, LabeledCorpus};
use crate::tokenizer::{embed_tokens, fit_codebook, quantize};
use crate::types::{Codebook, MotionSequence, TokenState};

pub const CODEBOOK_ITERS: usize = 25;
/// Recipe used by `compare-signals` when none is given.
pub const DEFAULT_RECIPE: &str = "static:32+sine:2:32+noise:32";
pub const DEFAULT_SEQUENCES: usize = 4;
pub const DEFAULT_DIMS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Omega,
    VelocityMagnitude,
}

impl Signal {
    pub const ALL: [Signal; 2] = [Signal::Omega, Signal::VelocityMagnitude];

    pub fn as_str(&self) -> &'static str {
        match self {
            Signal::Omega => "omega",
            Signal::VelocityMagnitude => "velocity_magnitude",
        }
    }
}

/// Mean velocity norm over each frame's analysis window.
pub fn windowed_speed(frames: &Matrix, window: usize) -> Result<Vec<f64>> {
    let v = velocity(frames)?;
    let speed: Vec<f64> = v.iter_rows().map(norm).collect();
    let t = speed.len();
    Ok((0..t)
        .map(|i| window_indices(i, window, t).map(|j| speed[j]).sum::<f64>() / window as f64)
        .collect())
}

pub fn signal_values(seq: &MotionSequence, signal: Signal, config: &Config) -> Result<Vec<f64>> {
    match signal {
        Signal::Omega => Ok(msd_sequence(seq.frames(), seq.valid(), config)?.omega),
        Signal::VelocityMagnitude => windowed_speed(seq.frames(), config.window),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRow {
    pub signal: Signal,
    pub sequence: usize,
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalComparison {
    pub rows: Vec<SignalRow>,
    /// Mean correlation per signal, in [`Signal::ALL`] order.
    pub means: Vec<(Signal, f64)>,
}

/// Spearman correlation of each signal with the per-frame complexity labels.
pub fn compare_signals(corpus: &LabeledCorpus, config: &Config) -> Result<SignalComparison> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut rows = Vec::new();
    for (i, (seq, labels)) in corpus.sequences.iter().zip(&corpus.complexity_labels).enumerate() {
        if labels.iter().all(|&l| l == labels[0]) {
            return Err(Error::DegenerateLabels(format!(
                "sequence {i} has a single complexity label"
            )));
        }
        let labels: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        for signal in Signal::ALL {
            let values = signal_values(seq, signal, config)?;
            rows.push(SignalRow {
                signal,
                sequence: i,
                spearman: spearman(&values, &labels),
            });
        }
    }
    let means = Signal::ALL
        .iter()
        .map(|&s| {
            let vals: Vec<f64> = rows.iter().filter(|r| r.signal == s).map(|r| r.spearman).collect();
            (s, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    Ok(SignalComparison { rows, means })
}

/// Fits a codebook on all frames (unless one is given) and tokenizes every sequence.
pub fn tokenize_corpus(
    corpus: &LabeledCorpus,
    codebook: Option<Codebook>,
    vocab: usize,
    seed: u64,
) -> Result<(Codebook, Vec<TrainSample>)> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput);
    }
    let codebook = match codebook {
        Some(cb) => cb,
        None => fit_codebook(&corpus.stacked_frames(), vocab, CODEBOOK_ITERS, seed)?,
    };
    let samples = corpus
        .sequences
        .iter()
        .zip(&corpus.text_conditions)
        .map(|(seq, cond)| {
            Ok(TrainSample {
                tokens: quantize(seq.frames(), &codebook)?,
                valid: seq.valid().to_vec(),
                condition: cond.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((codebook, samples))
}

/// Indices of the `⌈n/4⌉` highest values; ties go to the lower index.
pub fn top_quartile(values: &[f64]) -> Vec<usize> {
    let k = values.len().div_ceil(4);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Argmax accuracy on the top-quartile-Ω frames of each sample when exactly
/// those frames are masked.
pub fn high_complexity_accuracy(
    model: &ToyModel,
    samples: &[TrainSample],
    codebook: &Codebook,
    config: &Config,
) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for s in samples {
        let emb = embed_tokens(&s.tokens, codebook)?;
        let profile = msd_sequence(&emb, &s.valid, config)?;
        let targets = top_quartile(&profile.omega);
        let mut tokens: Vec<Option<usize>> = s.tokens.iter().map(|&t| Some(t)).collect();
        for &t in &targets {
            tokens[t] = None;
        }
        let state = TokenState::new(tokens, s.valid.clone())?;
        let (logits, _) = attention_forward(model, &state, &s.condition, Some(&profile), config)?;
        for &t in &targets {
            let row = logits.row(t);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            hits += usize::from(best == s.tokens[t]);
            total += 1;
        }
    }
    Ok(hits as f64 / total.max(1) as f64)
}

/// Corpus layout for the masking comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskingSetup {
    pub train: usize,
    pub held_out: usize,
    pub segments: usize,
    pub segment_len: usize,
    pub dims: usize,
    pub dynamics: Dynamics,
}

impl Default for MaskingSetup {
    fn default() -> Self {
        Self {
            train: 8,
            held_out: 4,
            segments: 3,
            segment_len: 16,
            dims: 4,
            dynamics: Dynamics::Periodic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingOutcome {
    pub content_focused: f64,
    pub uniform: f64,
    pub content_focused_losses: Vec<f64>,
    pub uniform_losses: Vec<f64>,
}

/// Trains two identically initialized models, one per selection rule, and
/// scores both on held-out high-complexity frames.
pub fn masking_comparison(setup: &MaskingSetup, config: &Config) -> Result<MaskingOutcome> {
    let corpus = mixed_corpus(
        setup.train + setup.held_out,
        setup.segments,
        setup.segment_len,
        setup.dims,
        config.window,
        setup.dynamics,
        config.seed,
    )?;
    let train_part = LabeledCorpus {
        sequences: corpus.sequences[..setup.train].to_vec(),
        complexity_labels: corpus.complexity_labels[..setup.train].to_vec(),
        text_conditions: corpus.text_conditions[..setup.train].to_vec(),
    };
    let (codebook, samples) = tokenize_corpus(&train_part, None, config.vocab, config.seed)?;
    let (_, all) = tokenize_corpus(&corpus, Some(codebook.clone()), config.vocab, config.seed)?;
    let held_out = &all[setup.train..];
    let len = setup.segments * setup.segment_len;
    let shape = ModelShape::from_config(config, config.vocab, len, setup.dims);

    let run = |selection| -> Result<(f64, Vec<f64>)> {
        let mut model = ToyModel::init(shape, config.seed)?;
        let report = train(&mut model, &samples, &codebook, config, selection)?;
        let acc = high_complexity_accuracy(&model, held_out, &codebook, config)?;
        Ok((acc, report.epoch_losses))
    };
    let (content_focused, content_focused_losses) = run(Selection::ContentFocused)?;
    let (uniform, uniform_losses) = run(Selection::Uniform)?;
    Ok(MaskingOutcome {
        content_focused,
        uniform,
        content_focused_losses,
        uniform_losses,
    })
}
