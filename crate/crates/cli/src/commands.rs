use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use motionmask::config::Config;
use motionmask::decoding::decode;
use motionmask::experiment::{compare_signals, tokenize_corpus, DEFAULT_RECIPE};
use motionmask::io::{
    load_checkpoint, loss_csv, maskplan_csv, matrix_csv, profile_csv, save_checkpoint, similarity_csv,
    tokens_csv, trace_jsonl, write_text,
};
use motionmask::masking::{cfs_select, dynamic_scores, mask_budget, semantic_scores, Selection};
use motionmask::matrix::Matrix;
use motionmask::model::{train, ModelShape, ToyModel};
use motionmask::rng::{stream_rng, Stream};
use motionmask::spectral::{msd_sequence, similarity_matrix};
use motionmask::synth::{parse_recipe, recipe_corpus, synth_motion, SynthSpec};
use motionmask::tokenizer::{embed_tokens, quantize};
use motionmask::types::MotionSequence;

use crate::manifest::RunManifest;
use crate::{input, CliError, Command, SelectionArg};

struct Output<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl<'a> Output<'a> {
    fn new(dir: &'a Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_text(&path, text)?;
        self.written.push(path);
        Ok(())
    }

    fn finish(self, manifest: RunManifest) -> Result<(), CliError> {
        manifest.finish(self.dir, &self.written)
    }
}

pub fn dispatch(command: &Command, cfg: &Config, out: &Path) -> Result<(), CliError> {
    match command {
        Command::Analyze {
            input,
            synth,
            dims,
            codebook,
            similarity,
        } => analyze(cfg, out, input.as_deref(), synth.as_deref(), *dims, codebook.as_deref(), *similarity),
        Command::Maskplan {
            input,
            condition,
            codebook,
            k,
            r,
        } => maskplan(cfg, out, input, condition, codebook, *k, *r),
        Command::Train {
            corpus,
            synth,
            sequences,
            dims,
            codebook,
            selection,
        } => train_cmd(
            cfg,
            out,
            corpus.as_deref(),
            synth.as_deref(),
            *sequences,
            *dims,
            codebook.as_deref(),
            *selection,
        ),
        Command::Generate {
            checkpoint,
            condition,
            length,
        } => generate(cfg, out, checkpoint, condition, *length),
        Command::CompareSignals {
            synth,
            sequences,
            dims,
        } => signals(cfg, out, synth, *sequences, *dims),
    }
}

fn analyze(
    cfg: &Config,
    out: &Path,
    input: Option<&Path>,
    synth: Option<&str>,
    dims: usize,
    codebook: Option<&Path>,
    with_similarity: bool,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("analyze", cfg);
    let seq = match (input, synth) {
        (Some(path), _) => {
            manifest.input(path)?;
            MotionSequence::dense(input::motion(path)?)?
        }
        (None, Some(recipe)) => synth_motion(&SynthSpec::from_recipe(recipe, dims, cfg.window, cfg.seed)?)?.0,
        (None, None) => return Err(CliError::Config("either --input or --synth is required".into())),
    };
    let features = match codebook {
        Some(path) => {
            manifest.input(path)?;
            let cb = input::codebook(path)?;
            embed_tokens(&quantize(seq.frames(), &cb)?, &cb)?
        }
        None => seq.frames().clone(),
    };
    let profile = msd_sequence(&features, seq.valid(), cfg)?;
    let mut files = Output::new(out)?;
    files.write("analysis.csv", &profile_csv(&profile))?;
    if with_similarity {
        files.write("similarity.csv", &similarity_csv(&similarity_matrix(&profile, cfg.tau)))?;
    }
    let mean = profile.omega.iter().sum::<f64>() / profile.omega.len() as f64;
    println!("frames {} mean_omega {mean}", profile.omega.len());
    files.finish(manifest)
}

fn maskplan(
    cfg: &Config,
    out: &Path,
    motion: &Path,
    condition: &Path,
    codebook: &Path,
    k: Option<usize>,
    r: Option<f64>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("maskplan", cfg);
    for p in [motion, condition, codebook] {
        manifest.input(p)?;
    }
    let seq = MotionSequence::dense(input::motion(motion)?)?;
    let cond = input::condition(condition)?;
    let cb = input::codebook(codebook)?;
    if seq.dims() != cb.dim() {
        return Err(CliError::Config(format!(
            "motion has {} feature columns but the codebook has {}",
            seq.dims(),
            cb.dim()
        )));
    }
    if cond.dim() != cb.dim() {
        return Err(CliError::Config(format!(
            "condition has {} entries but embeddings have {} dimensions",
            cond.dim(),
            cb.dim()
        )));
    }
    let emb = embed_tokens(&quantize(seq.frames(), &cb)?, &cb)?;
    let valid = seq.valid();
    let profile = msd_sequence(&emb, valid, cfg)?;
    let s_dyn = dynamic_scores(&profile, valid)?;
    let s_sem = semantic_scores(&emb, &cond, valid)?;
    let n_valid = valid.iter().filter(|&&v| v).count();
    let budget = match (k, r) {
        (Some(k), _) => k,
        (None, Some(r)) => mask_budget(r, n_valid).map_err(|e| CliError::Config(e.to_string()))?,
        (None, None) => return Err(CliError::Config("one of --k or --r is required".into())),
    };
    let plan = cfs_select(&s_dyn, &s_sem, budget, cfg.lambda_sem, cfg.r_exp, valid);
    let mut files = Output::new(out)?;
    files.write("maskplan.csv", &maskplan_csv(&plan, &s_dyn, &s_sem))?;
    println!("{}", plan.len());
    files.finish(manifest)
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    cfg: &Config,
    out: &Path,
    corpus_dir: Option<&Path>,
    synth: Option<&str>,
    sequences: usize,
    dims: usize,
    codebook: Option<&Path>,
    selection: SelectionArg,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("train", cfg);
    let corpus = match corpus_dir {
        Some(dir) => {
            let (corpus, files) = input::corpus(dir, cfg.seed)?;
            for f in &files {
                manifest.input(f)?;
            }
            corpus
        }
        None => {
            let recipe = parse_recipe(synth.unwrap_or(DEFAULT_RECIPE))?;
            recipe_corpus(&recipe, sequences, dims, cfg.window, cfg.seed)?
        }
    };
    let given = match codebook {
        Some(path) => {
            manifest.input(path)?;
            let cb = input::codebook(path)?;
            let d = corpus.sequences[0].dims();
            if cb.dim() != d {
                return Err(CliError::Input(format!(
                    "{}: codebook has {} columns, corpus has {d}",
                    path.display(),
                    cb.dim()
                )));
            }
            Some(cb)
        }
        None => None,
    };
    let (codebook, samples) = tokenize_corpus(&corpus, given, cfg.vocab, cfg.seed)?;
    let max_len = corpus.sequences.iter().map(|s| s.len()).max().unwrap_or(1);
    let cond_dim = corpus.text_conditions[0].dim();
    if cond_dim != codebook.dim() {
        return Err(CliError::Input(format!(
            "conditions have {cond_dim} entries but embeddings have {} dimensions",
            codebook.dim()
        )));
    }
    let shape = ModelShape::from_config(cfg, codebook.size(), max_len, cond_dim);
    let mut model = ToyModel::init(shape, cfg.seed)?;
    let selection = match selection {
        SelectionArg::Cfs => Selection::ContentFocused,
        SelectionArg::Uniform => Selection::Uniform,
    };
    let report = train(&mut model, &samples, &codebook, cfg, selection)?;

    let mut files = Output::new(out)?;
    let ckpt = out.join("checkpoint");
    save_checkpoint(&ckpt, &model, &codebook)?;
    files
        .written
        .extend(["manifest.json", "params.csv", "codebook.csv"].map(|f| ckpt.join(f)));
    files.write("loss.csv", &loss_csv(&report.epoch_losses))?;
    match (report.epoch_losses.first(), report.epoch_losses.last()) {
        (Some(first), Some(last)) => println!("sequences {} loss {first} -> {last}", samples.len()),
        _ => println!("sequences {} (no epochs)", samples.len()),
    }
    files.finish(manifest)
}

fn generate(cfg: &Config, out: &Path, checkpoint: &Path, condition: &Path, length: usize) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("generate", cfg);
    for f in ["manifest.json", "params.csv", "codebook.csv"] {
        manifest.input(&checkpoint.join(f))?;
    }
    manifest.input(condition)?;
    let (model, codebook) = load_checkpoint(checkpoint)?;
    let cond = input::condition(condition)?;
    if cond.dim() != model.shape.cond_dim {
        return Err(CliError::Input(format!(
            "{}: condition has {} entries, checkpoint expects {}",
            condition.display(),
            cond.dim(),
            model.shape.cond_dim
        )));
    }
    if length == 0 || length > model.shape.max_len {
        return Err(CliError::Input(format!(
            "length {length} outside the checkpoint's range 1..={}",
            model.shape.max_len
        )));
    }
    let mut rng = stream_rng(cfg.seed, Stream::Decoding, 0);
    let trace = decode(&model, &codebook, &cond, length, cfg, &mut rng)?;
    let tokens: Vec<usize> = trace.final_state.tokens.iter().map(|t| t.expect("decoded")).collect();
    let embeddings: Matrix = embed_tokens(&tokens, &codebook)?;

    let mut files = Output::new(out)?;
    files.write("tokens.csv", &tokens_csv(&trace.final_state))?;
    files.write("embeddings.csv", &matrix_csv(&embeddings))?;
    files.write("trace.jsonl", &trace_jsonl(&trace)?)?;
    println!("generated {length} tokens in {} steps", trace.steps.len());
    files.finish(manifest)
}

fn signals(cfg: &Config, out: &Path, recipe: &str, sequences: usize, dims: usize) -> Result<(), CliError> {
    let manifest = RunManifest::new("compare-signals", cfg);
    let corpus = recipe_corpus(&parse_recipe(recipe)?, sequences, dims, cfg.window, cfg.seed)?;
    let cmp = compare_signals(&corpus, cfg)?;
    let mut csv = String::from("signal,sequence,spearman\n");
    for row in &cmp.rows {
        writeln!(csv, "{},{},{}", row.signal.as_str(), row.sequence, row.spearman).unwrap();
    }
    for (signal, mean) in &cmp.means {
        writeln!(csv, "{},mean,{mean}", signal.as_str()).unwrap();
        println!("{} mean_spearman {mean}", signal.as_str());
    }
    let mut files = Output::new(out)?;
    files.write("signals.csv", &csv)?;
    files.finish(manifest)
}
