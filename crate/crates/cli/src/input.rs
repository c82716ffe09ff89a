use std::path::{Path, PathBuf};

use motionmask::io::{read_codebook, read_condition, read_matrix_csv, read_motion, read_text};
use motionmask::matrix::Matrix;
use motionmask::synth::{synth_condition, LabeledCorpus};
use motionmask::types::{Codebook, MotionSequence, TextCondition};

use crate::CliError;

fn label(path: &Path) -> String {
    path.display().to_string()
}

pub fn motion(path: &Path) -> Result<Matrix, CliError> {
    Ok(read_motion(&read_text(path)?, &label(path))?)
}

pub fn condition(path: &Path) -> Result<TextCondition, CliError> {
    Ok(read_condition(&read_text(path)?, &label(path))?)
}

pub fn codebook(path: &Path) -> Result<Codebook, CliError> {
    Ok(read_codebook(&read_text(path)?, &label(path))?)
}

/// Motion files of a corpus directory (`*.csv`, `*.jsonl`, sorted by name),
/// excluding `conditions.csv`.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.file_name().is_some_and(|n| n != "conditions.csv")
                && p.extension().is_some_and(|x| x == "csv" || x == "jsonl")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Input(format!("{}: no motion files", dir.display())));
    }
    Ok(files)
}

/// Loads a corpus directory. Conditions come from `conditions.csv` (one row per
/// motion file) or are drawn from the seed.
pub fn corpus(dir: &Path, seed: u64) -> Result<(LabeledCorpus, Vec<PathBuf>), CliError> {
    let mut files = corpus_files(dir)?;
    let mut sequences = Vec::with_capacity(files.len());
    for f in &files {
        sequences.push(MotionSequence::dense(motion(f)?)?);
    }
    let dims = sequences[0].dims();
    if let Some(bad) = sequences.iter().position(|s| s.dims() != dims) {
        return Err(CliError::Input(format!(
            "{}: expected {dims} feature columns, found {}",
            files[bad].display(),
            sequences[bad].dims()
        )));
    }
    let cond_path = dir.join("conditions.csv");
    let text_conditions = if cond_path.exists() {
        let m = read_matrix_csv(&read_text(&cond_path)?, &label(&cond_path))?;
        if m.rows() != sequences.len() {
            return Err(CliError::Input(format!(
                "{}: {} rows for {} motion files",
                cond_path.display(),
                m.rows(),
                sequences.len()
            )));
        }
        files.push(cond_path);
        m.iter_rows()
            .map(|r| TextCondition::new(r.to_vec()))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        (0..sequences.len() as u64).map(|i| synth_condition(dims, seed, i)).collect()
    };
    let complexity_labels = sequences.iter().map(|s| vec![0; s.len()]).collect();
    Ok((
        LabeledCorpus {
            sequences,
            complexity_labels,
            text_conditions,
        },
        files,
    ))
}
