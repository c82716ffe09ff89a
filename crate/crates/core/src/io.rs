//! Text file formats: numeric CSV, motion JSONL, analysis and plan exports,
//! decode traces and model checkpoints.
//!
//! Readers take the file contents plus a `source` label used in diagnostics;
//! writers return strings. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoding::DecodeTrace;
use crate::error::{Error, Result};
use crate::masking::MaskPlan;
use crate::matrix::Matrix;
use crate::model::{ModelShape, Params, ToyModel};
use crate::spectral::SimilarityMatrix;
use crate::types::{Codebook, SpectralProfile, TextCondition, TokenState};

pub const CHECKPOINT_FORMAT: u32 = 1;

fn format_err(source: &str, line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{source}:{line}: {msg}"))
}

/// Reads a file, mapping failures to [`Error::Io`] with the path.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Headerless numeric CSV with a constant column count.
pub fn read_matrix_csv(text: &str, source: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            format_err(source, line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(format_err(
                    source,
                    line,
                    format!("expected {c} columns, found {}", record.len()),
                ))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| format_err(source, line, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(format_err(source, line, format!("`{field}` is not finite")));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format(format!("{source}: no data rows")))?;
    Matrix::from_vec(rows, cols, data)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FramesField {
    One(Vec<f64>),
    Many(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
struct FramesLine {
    frames: FramesField,
}

/// JSONL where each line has a `frames` field holding one frame or a list of frames.
pub fn read_motion_jsonl(text: &str, source: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: FramesLine =
            serde_json::from_str(line).map_err(|e| format_err(source, line_no, e))?;
        match parsed.frames {
            FramesField::One(r) => rows.push(r),
            FramesField::Many(rs) => rows.extend(rs),
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != rows[0].len()) {
            return Err(format_err(source, line_no, format!("frame {bad} has a different width")));
        }
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Format(format!("{source}: no frames")));
    }
    Matrix::from_rows(&rows)
}

/// Motion features from CSV or JSONL, chosen by the first non-blank character.
pub fn read_motion(text: &str, source: &str) -> Result<Matrix> {
    if text.trim_start().starts_with('{') {
        read_motion_jsonl(text, source)
    } else {
        read_matrix_csv(text, source)
    }
}

/// Condition vector: every number in a CSV file, in reading order.
pub fn read_condition(text: &str, source: &str) -> Result<TextCondition> {
    let m = read_matrix_csv(text, source)?;
    TextCondition::new(m.into_vec())
}

pub fn read_codebook(text: &str, source: &str) -> Result<Codebook> {
    Codebook::new(read_matrix_csv(text, source)?)
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        write!(out, "{v}").unwrap();
    }
    out.push('\n');
}

pub fn matrix_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.iter_rows() {
        push_row(&mut out, row.iter().copied());
    }
    out
}

/// `t,omega,phi_0..phi_{W-1}`
pub fn profile_csv(profile: &SpectralProfile) -> String {
    let mut out = String::from("t,omega");
    for k in 0..profile.window() {
        write!(out, ",phi_{k}").unwrap();
    }
    out.push('\n');
    for t in 0..profile.len() {
        write!(out, "{t},{}", profile.omega[t]).unwrap();
        for v in profile.phi.row(t) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Square similarity matrix; masked rows and columns keep their sentinel value.
pub fn similarity_csv(sim: &SimilarityMatrix) -> String {
    matrix_csv(&sim.s)
}

/// `t,selected,provenance,s_dyn,s_sem`; unselected rows have an empty provenance.
pub fn maskplan_csv(plan: &MaskPlan, s_dyn: &[f64], s_sem: &[f64]) -> String {
    let mut provenance = vec![""; s_dyn.len()];
    for (&t, p) in plan.positions.iter().zip(&plan.provenance) {
        provenance[t] = p.as_str();
    }
    let mut out = String::from("t,selected,provenance,s_dyn,s_sem\n");
    for t in 0..s_dyn.len() {
        let sel = u8::from(!provenance[t].is_empty());
        writeln!(out, "{t},{sel},{},{},{}", provenance[t], s_dyn[t], s_sem[t]).unwrap();
    }
    out
}

/// `epoch,mean_loss`
pub fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (e, l) in losses.iter().enumerate() {
        writeln!(out, "{e},{l}").unwrap();
    }
    out
}

/// `t,token`; MASK is an empty cell.
pub fn tokens_csv(state: &TokenState) -> String {
    let mut out = String::from("t,token\n");
    for (t, tok) in state.tokens.iter().enumerate() {
        match tok {
            Some(v) => writeln!(out, "{t},{v}").unwrap(),
            None => writeln!(out, "{t},").unwrap(),
        }
    }
    out
}

/// One JSON object per decoding step.
pub fn trace_jsonl(trace: &DecodeTrace) -> Result<String> {
    let mut out = String::new();
    for rec in &trace.steps {
        out.push_str(&serde_json::to_string(rec).map_err(|e| Error::Format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub shape: ModelShape,
    pub codebook_dim: usize,
    pub tensors: Vec<TensorInfo>,
}

/// Parameter dump: one line per tensor row, `tensor,row,v0,v1,...`.
pub fn params_csv(params: &Params) -> String {
    let mut out = String::new();
    for (name, m) in params.tensors() {
        for (r, row) in m.iter_rows().enumerate() {
            write!(out, "{name},{r}").unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

fn read_params_csv(text: &str, shape: &ModelShape, source: &str) -> Result<Params> {
    let mut params = Params::zeros(shape);
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let mut seen: Vec<Vec<bool>> = params
        .tensors()
        .iter()
        .map(|(_, m)| vec![false; m.rows()])
        .collect();
    let mut tensors = params.tensors_mut();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    for record in reader.records() {
        let record = record.map_err(|e| format_err(source, e.position().map_or(0, |p| p.line()), e))?;
        let line = record.position().map_or(0, |p| p.line());
        let name = record.get(0).unwrap_or_default();
        let ti = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| format_err(source, line, format!("unknown tensor `{name}`")))?;
        let row: usize = record
            .get(1)
            .and_then(|r| r.parse().ok())
            .filter(|&r| r < tensors[ti].rows())
            .ok_or_else(|| format_err(source, line, "bad row index"))?;
        let cols = tensors[ti].cols();
        if record.len() != cols + 2 {
            return Err(format_err(
                source,
                line,
                format!("`{name}` expects {cols} values, found {}", record.len().saturating_sub(2)),
            ));
        }
        for (c, field) in record.iter().skip(2).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format_err(source, line, format!("`{field}` is not a number")))?;
            tensors[ti].set(row, c, v);
        }
        seen[ti][row] = true;
    }
    for (ti, rows) in seen.iter().enumerate() {
        if let Some(r) = rows.iter().position(|s| !s) {
            return Err(Error::Format(format!("{source}: missing row {r} of `{}`", names[ti])));
        }
    }
    Ok(params)
}

pub fn checkpoint_manifest(model: &ToyModel, codebook: &Codebook) -> CheckpointManifest {
    CheckpointManifest {
        format_version: CHECKPOINT_FORMAT,
        shape: model.shape,
        codebook_dim: codebook.dim(),
        tensors: model
            .params
            .tensors()
            .into_iter()
            .map(|(name, m)| TensorInfo {
                name,
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    }
}

/// Writes `manifest.json`, `params.csv` and `codebook.csv` into `dir`.
pub fn save_checkpoint(dir: &Path, model: &ToyModel, codebook: &Codebook) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let manifest = serde_json::to_string_pretty(&checkpoint_manifest(model, codebook))
        .map_err(|e| Error::Format(e.to_string()))?;
    write_text(&dir.join("manifest.json"), &(manifest + "\n"))?;
    write_text(&dir.join("params.csv"), &params_csv(&model.params))?;
    write_text(&dir.join("codebook.csv"), &matrix_csv(codebook.entries()))
}

pub fn load_checkpoint(dir: &Path) -> Result<(ToyModel, Codebook)> {
    let manifest_path = dir.join("manifest.json");
    let manifest: CheckpointManifest = serde_json::from_str(&read_text(&manifest_path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format_version != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!(
            "{}: unsupported format version {}",
            manifest_path.display(),
            manifest.format_version
        )));
    }
    let params_path = dir.join("params.csv");
    let params = read_params_csv(
        &read_text(&params_path)?,
        &manifest.shape,
        &params_path.display().to_string(),
    )?;
    let model = ToyModel::from_params(manifest.shape, params)?;
    let listed = model.params.tensors().into_iter().map(|(name, m)| TensorInfo {
        name,
        rows: m.rows(),
        cols: m.cols(),
    });
    if !listed.eq(manifest.tensors.iter().cloned()) {
        return Err(Error::Format(format!(
            "{}: tensor list does not match the model shape",
            manifest_path.display()
        )));
    }
    let cb_path = dir.join("codebook.csv");
    let codebook = read_codebook(&read_text(&cb_path)?, &cb_path.display().to_string())?;
    if codebook.size() != manifest.shape.vocab || codebook.dim() != manifest.codebook_dim {
        return Err(Error::Format(format!(
            "{}: codebook is {}x{}, manifest expects {}x{}",
            cb_path.display(),
            codebook.size(),
            codebook.dim(),
            manifest.shape.vocab,
            manifest.codebook_dim
        )));
    }
    Ok((model, codebook))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let m = Matrix::from_rows(&[[0.1, -2.5e-7], [1.0 / 3.0, 4.0]]).unwrap();
        assert_eq!(read_matrix_csv(&matrix_csv(&m), "m").unwrap(), m);
    }

    #[test]
    fn csv_errors_name_source_and_line() {
        let err = read_matrix_csv("1,2\n3,x\n", "data.csv").unwrap_err();
        assert_eq!(err.to_string(), "data.csv:2: `x` is not a number");
        let err = read_matrix_csv("1,2\n3\n", "data.csv").unwrap_err();
        assert!(err.to_string().starts_with("data.csv:2:"), "{err}");
        assert!(read_matrix_csv("\n", "e.csv").is_err());
    }

    #[test]
    fn jsonl_frames() {
        let text = "{\"frames\": [1, 2]}\n{\"frames\": [[3, 4], [5, 6]]}\n";
        let m = read_motion(text, "m.jsonl").unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.row(2), &[5.0, 6.0]);
        let err = read_motion("{\"frames\": [1]}\n{\"frames\": [1, 2]}\n", "m.jsonl").unwrap_err();
        assert!(err.to_string().starts_with("m.jsonl:2:"));
    }

    #[test]
    fn tokens_with_mask() {
        let s = TokenState::new(vec![Some(3), None], vec![true, true]).unwrap();
        assert_eq!(tokens_csv(&s), "t,token\n0,3\n1,\n");
    }
}
