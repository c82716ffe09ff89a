//! WebAssembly entry points for the demo page in `www/`.
//!
//! Every operation takes a synthetic recipe and returns JSON. The `*_json`
//! functions are plain Rust so they can be tested natively; the exported
//! wrappers only translate errors into JS exceptions.

use motionmask::config::{validate_config, Config};
use motionmask::masking::{cfs_select, dynamic_scores, mask_budget, semantic_scores};
use motionmask::spectral::{msd_with, similarity_matrix};
use motionmask::synth::{synth_condition, synth_motion, SynthSpec};
use motionmask::types::{MotionSequence, SpectralProfile};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Analysis {
    omega: Vec<f64>,
    phi: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

#[derive(Serialize)]
struct Plan {
    budget: usize,
    positions: Vec<usize>,
    provenance: Vec<&'static str>,
    s_dyn: Vec<f64>,
    s_sem: Vec<f64>,
}

#[derive(Serialize)]
struct Similarity {
    len: usize,
    values: Vec<f64>,
}

/// Validates knobs with the same rules as the library configuration.
fn config(pairs: &[(&str, String)]) -> Result<Config, String> {
    let raw = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    validate_config(&raw).map_err(|e| e.to_string())
}

fn profile(recipe: &str, dims: usize, window: usize, seed: u64) -> Result<(MotionSequence, Vec<u8>, SpectralProfile), String> {
    let cfg = config(&[("window", window.to_string())])?;
    let spec = SynthSpec::from_recipe(recipe, dims, window, seed).map_err(|e| e.to_string())?;
    let (seq, labels) = synth_motion(&spec).map_err(|e| e.to_string())?;
    let p = msd_with(seq.frames(), seq.valid(), window, cfg.epsilon).map_err(|e| e.to_string())?;
    Ok((seq, labels, p))
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Per-frame complexity and normalized spectra.
pub fn analyze_json(recipe: &str, dims: usize, window: usize, seed: u64) -> Result<String, String> {
    let (_, labels, p) = profile(recipe, dims, window, seed)?;
    let phi = (0..p.phi.rows()).map(|t| p.phi.row(t).to_vec()).collect();
    json(&Analysis { omega: p.omega, phi, labels })
}

/// Content-focused mask plan; the raw features stand in for embeddings.
pub fn mask_plan_json(
    recipe: &str,
    dims: usize,
    window: usize,
    seed: u64,
    r: f64,
    lambda_sem: f64,
    r_exp: usize,
) -> Result<String, String> {
    let cfg = config(&[("lambda_sem", lambda_sem.to_string()), ("r_exp", r_exp.to_string())])?;
    let (seq, _, p) = profile(recipe, dims, window, seed)?;
    let valid = seq.valid();
    let s_dyn = dynamic_scores(&p, valid).map_err(|e| e.to_string())?;
    let cond = synth_condition(dims, seed, 0);
    let s_sem = semantic_scores(seq.frames(), &cond, valid).map_err(|e| e.to_string())?;
    let budget = mask_budget(r, valid.iter().filter(|&&v| v).count()).map_err(|e| e.to_string())?;
    let plan = cfs_select(&s_dyn, &s_sem, budget, cfg.lambda_sem, cfg.r_exp, valid);
    json(&Plan {
        budget,
        provenance: plan.provenance.iter().map(|p| p.as_str()).collect(),
        positions: plan.positions,
        s_dyn,
        s_sem,
    })
}

/// Row-major frame-by-frame spectral similarity.
pub fn similarity_json(recipe: &str, dims: usize, window: usize, seed: u64, tau: f64) -> Result<String, String> {
    let cfg = config(&[("tau", tau.to_string())])?;
    let (_, _, p) = profile(recipe, dims, window, seed)?;
    let sim = similarity_matrix(&p, cfg.tau);
    json(&Similarity { len: sim.len(), values: sim.s.as_slice().to_vec() })
}

#[wasm_bindgen]
pub fn analyze(recipe: &str, dims: usize, window: usize, seed: u32) -> Result<String, JsError> {
    analyze_json(recipe, dims, window, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = maskPlan)]
pub fn mask_plan(
    recipe: &str,
    dims: usize,
    window: usize,
    seed: u32,
    r: f64,
    lambda_sem: f64,
    r_exp: usize,
) -> Result<String, JsError> {
    mask_plan_json(recipe, dims, window, seed.into(), r, lambda_sem, r_exp).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn similarity(recipe: &str, dims: usize, window: usize, seed: u32, tau: f64) -> Result<String, JsError> {
    similarity_json(recipe, dims, window, seed.into(), tau).map_err(|e| JsError::new(&e))
}
