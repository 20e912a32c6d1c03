//! Browser bindings for three small chanreduce operations. Each returns a flat
//! `Float64Array` so the page can draw it without extra glue.

use chanreduce::datasets::{synth_lowrank, LowRankSpec};
use chanreduce::lcomb::LcombAdapter;
use chanreduce::stats::{welch_t_test, MethodSample};
use chanreduce::{fit_pca, Matrix};
use wasm_bindgen::prelude::*;

/// Explained-variance ratio of every principal component of a synthetic
/// low-rank dataset, followed by the train-split shape `[n, t, d]`.
#[wasm_bindgen]
pub fn pca_spectrum(n: usize, t: usize, d: usize, rank: usize, noise: f64, seed: u64) -> Result<Vec<f64>, String> {
    let ds = synth_lowrank(&LowRankSpec { n, t, d, rank, classes: 3, noise, seed }).map_err(|e| e.to_string())?;
    let reducer = fit_pca(&ds.train.series, d, false, 1).map_err(|e| e.to_string())?;
    let mut out = reducer.explained_variance_ratio().to_vec();
    out.extend([n as f64, t as f64, d as f64]);
    Ok(out)
}

/// Softmax of one logits row, then top-`k` renormalisation (`k = 0` keeps all).
#[wasm_bindgen]
pub fn attention_row(logits: Vec<f64>, k: usize) -> Result<Vec<f64>, String> {
    let d = logits.len();
    let logits = Matrix::from_vec(1, d, logits).map_err(|e| e.to_string())?;
    let adapter = LcombAdapter::from_logits(logits, (k > 0).then_some(k)).map_err(|e| e.to_string())?;
    Ok(adapter.attention().map_err(|e| e.to_string())?.into_vec())
}

/// Welch's unequal-variance t-test: `[t, dof, p_two_sided]`.
#[wasm_bindgen]
pub fn welch(a: Vec<f64>, b: Vec<f64>) -> Result<Vec<f64>, String> {
    let r = welch_t_test(&MethodSample::new("a", a), &MethodSample::new("b", b)).map_err(|e| e.to_string())?;
    Ok(vec![r.t, r.dof, r.p_two_sided])
}
