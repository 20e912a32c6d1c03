//! Unsupervised channel reducers: PCA (plain, scaled, patch), truncated SVD,
//! Gaussian random projection and variance-based channel selection.
//!
//! Every reducer is a linear map `W` (`d_out_eff × d_in_eff`) applied to
//! standardised vectors `(v − center) / scale`. For `pws = 1` the vectors are
//! the channel vectors of each time step. For patch PCA (`pws > 1`) they are
//! flattened windows of `pws` steps, so `W` maps `pws·D` inputs to `pws·D'`
//! outputs, and the result is unpacked back into `D'` channels.
//!
//! Moments use the population convention (divide by `N·T`) throughout, both
//! for scaled PCA and for variance selection.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lcomb::LcombAdapter;
use crate::linalg::{right_svd, Matrix};
use crate::rng::{self, Stream};
use crate::tensor::{channel_moments, flatten_time, patchify, unpatchify, SeriesTensor};

/// Lower bound applied to standard deviations when scaling.
pub const MIN_SCALE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducerKind {
    Pca,
    Svd,
    RandProj,
    VarSelect,
}

/// A fitted, immutable channel reducer.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelReducer {
    kind: ReducerKind,
    w: Matrix,
    center: Vec<f64>,
    scale: Vec<f64>,
    pws: usize,
    d_in: usize,
    d_out: usize,
    seed: u64,
    explained_variance_ratio: Vec<f64>,
    truncated_steps: usize,
}

impl ChannelReducer {
    pub fn kind(&self) -> ReducerKind {
        self.kind
    }

    /// The projection matrix, `pws·d_out × pws·d_in`.
    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn pws(&self) -> usize {
        self.pws
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    /// Steps dropped from the fitting data because `pws` did not divide `T`.
    pub fn truncated_steps(&self) -> usize {
        self.truncated_steps
    }

    /// Channels picked by a variance-selection reducer, in output order.
    pub fn selected_channels(&self) -> Option<Vec<usize>> {
        (self.kind == ReducerKind::VarSelect).then(|| {
            (0..self.w.rows())
                .map(|i| self.w.row(i).iter().position(|&v| v == 1.0).expect("one-hot row"))
                .collect()
        })
    }

    /// Applies the reducer to every time step (or every patch when `pws > 1`).
    pub fn transform(&self, x: &SeriesTensor) -> Result<SeriesTensor> {
        if x.n_channels() != self.d_in {
            return Err(invalid!(
                "reducer expects {} channels, input has {}",
                self.d_in,
                x.n_channels()
            ));
        }
        if self.pws == 1 {
            let rows = project_rows(&flatten_time(x), &self.w, &self.center, &self.scale);
            return SeriesTensor::new(x.n_samples(), x.n_steps(), self.d_out, rows.into_vec());
        }
        let patches = patchify(x, self.pws)?;
        let projected = project_rows(&patches.rows, &self.w, &self.center, &self.scale);
        unpatchify(&patches.with_rows(projected)?, self.d_out)
    }
}

fn project_rows(rows: &Matrix, w: &Matrix, center: &[f64], scale: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(rows.rows(), w.rows());
    let mut z = vec![0.0; rows.cols()];
    for r in 0..rows.rows() {
        for ((zi, &v), (&c, &s)) in z.iter_mut().zip(rows.row(r)).zip(center.iter().zip(scale)) {
            *zi = (v - c) / s;
        }
        w.mul_vec_into(&z, out.row_mut(r));
    }
    out
}

fn check_dims(x: &SeriesTensor, d_prime: usize) -> Result<()> {
    let d = x.n_channels();
    if d_prime == 0 || d_prime > d {
        return Err(invalid!("reduced dimension D'={d_prime} must be in 1..=D with D={d}"));
    }
    Ok(())
}

/// Fits PCA on the `(N·T, D)` design matrix, or on the `(N·n_p, pws·D)` patch
/// matrix when `pws > 1`. With `scaled`, each design column is standardised
/// first.
pub fn fit_pca(x: &SeriesTensor, d_prime: usize, scaled: bool, pws: usize) -> Result<ChannelReducer> {
    check_dims(x, d_prime)?;
    if pws == 0 {
        return Err(invalid!("patch window must be positive"));
    }
    let (design, truncated) = if pws == 1 {
        (flatten_time(x), 0)
    } else {
        let p = patchify(x, pws)?;
        (p.rows, x.n_steps() - p.truncated_steps)
    };
    let (center, scale) = column_moments(&design);
    let scale = if scaled {
        scale.into_iter().map(|s| s.max(MIN_SCALE)).collect()
    } else {
        vec![1.0; design.cols()]
    };
    fit_decomposition(ReducerKind::Pca, x.n_channels(), d_prime, pws, &design, center, scale, truncated)
}

/// Truncated SVD of the raw (uncentred) `(N·T, D)` matrix.
pub fn fit_truncated_svd(x: &SeriesTensor, d_prime: usize) -> Result<ChannelReducer> {
    check_dims(x, d_prime)?;
    let design = flatten_time(x);
    let d = design.cols();
    fit_decomposition(ReducerKind::Svd, d, d_prime, 1, &design, vec![0.0; d], vec![1.0; d], 0)
}

#[allow(clippy::too_many_arguments)]
fn fit_decomposition(
    kind: ReducerKind,
    d_in: usize,
    d_prime: usize,
    pws: usize,
    design: &Matrix,
    center: Vec<f64>,
    scale: Vec<f64>,
    truncated_steps: usize,
) -> Result<ChannelReducer> {
    if design.rows() < 2 {
        return Err(Error::Underdetermined(format!(
            "design matrix has {} row(s); at least 2 are required",
            design.rows()
        )));
    }
    let mut standardized = design.clone();
    for r in 0..standardized.rows() {
        for ((v, &c), &s) in standardized.row_mut(r).iter_mut().zip(&center).zip(&scale) {
            *v = (*v - c) / s;
        }
    }
    let svd = right_svd(&standardized);
    let k = pws * d_prime;
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let explained_variance_ratio = svd.singular_values[..k]
        .iter()
        .map(|s| if total > 0.0 { (s * s / total).min(1.0) } else { 0.0 })
        .collect();

    let mut w = Matrix::zeros(k, design.cols());
    for i in 0..k {
        let row = w.row_mut(i);
        row.copy_from_slice(svd.vt.row(i));
        fix_sign(row);
    }
    Ok(ChannelReducer {
        kind,
        w,
        center,
        scale,
        pws,
        d_in,
        d_out: d_prime,
        seed: 0,
        explained_variance_ratio,
        truncated_steps,
    })
}

/// Flips `row` so its largest-magnitude entry (first one on ties) is non-negative.
fn fix_sign(row: &mut [f64]) {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if v.abs() > row[best].abs() {
            best = j;
        }
    }
    if row.get(best).is_some_and(|&v| v < 0.0) {
        row.iter_mut().for_each(|v| *v = -*v);
    }
}

fn column_moments(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let x = SeriesTensor::new(m.rows(), 1, m.cols(), m.as_slice().to_vec())
        .expect("design matrix is finite and non-empty");
    channel_moments(&x)
}

/// Gaussian random projection with entries `N(0, 1/d_prime)`, drawn row-major
/// from the [`Stream::RandomProjection`] stream of `seed`. Only the shape of `x` is used.
pub fn fit_random_projection(x: &SeriesTensor, d_prime: usize, seed: u64) -> Result<ChannelReducer> {
    check_dims(x, d_prime)?;
    let d = x.n_channels();
    let mut rng = rng::stream(seed, Stream::RandomProjection);
    let w = Matrix::from_vec(d_prime, d, rng::normal_vec(&mut rng, d_prime * d, (1.0 / d_prime as f64).sqrt()))?;
    Ok(ChannelReducer {
        kind: ReducerKind::RandProj,
        w,
        center: vec![0.0; d],
        scale: vec![1.0; d],
        pws: 1,
        d_in: d,
        d_out: d_prime,
        seed,
        explained_variance_ratio: Vec::new(),
        truncated_steps: 0,
    })
}

/// Keeps the `d_prime` channels of largest variance, ordered by descending
/// variance with ties going to the lower channel index.
pub fn fit_variance_selection(x: &SeriesTensor, d_prime: usize) -> Result<ChannelReducer> {
    check_dims(x, d_prime)?;
    let d = x.n_channels();
    let (_, std) = channel_moments(x);
    let var: Vec<f64> = std.iter().map(|s| s * s).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let mut w = Matrix::zeros(d_prime, d);
    for (i, &c) in order.iter().take(d_prime).enumerate() {
        w[(i, c)] = 1.0;
    }
    Ok(ChannelReducer {
        kind: ReducerKind::VarSelect,
        w,
        center: vec![0.0; d],
        scale: vec![1.0; d],
        pws: 1,
        d_in: d,
        d_out: d_prime,
        seed: 0,
        explained_variance_ratio: Vec::new(),
        truncated_steps: 0,
    })
}

/// Any fitted adapter, as stored in a reducer document.
#[derive(Clone, Debug, PartialEq)]
pub enum Adapter {
    Reducer(ChannelReducer),
    Lcomb(LcombAdapter),
}

impl Adapter {
    pub fn d_in(&self) -> usize {
        match self {
            Adapter::Reducer(r) => r.d_in(),
            Adapter::Lcomb(a) => a.d_in(),
        }
    }

    pub fn d_out(&self) -> usize {
        match self {
            Adapter::Reducer(r) => r.d_out(),
            Adapter::Lcomb(a) => a.d_out(),
        }
    }

    pub fn transform(&self, x: &SeriesTensor) -> Result<SeriesTensor> {
        match self {
            Adapter::Reducer(r) => r.transform(x),
            Adapter::Lcomb(a) => a.apply(x),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ReducerDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ReducerDocument = serde_json::from_str(text)?;
        doc.into_adapter()
    }
}

impl From<ChannelReducer> for Adapter {
    fn from(r: ChannelReducer) -> Self {
        Adapter::Reducer(r)
    }
}

impl From<LcombAdapter> for Adapter {
    fn from(a: LcombAdapter) -> Self {
        Adapter::Lcomb(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DocumentKind {
    Pca,
    Svd,
    RandProj,
    VarSelect,
    Lcomb,
}

/// On-disk reducer format. `w` (and `logits`) are stored as arrays of rows.
/// Numbers are written in shortest round-trip form, so loading reproduces
/// every parameter bit for bit.
#[derive(Debug, Serialize, Deserialize)]
struct ReducerDocument {
    kind: DocumentKind,
    d_in: usize,
    d_out: usize,
    pws: usize,
    seed: u64,
    center: Vec<f64>,
    scale: Vec<f64>,
    w: Vec<Vec<f64>>,
    explained_variance_ratio: Vec<f64>,
    truncated_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logits: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
}

impl From<&Adapter> for ReducerDocument {
    fn from(adapter: &Adapter) -> Self {
        match adapter {
            Adapter::Reducer(r) => ReducerDocument {
                kind: match r.kind {
                    ReducerKind::Pca => DocumentKind::Pca,
                    ReducerKind::Svd => DocumentKind::Svd,
                    ReducerKind::RandProj => DocumentKind::RandProj,
                    ReducerKind::VarSelect => DocumentKind::VarSelect,
                },
                d_in: r.d_in,
                d_out: r.d_out,
                pws: r.pws,
                seed: r.seed,
                center: r.center.clone(),
                scale: r.scale.clone(),
                w: r.w.to_rows(),
                explained_variance_ratio: r.explained_variance_ratio.clone(),
                truncated_steps: r.truncated_steps,
                logits: None,
                k: None,
            },
            Adapter::Lcomb(a) => ReducerDocument {
                kind: DocumentKind::Lcomb,
                d_in: a.d_in(),
                d_out: a.d_out(),
                pws: 1,
                seed: 0,
                center: vec![0.0; a.d_in()],
                scale: vec![1.0; a.d_in()],
                w: a.attention().map(|m| m.to_rows()).unwrap_or_default(),
                explained_variance_ratio: Vec::new(),
                truncated_steps: 0,
                logits: Some(a.logits().to_rows()),
                k: a.k(),
            },
        }
    }
}

impl ReducerDocument {
    fn into_adapter(self) -> Result<Adapter> {
        let kind = match self.kind {
            DocumentKind::Lcomb => {
                let logits = self.logits.ok_or_else(|| invalid!("lcomb document is missing `logits`"))?;
                let logits = Matrix::from_rows(&logits)?;
                if logits.rows() != self.d_out || logits.cols() != self.d_in {
                    return Err(invalid!(
                        "logits are {}x{}, expected {}x{}",
                        logits.rows(),
                        logits.cols(),
                        self.d_out,
                        self.d_in
                    ));
                }
                return Ok(Adapter::Lcomb(LcombAdapter::from_logits(logits, self.k)?));
            }
            DocumentKind::Pca => ReducerKind::Pca,
            DocumentKind::Svd => ReducerKind::Svd,
            DocumentKind::RandProj => ReducerKind::RandProj,
            DocumentKind::VarSelect => ReducerKind::VarSelect,
        };
        if self.pws == 0 || self.d_out == 0 || self.d_out > self.d_in {
            return Err(invalid!(
                "inconsistent reducer shape: d_in={}, d_out={}, pws={}",
                self.d_in,
                self.d_out,
                self.pws
            ));
        }
        if self.pws > 1 && kind != ReducerKind::Pca {
            return Err(invalid!("only pca reducers may use pws > 1"));
        }
        let w = Matrix::from_rows(&self.w)?;
        let (rows, cols) = (self.pws * self.d_out, self.pws * self.d_in);
        if w.rows() != rows || (rows > 0 && w.cols() != cols) {
            return Err(invalid!("w is {}x{}, expected {rows}x{cols}", w.rows(), w.cols()));
        }
        if self.center.len() != cols || self.scale.len() != cols {
            return Err(invalid!("center/scale must have {cols} entries"));
        }
        if self.scale.iter().any(|&s| !(s > 0.0)) {
            return Err(invalid!("scale entries must be positive"));
        }
        Ok(Adapter::Reducer(ChannelReducer {
            kind,
            w,
            center: self.center,
            scale: self.scale,
            pws: self.pws,
            d_in: self.d_in,
            d_out: self.d_out,
            seed: self.seed,
            explained_variance_ratio: self.explained_variance_ratio,
            truncated_steps: self.truncated_steps,
        }))
    }
}
