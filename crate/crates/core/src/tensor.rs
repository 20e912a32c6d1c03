//! The `(N, T, D)` series tensor and the reshapes every adapter relies on.

use crate::error::{invalid, Result};
use crate::linalg::Matrix;

/// A dense batch of equal-length multivariate series, laid out sample-major,
/// then time, then channel: `values[(n * T + t) * D + d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTensor {
    values: Vec<f64>,
    n_samples: usize,
    n_steps: usize,
    n_channels: usize,
}

impl SeriesTensor {
    pub fn new(n_samples: usize, n_steps: usize, n_channels: usize, values: Vec<f64>) -> Result<Self> {
        if n_samples == 0 || n_steps == 0 || n_channels == 0 {
            return Err(invalid!(
                "tensor dimensions must be positive, got ({n_samples}, {n_steps}, {n_channels})"
            ));
        }
        let expected = n_samples * n_steps * n_channels;
        if values.len() != expected {
            return Err(invalid!(
                "tensor ({n_samples}, {n_steps}, {n_channels}) needs {expected} values, got {}",
                values.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (n, t, d) = (
                pos / (n_steps * n_channels),
                (pos / n_channels) % n_steps,
                pos % n_channels,
            );
            return Err(invalid!("non-finite value at sample {n}, step {t}, channel {d}"));
        }
        Ok(Self { values, n_samples, n_steps, n_channels })
    }

    pub fn zeros(n_samples: usize, n_steps: usize, n_channels: usize) -> Result<Self> {
        Self::new(n_samples, n_steps, n_channels, vec![0.0; n_samples * n_steps * n_channels])
    }

    pub fn from_fn(
        n_samples: usize,
        n_steps: usize,
        n_channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_samples * n_steps * n_channels);
        for n in 0..n_samples {
            for t in 0..n_steps {
                for d in 0..n_channels {
                    values.push(f(n, t, d));
                }
            }
        }
        Self::new(n_samples, n_steps, n_channels, values)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_samples, self.n_steps, self.n_channels)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, n: usize, t: usize, d: usize) -> f64 {
        self.values[(n * self.n_steps + t) * self.n_channels + d]
    }

    /// One sample as a `T × D` time-major slice.
    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.n_steps * self.n_channels;
        &self.values[n * len..(n + 1) * len]
    }

    /// Channel vector at `(n, t)`.
    pub fn step(&self, n: usize, t: usize) -> &[f64] {
        let start = (n * self.n_steps + t) * self.n_channels;
        &self.values[start..start + self.n_channels]
    }

    /// First `steps` time steps of every sample.
    pub fn truncate_steps(&self, steps: usize) -> Result<Self> {
        if steps == 0 || steps > self.n_steps {
            return Err(invalid!("cannot truncate T={} to {steps} steps", self.n_steps));
        }
        if steps == self.n_steps {
            return Ok(self.clone());
        }
        let keep = steps * self.n_channels;
        let values = (0..self.n_samples).flat_map(|n| self.sample(n)[..keep].iter().copied()).collect();
        Self::new(self.n_samples, steps, self.n_channels, values)
    }

    /// A new tensor holding the listed samples in order.
    pub fn select_samples(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_samples) {
            return Err(invalid!("sample index {bad} out of range for N={}", self.n_samples));
        }
        let values = indices.iter().flat_map(|&i| self.sample(i).iter().copied()).collect();
        Self::new(indices.len(), self.n_steps, self.n_channels, values)
    }

    /// Element-wise `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: f64, other: &SeriesTensor, beta: f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(invalid!("shape mismatch {:?} vs {:?}", self.shape(), other.shape()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| alpha * a + beta * b).collect();
        Self::new(self.n_samples, self.n_steps, self.n_channels, values)
    }
}

/// Patch-major reshape of a series tensor, `(N·n_p, pws·D)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchView {
    pub rows: Matrix,
    pub n_samples: usize,
    pub n_patches_per_series: usize,
    pub patch_window: usize,
    /// `n_p · pws`, the number of leading steps covered by patches.
    pub truncated_steps: usize,
}

impl PatchView {
    /// Replace the rows (e.g. after projecting each patch) keeping the layout metadata.
    pub fn with_rows(&self, rows: Matrix) -> Result<Self> {
        if rows.rows() != self.rows.rows() {
            return Err(invalid!(
                "patch view has {} rows, replacement has {}",
                self.rows.rows(),
                rows.rows()
            ));
        }
        Ok(Self { rows, ..*self })
    }
}

/// `(N, T, D)` → `(N·T, D)`; row `n·T + t` is the channel vector at `(n, t)`.
pub fn flatten_time(x: &SeriesTensor) -> Matrix {
    Matrix::from_vec(x.n_samples * x.n_steps, x.n_channels, x.values.clone())
        .expect("tensor length matches its shape")
}

/// Splits each series into `floor(T / pws)` non-overlapping windows of `pws`
/// steps, each flattened time-major. Trailing steps that do not fill a whole
/// window are dropped.
pub fn patchify(x: &SeriesTensor, pws: usize) -> Result<PatchView> {
    if pws == 0 {
        return Err(invalid!("patch window must be positive"));
    }
    if pws > x.n_steps {
        return Err(invalid!("patch window pws={pws} exceeds series length T={}", x.n_steps));
    }
    let n_p = x.n_steps / pws;
    let width = pws * x.n_channels;
    let mut data = Vec::with_capacity(x.n_samples * n_p * width);
    for n in 0..x.n_samples {
        data.extend_from_slice(&x.sample(n)[..n_p * width]);
    }
    Ok(PatchView {
        rows: Matrix::from_vec(x.n_samples * n_p, width, data)?,
        n_samples: x.n_samples,
        n_patches_per_series: n_p,
        patch_window: pws,
        truncated_steps: n_p * pws,
    })
}

/// Inverse layout of [`patchify`]: rows of width `pws·d_out` become a
/// `(N, n_p·pws, d_out)` tensor.
pub fn unpatchify(p: &PatchView, d_out: usize) -> Result<SeriesTensor> {
    let width = p.rows.cols();
    if d_out == 0 || width != p.patch_window * d_out {
        return Err(invalid!(
            "patch rows of width {width} cannot be split into {} steps of {d_out} channels",
            p.patch_window
        ));
    }
    if p.rows.rows() != p.n_samples * p.n_patches_per_series {
        return Err(invalid!(
            "patch view has {} rows, expected {}·{}",
            p.rows.rows(),
            p.n_samples,
            p.n_patches_per_series
        ));
    }
    SeriesTensor::new(
        p.n_samples,
        p.n_patches_per_series * p.patch_window,
        d_out,
        p.rows.as_slice().to_vec(),
    )
}

/// Per-channel mean and population standard deviation over all `N·T` entries.
pub fn channel_moments(x: &SeriesTensor) -> (Vec<f64>, Vec<f64>) {
    let d = x.n_channels;
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    // Welford, one observation per (n, t)
    for (count, step) in x.values.chunks_exact(d).enumerate() {
        let k = (count + 1) as f64;
        for c in 0..d {
            let delta = step[c] - mean[c];
            mean[c] += delta / k;
            m2[c] += delta * (step[c] - mean[c]);
        }
    }
    let total = (x.n_samples * x.n_steps) as f64;
    let std = m2.iter().map(|s| (s / total).max(0.0).sqrt()).collect();
    (mean, std)
}
