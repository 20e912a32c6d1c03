//! Frozen surrogate encoder.
//!
//! Stands in for a pretrained time-series foundation model. A series is cut
//! into overlapping patches; each patch is flattened, extended with per-channel
//! patch statistics (mean and standard deviation), projected by a fixed random
//! matrix and squashed with `tanh`. The embedding is the mean token.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Stream};
use crate::tensor::SeriesTensor;

/// Added to the patch variance inside the square root.
pub const STD_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub seed: u64,
    pub patch_len: usize,
    pub stride: usize,
    pub embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { seed: 0, patch_len: 8, stride: 4, embed_dim: 128 }
    }
}

#[derive(Debug)]
pub struct SurrogateEncoder {
    config: EncoderConfig,
    channels: usize,
    proj: Matrix,
    bias: Vec<f64>,
    forward_passes: AtomicU64,
}

impl Clone for SurrogateEncoder {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            channels: self.channels,
            proj: self.proj.clone(),
            bias: self.bias.clone(),
            forward_passes: AtomicU64::new(self.forward_passes()),
        }
    }
}

impl SurrogateEncoder {
    /// Draws the frozen weights for inputs with `channels` channels. `proj` is
    /// drawn row-major, then `bias`, both `N(0, 1/fan_in)` from the
    /// [`Stream::EncoderWeights`] stream.
    pub fn new(config: EncoderConfig, channels: usize) -> Result<Self> {
        let EncoderConfig { patch_len, stride, embed_dim, seed } = config;
        if patch_len == 0 || stride == 0 || embed_dim == 0 || channels == 0 {
            return Err(invalid!(
                "encoder sizes must be positive (patch_len={patch_len}, stride={stride}, embed_dim={embed_dim}, channels={channels})"
            ));
        }
        if stride > patch_len {
            return Err(invalid!("stride {stride} exceeds patch_len {patch_len}"));
        }
        let fan_in = patch_len * channels + 2 * channels;
        let std = (1.0 / fan_in as f64).sqrt();
        let mut rng = rng::stream(seed, Stream::EncoderWeights);
        let proj = Matrix::from_vec(embed_dim, fan_in, rng::normal_vec(&mut rng, embed_dim * fan_in, std))?;
        let bias = rng::normal_vec(&mut rng, embed_dim, std);
        Ok(Self { config, channels, proj, bias, forward_passes: AtomicU64::new(0) })
    }

    pub fn config(&self) -> EncoderConfig {
        self.config
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Number of samples encoded so far.
    pub fn forward_passes(&self) -> u64 {
        self.forward_passes.load(Ordering::Relaxed)
    }

    fn fan_in(&self) -> usize {
        (self.config.patch_len + 2) * self.channels
    }

    fn patch_starts(&self, n_steps: usize) -> impl Iterator<Item = usize> {
        let last = n_steps - self.config.patch_len;
        (0..=last).step_by(self.config.stride)
    }

    fn check_input(&self, x: &SeriesTensor) -> Result<()> {
        if x.n_channels() != self.channels {
            return Err(invalid!(
                "encoder was built for {} channels, input has {}",
                self.channels,
                x.n_channels()
            ));
        }
        if x.n_steps() < self.config.patch_len {
            return Err(invalid!(
                "series length T={} is shorter than patch_len={}",
                x.n_steps(),
                self.config.patch_len
            ));
        }
        Ok(())
    }

    /// Patch features `[vec(p); mean_c(p); std_c(p)]` for the patch starting at `start`.
    fn features(&self, sample: &[f64], start: usize, out: &mut [f64]) {
        let (c, len) = (self.channels, self.config.patch_len);
        let patch = &sample[start * c..(start + len) * c];
        out[..len * c].copy_from_slice(patch);
        let (means, stds) = out[len * c..].split_at_mut(c);
        means.fill(0.0);
        for step in patch.chunks_exact(c) {
            for (m, v) in means.iter_mut().zip(step) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= len as f64);
        stds.fill(0.0);
        for step in patch.chunks_exact(c) {
            for ((s, v), m) in stds.iter_mut().zip(step).zip(means.iter()) {
                *s += (v - m) * (v - m);
            }
        }
        stds.iter_mut().for_each(|s| *s = (*s / len as f64 + STD_EPS).sqrt());
    }

    /// `(N, E)` embeddings, one row per sample.
    pub fn encode(&self, x: &SeriesTensor) -> Result<Matrix> {
        self.check_input(x)?;
        let e = self.config.embed_dim;
        let mut out = Matrix::zeros(x.n_samples(), e);
        let mut feat = vec![0.0; self.fan_in()];
        let mut token = vec![0.0; e];
        for n in 0..x.n_samples() {
            let sample = x.sample(n);
            let mut count = 0usize;
            let row = out.row_mut(n);
            for start in self.patch_starts(x.n_steps()) {
                self.features(sample, start, &mut feat);
                self.proj.mul_vec_into(&feat, &mut token);
                for ((acc, z), b) in row.iter_mut().zip(&token).zip(&self.bias) {
                    *acc += (z + b).tanh();
                }
                count += 1;
            }
            row.iter_mut().for_each(|v| *v /= count as f64);
        }
        self.forward_passes.fetch_add(x.n_samples() as u64, Ordering::Relaxed);
        Ok(out)
    }

    /// Gradient of `Σ ⟨grad_emb, encode(x)⟩` with respect to `x`.
    pub fn encode_backward(&self, x: &SeriesTensor, grad_emb: &Matrix) -> Result<SeriesTensor> {
        self.check_input(x)?;
        if grad_emb.rows() != x.n_samples() || grad_emb.cols() != self.config.embed_dim {
            return Err(invalid!(
                "embedding gradient is {}x{}, expected {}x{}",
                grad_emb.rows(),
                grad_emb.cols(),
                x.n_samples(),
                self.config.embed_dim
            ));
        }
        let (c, len, e) = (self.channels, self.config.patch_len, self.config.embed_dim);
        let n_tokens = self.patch_starts(x.n_steps()).count() as f64;
        let mut grad = vec![0.0; x.values().len()];
        let mut feat = vec![0.0; self.fan_in()];
        let mut token = vec![0.0; e];
        let mut dz = vec![0.0; e];
        let mut dfeat = vec![0.0; self.fan_in()];
        let sample_len = x.n_steps() * c;

        for n in 0..x.n_samples() {
            let sample = x.sample(n);
            let g_sample = &mut grad[n * sample_len..(n + 1) * sample_len];
            let g_emb = grad_emb.row(n);
            for start in self.patch_starts(x.n_steps()) {
                self.features(sample, start, &mut feat);
                self.proj.mul_vec_into(&feat, &mut token);
                for ((d, (z, b)), g) in dz.iter_mut().zip(token.iter().zip(&self.bias)).zip(g_emb) {
                    let h = (z + b).tanh();
                    *d = g / n_tokens * (1.0 - h * h);
                }
                // dfeat = projᵀ dz
                dfeat.fill(0.0);
                for (k, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (f, p) in dfeat.iter_mut().zip(self.proj.row(k)) {
                        *f += d * p;
                    }
                }
                let (d_vec, rest) = dfeat.split_at(len * c);
                let (d_mean, d_std) = rest.split_at(c);
                let (means, stds) = feat[len * c..].split_at(c);
                let patch = &sample[start * c..(start + len) * c];
                let g_patch = &mut g_sample[start * c..(start + len) * c];
                for (s, (g_step, x_step)) in g_patch.chunks_exact_mut(c).zip(patch.chunks_exact(c)).enumerate() {
                    for ch in 0..c {
                        g_step[ch] += d_vec[s * c + ch]
                            + d_mean[ch] / len as f64
                            + d_std[ch] * (x_step[ch] - means[ch]) / (len as f64 * stds[ch]);
                    }
                }
            }
        }
        SeriesTensor::new(x.n_samples(), x.n_steps(), c, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64, patch_len: usize, stride: usize, embed_dim: usize) -> EncoderConfig {
        EncoderConfig { seed, patch_len, stride, embed_dim }
    }

    fn random_tensor(n: usize, t: usize, c: usize, seed: u64) -> SeriesTensor {
        let mut rng = rng::stream(seed, Stream::SyntheticSamples);
        SeriesTensor::new(n, t, c, rng::normal_vec(&mut rng, n * t * c, 1.0)).unwrap()
    }

    #[test]
    fn zero_input_embeds_to_tanh_bias() {
        let enc = SurrogateEncoder::new(cfg(3, 4, 2, 6), 2).unwrap();
        let emb = enc.encode(&SeriesTensor::zeros(2, 10, 2).unwrap()).unwrap();
        for n in 0..2 {
            // the std feature of a flat patch is sqrt(1e-8), so the bias is
            // shifted by 1e-4 times the std-column weights
            for (i, (v, b)) in emb.row(n).iter().zip(enc.bias()).enumerate() {
                let shift: f64 = (0..2).map(|ch| enc.proj[(i, 4 * 2 + 2 + ch)] * STD_EPS.sqrt()).sum();
                assert!((v - (b + shift).tanh()).abs() < 1e-15);
                assert!((v - b.tanh()).abs() <= shift.abs() + 1e-15);
            }
        }
    }

    #[test]
    fn single_patch_is_its_token() {
        let enc = SurrogateEncoder::new(cfg(1, 5, 5, 3), 1).unwrap();
        let x = random_tensor(1, 5, 1, 2);
        let emb = enc.encode(&x).unwrap();
        let mut feat = vec![0.0; 7];
        enc.features(x.sample(0), 0, &mut feat);
        let mut token = vec![0.0; 3];
        enc.proj.mul_vec_into(&feat, &mut token);
        for k in 0..3 {
            assert_eq!(emb[(0, k)], (token[k] + enc.bias[k]).tanh());
        }
    }

    #[test]
    fn seeds_control_weights() {
        let x = random_tensor(3, 12, 2, 4);
        let a = SurrogateEncoder::new(cfg(1, 4, 2, 8), 2).unwrap().encode(&x).unwrap();
        let b = SurrogateEncoder::new(cfg(1, 4, 2, 8), 2).unwrap().encode(&x).unwrap();
        let c = SurrogateEncoder::new(cfg(2, 4, 2, 8), 2).unwrap().encode(&x).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_short_series_and_bad_config() {
        let enc = SurrogateEncoder::new(cfg(0, 8, 4, 4), 1).unwrap();
        assert!(enc.encode(&random_tensor(1, 7, 1, 0)).is_err());
        assert!(enc.encode(&random_tensor(1, 9, 2, 0)).is_err());
        assert!(SurrogateEncoder::new(cfg(0, 4, 5, 4), 1).is_err());
    }

    #[test]
    fn counts_encoded_samples() {
        let enc = SurrogateEncoder::new(cfg(0, 4, 2, 4), 1).unwrap();
        enc.encode(&random_tensor(5, 8, 1, 0)).unwrap();
        enc.encode(&random_tensor(3, 8, 1, 0)).unwrap();
        assert_eq!(enc.forward_passes(), 8);
    }

    #[test]
    fn embeddings_lie_in_open_unit_interval() {
        let enc = SurrogateEncoder::new(cfg(9, 4, 3, 16), 3).unwrap();
        let emb = enc.encode(&random_tensor(4, 20, 3, 9)).unwrap();
        assert!(emb.as_slice().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn permuting_samples_permutes_rows() {
        let enc = SurrogateEncoder::new(cfg(5, 4, 2, 5), 2).unwrap();
        let x = random_tensor(4, 10, 2, 5);
        let perm = [2, 0, 3, 1];
        let a = enc.encode(&x).unwrap();
        let b = enc.encode(&x.select_samples(&perm).unwrap()).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(b.row(i), a.row(p));
        }
    }

    #[test]
    fn zero_gradient_in_zero_out() {
        let enc = SurrogateEncoder::new(cfg(5, 4, 2, 5), 2).unwrap();
        let x = random_tensor(2, 10, 2, 6);
        let g = enc.encode_backward(&x, &Matrix::zeros(2, 5)).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
        assert!(enc.encode_backward(&x, &Matrix::zeros(3, 5)).is_err());
    }
}
