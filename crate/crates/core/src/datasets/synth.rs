//! Synthetic labelled datasets with known structure.

use std::f64::consts::PI;

use super::{LabeledDataset, Split};
use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Stream};
use crate::tensor::SeriesTensor;

use rand::Rng;

/// `rank` latent sinusoids per sample, mixed into `d` channels plus white noise.
///
/// Sample `i` belongs to class `i mod classes`. Latent `j` of a class-`c`
/// sample oscillates `(c + 1)(j + 1)` times over the series with a random
/// phase. The `d × rank` mixing matrix is shared by both splits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowRankSpec {
    /// Samples per split.
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub rank: usize,
    pub classes: usize,
    pub noise: f64,
    pub seed: u64,
}

fn class_names(classes: usize) -> Vec<String> {
    (0..classes).map(|c| format!("class{c}")).collect()
}

pub fn synth_lowrank(spec: &LowRankSpec) -> Result<LabeledDataset> {
    let LowRankSpec { n, t, d, rank, classes, noise, seed } = *spec;
    if rank == 0 || rank > d {
        return Err(invalid!("rank r={rank} must be in 1..=d with d={d}"));
    }
    if classes < 2 || n == 0 || t == 0 {
        return Err(invalid!("need n >= 1, t >= 1 and at least 2 classes"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(invalid!("noise must be a non-negative number"));
    }
    let mut mix_rng = rng::stream(seed, Stream::SyntheticMixing);
    let mixing = Matrix::from_vec(d, rank, rng::normal_vec(&mut mix_rng, d * rank, (1.0 / rank as f64).sqrt()))?;
    let mut rng = rng::stream(seed, Stream::SyntheticSamples);

    let mut make_split = |n: usize| -> Result<Split> {
        let mut values = Vec::with_capacity(n * t * d);
        let mut latent = vec![0.0; rank];
        let mut mixed = vec![0.0; d];
        for i in 0..n {
            let class = i % classes;
            let phases: Vec<f64> = (0..rank).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
            for step in 0..t {
                for (j, l) in latent.iter_mut().enumerate() {
                    let freq = ((class + 1) * (j + 1)) as f64;
                    *l = (2.0 * PI * freq * step as f64 / t as f64 + phases[j]).sin();
                }
                mixing.mul_vec_into(&latent, &mut mixed);
                for m in &mixed {
                    values.push(m + noise * rng::normal(&mut rng));
                }
            }
        }
        Split::new(SeriesTensor::new(n, t, d, values)?, (0..n).map(|i| i % classes).collect(), class_names(classes))
    };
    let train = make_split(n)?;
    let test = make_split(n)?;
    LabeledDataset::new(train, test)
}

/// One informative channel (channel 0) followed by `d_noise` white-noise
/// channels whose standard deviation is `noise_scale` times the signal's.
///
/// The informative channel is `amplitude · sin(2π (2c + 2) s / t + φ)` for a
/// class-`c` sample, so its variance is `amplitude² / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoisyChannelSpec {
    /// Samples per split.
    pub n: usize,
    pub t: usize,
    pub classes: usize,
    pub amplitude: f64,
    pub d_noise: usize,
    /// Noise std relative to the signal std; must exceed 1.
    pub noise_scale: f64,
    pub seed: u64,
}

pub fn synth_noisy_channel(spec: &NoisyChannelSpec) -> Result<LabeledDataset> {
    let NoisyChannelSpec { n, t, classes, amplitude, d_noise, noise_scale, seed } = *spec;
    if classes < 2 || n == 0 || t == 0 || d_noise == 0 {
        return Err(invalid!("need n >= 1, t >= 1, d_noise >= 1 and at least 2 classes"));
    }
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(invalid!("amplitude must be positive"));
    }
    if !(noise_scale > 1.0 && noise_scale.is_finite()) {
        return Err(invalid!("noise_scale must exceed 1 so noise channels dominate the variance"));
    }
    let d = d_noise + 1;
    let noise_std = noise_scale * amplitude / 2f64.sqrt();
    let mut rng = rng::stream(seed, Stream::SyntheticSamples);
    let mut make_split = |n: usize| -> Result<Split> {
        let mut values = Vec::with_capacity(n * t * d);
        for i in 0..n {
            let class = i % classes;
            let phase = rng.random::<f64>() * 2.0 * PI;
            let freq = (2 * class + 2) as f64;
            for step in 0..t {
                values.push(amplitude * (2.0 * PI * freq * step as f64 / t as f64 + phase).sin());
                for _ in 0..d_noise {
                    values.push(noise_std * rng::normal(&mut rng));
                }
            }
        }
        Split::new(SeriesTensor::new(n, t, d, values)?, (0..n).map(|i| i % classes).collect(), class_names(classes))
    };
    let train = make_split(n)?;
    let test = make_split(n)?;
    LabeledDataset::new(train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::channel_moments;

    fn lowrank(noise: f64, seed: u64) -> LowRankSpec {
        LowRankSpec { n: 12, t: 32, d: 10, rank: 3, classes: 3, noise, seed }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_lowrank(&lowrank(0.1, 4)).unwrap(), synth_lowrank(&lowrank(0.1, 4)).unwrap());
        assert_ne!(synth_lowrank(&lowrank(0.1, 4)).unwrap(), synth_lowrank(&lowrank(0.1, 5)).unwrap());
    }

    #[test]
    fn rank_larger_than_d_is_rejected() {
        let spec = LowRankSpec { rank: 11, ..lowrank(0.0, 0) };
        assert!(synth_lowrank(&spec).is_err());
    }

    #[test]
    fn balanced_classes() {
        let ds = synth_lowrank(&lowrank(0.0, 1)).unwrap();
        for c in 0..3 {
            assert_eq!(ds.train.labels.iter().filter(|&&l| l == c).count(), 4);
        }
    }

    #[test]
    fn noise_channels_dominate_variance() {
        let spec = NoisyChannelSpec { n: 20, t: 64, classes: 2, amplitude: 1.0, d_noise: 3, noise_scale: 2.0, seed: 3 };
        let ds = synth_noisy_channel(&spec).unwrap();
        let (_, std) = channel_moments(&ds.train.series);
        assert!(std[1..].iter().all(|&s| s > std[0]));
        assert!(synth_noisy_channel(&NoisyChannelSpec { noise_scale: 1.0, ..spec }).is_err());
    }
}
