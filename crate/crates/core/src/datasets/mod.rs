//! Labelled datasets: UEA `.ts` files, long-format CSV, the reference
//! manifest and synthetic generators.

mod long_csv;
mod manifest;
mod synth;
mod ts;

pub use long_csv::{emit_csv, labels_path_for, parse_csv, read_csv_split, write_csv_split};
pub use manifest::{manifest, manifest_entry, validate_manifest, DatasetManifestEntry, ManifestReport, Mismatch};
pub use synth::{synth_lowrank, synth_noisy_channel, LowRankSpec, NoisyChannelSpec};
pub use ts::{emit_ts, parse_ts};

use crate::error::{invalid, Result};
use crate::tensor::SeriesTensor;

/// One split: series plus integer labels into `class_names`.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub series: SeriesTensor,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Split {
    pub fn new(series: SeriesTensor, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if labels.len() != series.n_samples() {
            return Err(invalid!("{} labels for {} samples", labels.len(), series.n_samples()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(invalid!("label {bad} out of range for {} classes", class_names.len()));
        }
        Ok(Self { series, labels, class_names })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub train: Split,
    pub test: Split,
}

impl LabeledDataset {
    pub fn new(train: Split, test: Split) -> Result<Self> {
        let (_, t1, d1) = train.series.shape();
        let (_, t2, d2) = test.series.shape();
        if (t1, d1) != (t2, d2) {
            return Err(invalid!("train is (T={t1}, D={d1}) but test is (T={t2}, D={d2})"));
        }
        if train.class_names != test.class_names {
            return Err(invalid!("train and test declare different class lists"));
        }
        Ok(Self { train, test })
    }

    pub fn class_names(&self) -> &[String] {
        &self.train.class_names
    }
}

/// File format of a dataset split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Ts,
    Csv,
}

impl std::str::FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ts" => Ok(DataFormat::Ts),
            "csv" => Ok(DataFormat::Csv),
            other => Err(format!("unknown format `{other}` (expected ts or csv)")),
        }
    }
}

/// Reads one split from disk. CSV splits take their labels from the sidecar
/// named by [`labels_path_for`].
pub fn read_split(path: &std::path::Path, format: DataFormat) -> Result<Split> {
    match format {
        DataFormat::Ts => parse_ts(&std::fs::read_to_string(path)?),
        DataFormat::Csv => read_csv_split(path),
    }
}

pub fn write_split(path: &std::path::Path, format: DataFormat, split: &Split, problem_name: &str) -> Result<()> {
    match format {
        DataFormat::Ts => Ok(std::fs::write(path, emit_ts(split, problem_name))?),
        DataFormat::Csv => write_csv_split(path, split),
    }
}
