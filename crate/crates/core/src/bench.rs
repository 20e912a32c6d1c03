//! Benchmark grid: every (dataset, adapter, seed) combination is one run of
//! fit adapter → transform → encode → train head → evaluate.
//!
//! Results are appended to a CSV whose first line records a hash of the
//! configuration. Re-running with the same configuration skips rows already
//! present, so an interrupted grid can be resumed.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapters::{fit_pca, fit_random_projection, fit_truncated_svd, fit_variance_selection, ChannelReducer};
use crate::datasets::{read_split, DataFormat, LabeledDataset};
use crate::encoder::{EncoderConfig, SurrogateEncoder};
use crate::error::{Error, Result};
use crate::lcomb::{LcombAdapter, DEFAULT_TOP_K};
use crate::training::{
    evaluate, train_head_within, train_lcomb_joint_within, Budget, RunRecord, RunStatus, TrainConfig,
};

/// Environment variable that overrides `output_dir` from the config file.
pub const OUTPUT_DIR_ENV: &str = "CHANREDUCE_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub id: String,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    #[serde(default = "default_format")]
    pub format: DataFormat,
}

fn default_format() -> DataFormat {
    DataFormat::Ts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Pca,
    Svd,
    RandProj,
    VarSelect,
    Lcomb,
    LcombTopK,
}

impl AdapterKind {
    pub fn is_trainable(&self) -> bool {
        matches!(self, AdapterKind::Lcomb | AdapterKind::LcombTopK)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterSpec {
    pub id: String,
    pub kind: AdapterKind,
    pub d_prime: usize,
    #[serde(default = "one")]
    pub pws: usize,
    #[serde(default)]
    pub scaled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Random-projection base seed; the run seed is added to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn one() -> usize {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub datasets: Vec<DatasetSpec>,
    pub adapters: Vec<AdapterSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl BenchmarkConfig {
    /// Parses a JSON config. Errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: BenchmarkConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file, resolving relative dataset paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for ds in &mut config.datasets {
            ds.train_path = base.join(&ds.train_path);
            ds.test_path = base.join(&ds.test_path);
        }
        if let Some(dir) = &mut config.output_dir {
            *dir = base.join(&*dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: String, msg: &str| Err(Error::Config(format!("at `{path}`: {msg}")));
        if self.datasets.is_empty() {
            return bad("datasets".into(), "at least one dataset is required");
        }
        if self.adapters.is_empty() {
            return bad("adapters".into(), "at least one adapter is required");
        }
        if self.seeds.is_empty() {
            return bad("seeds".into(), "at least one seed is required");
        }
        let mut ids = HashSet::new();
        for (i, ds) in self.datasets.iter().enumerate() {
            if ds.id.is_empty() || !ids.insert(&ds.id) {
                return bad(format!("datasets[{i}].id"), "ids must be non-empty and unique");
            }
        }
        let mut ids = HashSet::new();
        for (i, a) in self.adapters.iter().enumerate() {
            if a.id.is_empty() || !ids.insert(&a.id) {
                return bad(format!("adapters[{i}].id"), "ids must be non-empty and unique");
            }
            if a.d_prime == 0 {
                return bad(format!("adapters[{i}].d_prime"), "must be positive");
            }
            if a.pws == 0 || (a.pws > 1 && a.kind != AdapterKind::Pca) {
                return bad(format!("adapters[{i}].pws"), "must be 1, or any positive value for pca");
            }
            if a.scaled && a.kind != AdapterKind::Pca {
                return bad(format!("adapters[{i}].scaled"), "only pca can be scaled");
            }
            if a.k.is_some() && a.kind != AdapterKind::LcombTopK {
                return bad(format!("adapters[{i}].k"), "only lcomb_top_k takes k");
            }
        }
        if HashSet::<u64>::from_iter(self.seeds.iter().copied()).len() != self.seeds.len() {
            return bad("seeds".into(), "seeds must be unique");
        }
        let e = &self.encoder;
        if e.patch_len == 0 || e.stride == 0 || e.embed_dim == 0 || e.stride > e.patch_len {
            return bad("encoder".into(), "need positive sizes and stride <= patch_len");
        }
        self.train.validate().or_else(|e| bad("train".into(), &e.to_string()))
    }

    /// SHA-256 of the canonical JSON form (excluding `output_dir`).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Grid in dataset → adapter → seed order.
    pub fn plan(&self) -> Vec<RunKey> {
        let mut plan = Vec::new();
        for ds in &self.datasets {
            for a in &self.adapters {
                for &seed in &self.seeds {
                    plan.push(RunKey { dataset_id: ds.id.clone(), adapter_id: a.id.clone(), seed });
                }
            }
        }
        plan
    }

    /// Where results go when no explicit path is given: `$CHANREDUCE_OUTPUT_DIR`,
    /// else `output_dir`, else the working directory.
    pub fn default_results_path(&self) -> PathBuf {
        let dir = std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        dir.join("results.csv")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    pub dataset_id: String,
    pub adapter_id: String,
    pub seed: u64,
}

fn fit_reducer(x: &crate::tensor::SeriesTensor, spec: &AdapterSpec, seed: u64) -> Result<ChannelReducer> {
    match spec.kind {
        AdapterKind::Pca => fit_pca(x, spec.d_prime, spec.scaled, spec.pws),
        AdapterKind::Svd => fit_truncated_svd(x, spec.d_prime),
        AdapterKind::RandProj => fit_random_projection(x, spec.d_prime, spec.seed.unwrap_or(0).wrapping_add(seed)),
        AdapterKind::VarSelect => fit_variance_selection(x, spec.d_prime),
        AdapterKind::Lcomb | AdapterKind::LcombTopK => unreachable!("trainable adapters are not fitted"),
    }
}

/// Runs one grid cell.
///
/// Non-trainable adapters embed each train and test sample exactly once and
/// train the head on the cached embeddings. Trainable combiners push the
/// training set through the encoder on every epoch.
pub fn run_one(
    ds: &LabeledDataset,
    dataset_id: &str,
    spec: &AdapterSpec,
    seed: u64,
    encoder_cfg: EncoderConfig,
    train_cfg: &TrainConfig,
) -> Result<RunRecord> {
    let cfg = TrainConfig { seed, ..*train_cfg };
    let budget = Budget::start(cfg.budget_seconds);
    let (train, test) = (&ds.train, &ds.test);
    let mut record = RunRecord {
        dataset_id: dataset_id.to_string(),
        adapter_id: spec.id.clone(),
        seed,
        status: RunStatus::Ok,
        accuracy: None,
        wall_seconds: 0.0,
        encoder_forward_passes: 0,
        n_train: train.series.n_samples(),
        n_test: test.series.n_samples(),
        epochs_completed: 0,
        truncated_steps: 0,
    };

    let encoder = SurrogateEncoder::new(encoder_cfg, spec.d_prime)?;
    if spec.kind.is_trainable() {
        let k = match spec.kind {
            AdapterKind::LcombTopK => Some(spec.k.unwrap_or(DEFAULT_TOP_K).min(train.series.n_channels())),
            _ => None,
        };
        let adapter = LcombAdapter::new(train.series.n_channels(), spec.d_prime, k)?;
        let (adapter, head, report) =
            train_lcomb_joint_within(&train.series, &train.labels, &encoder, &adapter, &cfg, &budget)?;
        record.status = report.status;
        record.epochs_completed = report.epochs_completed;
        if report.status == RunStatus::Ok {
            let emb = encoder.encode(&adapter.apply(&test.series)?)?;
            record.accuracy = Some(evaluate(&head, &emb, &test.labels));
        }
    } else {
        let reducer = fit_reducer(&train.series, spec, seed)?;
        record.truncated_steps = reducer.truncated_steps();
        let emb_train = encoder.encode(&reducer.transform(&train.series)?)?;
        let emb_test = encoder.encode(&reducer.transform(&test.series)?)?;
        let (head, report) = train_head_within(&emb_train, &train.labels, &cfg, &budget)?;
        record.status = report.status;
        record.epochs_completed = report.epochs_completed;
        if report.status == RunStatus::Ok {
            record.accuracy = Some(evaluate(&head, &emb_test, &test.labels));
        }
    }
    record.encoder_forward_passes = encoder.forward_passes();
    record.wall_seconds = budget.elapsed_seconds();
    Ok(record)
}

pub const RESULTS_COLUMNS: [&str; 11] = [
    "dataset_id",
    "adapter_id",
    "seed",
    "status",
    "accuracy",
    "wall_seconds",
    "encoder_forward_passes",
    "n_train",
    "n_test",
    "epochs_completed",
    "truncated_steps",
];

const HASH_PREFIX: &str = "# config_sha256=";

fn record_line(r: &RunRecord) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([
        r.dataset_id.clone(),
        r.adapter_id.clone(),
        r.seed.to_string(),
        r.status.as_str().to_string(),
        r.accuracy.map(|a| a.to_string()).unwrap_or_default(),
        format!("{:.6}", r.wall_seconds),
        r.encoder_forward_passes.to_string(),
        r.n_train.to_string(),
        r.n_test.to_string(),
        r.epochs_completed.to_string(),
        r.truncated_steps.to_string(),
    ])
    .expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Parses a results file into (config hash, records).
pub fn parse_results(text: &str) -> Result<(Option<String>, Vec<RunRecord>)> {
    let hash = text.lines().next().and_then(|l| l.strip_prefix(HASH_PREFIX)).map(|h| h.trim().to_string());
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Format(format!("results: {e}")))?.clone();
    if headers.iter().collect::<Vec<_>>() != RESULTS_COLUMNS {
        return Err(Error::Format(format!("results: header must be `{}`", RESULTS_COLUMNS.join(","))));
    }
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(format!("results: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| rec.get(i).unwrap_or_default();
        let num = |i: usize| -> Result<u64> {
            get(i).parse().map_err(|_| Error::Format(format!("results line {line}: bad {} `{}`", RESULTS_COLUMNS[i], get(i))))
        };
        let status = match get(3) {
            "ok" => RunStatus::Ok,
            "budget_exceeded" => RunStatus::BudgetExceeded,
            "memory_exceeded" => RunStatus::MemoryExceeded,
            other => return Err(Error::Format(format!("results line {line}: unknown status `{other}`"))),
        };
        let accuracy = match get(4) {
            "" => None,
            s => Some(
                s.parse::<f64>()
                    .ok()
                    .filter(|a| (0.0..=1.0).contains(a))
                    .ok_or_else(|| Error::Format(format!("results line {line}: bad accuracy `{s}`")))?,
            ),
        };
        if accuracy.is_some() != (status == RunStatus::Ok) {
            return Err(Error::Format(format!("results line {line}: accuracy must be present iff status is ok")));
        }
        let wall_seconds = get(5)
            .parse::<f64>()
            .map_err(|_| Error::Format(format!("results line {line}: bad wall_seconds `{}`", get(5))))?;
        records.push(RunRecord {
            dataset_id: get(0).to_string(),
            adapter_id: get(1).to_string(),
            seed: num(2)?,
            status,
            accuracy,
            wall_seconds,
            encoder_forward_passes: num(6)?,
            n_train: num(7)? as usize,
            n_test: num(8)? as usize,
            epochs_completed: num(9)? as usize,
            truncated_steps: num(10)? as usize,
        });
    }
    Ok((hash, records))
}

pub fn read_results(path: &Path) -> Result<(Option<String>, Vec<RunRecord>)> {
    parse_results(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchmarkOutcome {
    pub executed: usize,
    pub skipped: usize,
}

fn load_datasets(config: &BenchmarkConfig) -> Result<BTreeMap<String, LabeledDataset>> {
    let mut out = BTreeMap::new();
    for ds in &config.datasets {
        let train = read_split(&ds.train_path, ds.format)?;
        let test = read_split(&ds.test_path, ds.format)?;
        let data = LabeledDataset::new(train, test)
            .map_err(|e| Error::Format(format!("dataset `{}`: {e}", ds.id)))?;
        for a in &config.adapters {
            if a.d_prime > data.train.series.n_channels() {
                return Err(Error::InvalidArgument(format!(
                    "adapter `{}` asks for D'={} but dataset `{}` has D={}",
                    a.id,
                    a.d_prime,
                    ds.id,
                    data.train.series.n_channels()
                )));
            }
        }
        out.insert(ds.id.clone(), data);
    }
    Ok(out)
}

fn open_results(path: &Path, hash: &str) -> Result<(File, HashSet<RunKey>, usize)> {
    if path.exists() {
        let (existing_hash, records) = read_results(path)?;
        if existing_hash.as_deref() != Some(hash) {
            return Err(Error::Config(format!(
                "{} was produced by a different configuration; refusing to mix results",
                path.display()
            )));
        }
        let keys: HashSet<RunKey> = records
            .iter()
            .map(|r| RunKey { dataset_id: r.dataset_id.clone(), adapter_id: r.adapter_id.clone(), seed: r.seed })
            .collect();
        let n = records.len();
        return Ok((OpenOptions::new().append(true).open(path)?, keys, n));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = File::create(path)?;
    writeln!(file, "{HASH_PREFIX}{hash}")?;
    writeln!(file, "{}", RESULTS_COLUMNS.join(","))?;
    file.flush()?;
    Ok((file, HashSet::new(), 0))
}

/// Runs every missing grid cell and appends its row to `results_path`.
///
/// Up to `jobs` runs execute concurrently; rows are written by a single
/// writer in grid order, so the file is always a prefix of the full grid.
pub fn run_benchmark(config: &BenchmarkConfig, results_path: &Path, jobs: usize) -> Result<BenchmarkOutcome> {
    config.validate()?;
    let datasets = load_datasets(config)?;
    let (mut file, done, skipped) = open_results(results_path, &config.hash())?;
    let pending: Vec<RunKey> = config.plan().into_iter().filter(|k| !done.contains(k)).collect();
    let adapters: BTreeMap<&str, &AdapterSpec> = config.adapters.iter().map(|a| (a.id.as_str(), a)).collect();

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<RunRecord>)>();
    let jobs = jobs.max(1).min(pending.len().max(1));
    let mut written = 0;
    let mut failure: Option<Error> = None;

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let (next, pending, datasets, adapters) = (&next, &pending, &datasets, &adapters);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(key) = pending.get(i) else { break };
                let result = run_one(
                    &datasets[&key.dataset_id],
                    &key.dataset_id,
                    adapters[key.adapter_id.as_str()],
                    key.seed,
                    config.encoder,
                    &config.train,
                );
                let failed = result.is_err();
                if tx.send((i, result)).is_err() || failed {
                    // stop handing out work after the first failure
                    next.store(pending.len(), Ordering::SeqCst);
                    break;
                }
            });
        }
        drop(tx);

        let mut buffer: BTreeMap<usize, RunRecord> = BTreeMap::new();
        for (i, result) in rx {
            match result {
                Ok(record) => {
                    buffer.insert(i, record);
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    continue;
                }
            }
            while let Some(record) = buffer.remove(&written) {
                if failure.is_some() {
                    break;
                }
                let line = record_line(&record);
                if let Err(e) = file.write_all(line.as_bytes()).and_then(|_| file.flush()) {
                    failure.get_or_insert(e.into());
                    break;
                }
                written += 1;
            }
        }
    });

    match failure {
        Some(e) => Err(e),
        None => Ok(BenchmarkOutcome { executed: written, skipped }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "datasets": [{"id": "a", "train_path": "a_train.ts", "test_path": "a_test.ts"}],
        "adapters": [{"id": "pca5", "kind": "pca", "d_prime": 5}]
    }"#;

    #[test]
    fn defaults_are_filled() {
        let c = BenchmarkConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.train.epochs, 200);
        assert_eq!(c.encoder.embed_dim, 128);
        assert_eq!(c.plan().len(), 3);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = MINIMAL.replace("\"d_prime\": 5", "\"d_prime\": \"five\"");
        let err = BenchmarkConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("adapters[0].d_prime"), "{err}");
        let text = MINIMAL.replace("\"kind\": \"pca\"", "\"kind\": \"pca\", \"k\": 3");
        let err = BenchmarkConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("adapters[0].k"), "{err}");
        let text = MINIMAL.replace("\"id\": \"a\"", "\"idd\": \"a\"");
        assert!(matches!(BenchmarkConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = BenchmarkConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seeds = vec![0];
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn results_rows_round_trip() {
        let r = RunRecord {
            dataset_id: "d,1".into(),
            adapter_id: "pca".into(),
            seed: 2,
            status: RunStatus::Ok,
            accuracy: Some(0.8333333333333334),
            wall_seconds: 0.25,
            encoder_forward_passes: 40,
            n_train: 20,
            n_test: 20,
            epochs_completed: 200,
            truncated_steps: 1,
        };
        let text = format!("{HASH_PREFIX}abc\n{}\n{}", RESULTS_COLUMNS.join(","), record_line(&r));
        let (hash, rows) = parse_results(&text).unwrap();
        assert_eq!(hash.as_deref(), Some("abc"));
        assert_eq!(rows, vec![r]);
    }

    #[test]
    fn accuracy_requires_ok_status() {
        let text = format!("{}\nd,a,0,budget_exceeded,0.5,1.0,10,5,5,0,0\n", RESULTS_COLUMNS.join(","));
        assert!(matches!(parse_results(&text), Err(Error::Format(_))));
    }
}
