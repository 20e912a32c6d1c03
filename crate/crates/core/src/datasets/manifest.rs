//! Shapes of the twelve UEA multivariate classification datasets used in the
//! benchmark (InsectWingbeat listed at its 1000/1000 subsample).

use super::LabeledDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetManifestEntry {
    pub name: &'static str,
    pub train_size: usize,
    pub test_size: usize,
    pub n_channels: usize,
    pub seq_len: usize,
    pub n_classes: usize,
}

const fn entry(
    name: &'static str,
    train_size: usize,
    test_size: usize,
    n_channels: usize,
    seq_len: usize,
    n_classes: usize,
) -> DatasetManifestEntry {
    DatasetManifestEntry { name, train_size, test_size, n_channels, seq_len, n_classes }
}

const MANIFEST: [DatasetManifestEntry; 12] = [
    entry("DuckDuckGeese", 60, 40, 1345, 270, 5),
    entry("FaceDetection", 5890, 3524, 144, 62, 2),
    entry("FingerMovements", 316, 100, 28, 50, 2),
    entry("HandMovementDirection", 320, 147, 10, 400, 4),
    entry("Heartbeat", 204, 205, 61, 405, 2),
    entry("InsectWingbeat", 1000, 1000, 200, 78, 10),
    entry("JapaneseVowels", 270, 370, 12, 29, 9),
    entry("MotorImagery", 278, 100, 64, 3000, 2),
    entry("NATOPS", 180, 180, 24, 51, 6),
    entry("PEMS-SF", 267, 173, 963, 144, 7),
    entry("PhonemeSpectra", 3315, 3353, 11, 217, 39),
    entry("SpokenArabicDigits", 6599, 2199, 13, 93, 10),
];

pub fn manifest() -> &'static [DatasetManifestEntry] {
    &MANIFEST
}

/// Case-insensitive lookup by dataset name.
pub fn manifest_entry(name: &str) -> Option<&'static DatasetManifestEntry> {
    MANIFEST.iter().find(|e| e.name.eq_ignore_ascii_case(name))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub field: &'static str,
    pub expected: usize,
    pub actual: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestReport {
    pub dataset: &'static str,
    pub mismatches: Vec<Mismatch>,
}

impl ManifestReport {
    pub fn is_ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl std::fmt::Display for ManifestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return write!(f, "{}: ok", self.dataset);
        }
        write!(f, "{}:", self.dataset)?;
        for m in &self.mismatches {
            write!(f, " {} expected {} got {};", m.field, m.expected, m.actual)?;
        }
        Ok(())
    }
}

pub fn validate_manifest(ds: &LabeledDataset, entry: &DatasetManifestEntry) -> ManifestReport {
    let (n_train, t, d) = ds.train.series.shape();
    let checks = [
        ("train_size", entry.train_size, n_train),
        ("test_size", entry.test_size, ds.test.series.n_samples()),
        ("n_channels", entry.n_channels, d),
        ("seq_len", entry.seq_len, t),
        ("n_classes", entry.n_classes, ds.class_names().len()),
    ];
    ManifestReport {
        dataset: entry.name,
        mismatches: checks
            .into_iter()
            .filter(|(_, e, a)| e != a)
            .map(|(field, expected, actual)| Mismatch { field, expected, actual })
            .collect(),
    }
}
