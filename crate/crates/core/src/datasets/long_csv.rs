//! Long-format CSV: one `sample,step,channel,value` row per entry, plus a
//! labels sidecar with `sample,label,class` rows (`label` is the class index,
//! `class` its name). Values are written with 17 significant digits.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::Split;
use crate::error::{format_err, Result};
use crate::tensor::SeriesTensor;

const VALUE_HEADER: [&str; 4] = ["sample", "step", "channel", "value"];
const LABEL_HEADER: [&str; 3] = ["sample", "label", "class"];

/// `data.csv` → `data.labels.csv`.
pub fn labels_path_for(values_path: &Path) -> PathBuf {
    let stem = values_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    values_path.with_file_name(format!("{stem}.labels.csv"))
}

/// Renders a split as (values CSV, labels CSV).
pub fn emit_csv(split: &Split) -> (String, String) {
    let (n, t, d) = split.series.shape();
    let mut values = String::with_capacity(n * t * d * 32 + 32);
    values.push_str(&VALUE_HEADER.join(","));
    values.push('\n');
    for s in 0..n {
        for step in 0..t {
            for c in 0..d {
                values.push_str(&format!("{s},{step},{c},{:.16e}\n", split.series.get(s, step, c)));
            }
        }
    }
    let mut labels = LABEL_HEADER.join(",");
    labels.push('\n');
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for (s, &l) in split.labels.iter().enumerate() {
        w.write_record([s.to_string(), l.to_string(), split.class_names[l].clone()]).expect("in-memory write");
    }
    labels.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8"));
    (values, labels)
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str], what: &str) -> Result<()> {
    let header = reader.headers().map_err(|e| format_err!("{what}: {e}"))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(format_err!("{what}: header must be `{}`, found `{}`", expected.join(","), got.join(",")));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64, what: &str) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| format_err!("{what} line {line}: missing `{name}` field"))?.trim();
    raw.parse().map_err(|_| format_err!("{what} line {line}: invalid `{name}` value `{raw}`"))
}

/// Parses the values and labels CSVs. Rows may appear in any order, but the
/// `(sample, step, channel)` grid must be complete and free of duplicates.
pub fn parse_csv(values_csv: &str, labels_csv: &str) -> Result<Split> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(values_csv.as_bytes());
    check_header(&mut reader, &VALUE_HEADER, "values")?;
    let mut cells: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    let (mut n, mut t, mut d) = (0, 0, 0);
    for rec in reader.records() {
        let rec = rec.map_err(|e| format_err!("values: {e}"))?;
        let line = rec.position().map_or(0, |p| p.line());
        let key: (usize, usize, usize) = (
            field(&rec, 0, "sample", line, "values")?,
            field(&rec, 1, "step", line, "values")?,
            field(&rec, 2, "channel", line, "values")?,
        );
        let value: f64 = field(&rec, 3, "value", line, "values")?;
        if !value.is_finite() {
            return Err(format_err!("values line {line}: non-finite value"));
        }
        if cells.insert(key, value).is_some() {
            return Err(format_err!("values line {line}: duplicate cell {key:?}"));
        }
        n = n.max(key.0 + 1);
        t = t.max(key.1 + 1);
        d = d.max(key.2 + 1);
    }
    if cells.is_empty() {
        return Err(format_err!("values: no data rows"));
    }
    let mut data = Vec::with_capacity(n * t * d);
    let mut iter = cells.into_iter();
    for s in 0..n {
        for step in 0..t {
            for c in 0..d {
                // BTreeMap order is exactly the dense layout order
                match iter.next() {
                    Some((key, v)) if key == (s, step, c) => data.push(v),
                    _ => {
                        return Err(format_err!(
                            "values: missing cell sample={s} step={step} channel={c}"
                        ))
                    }
                }
            }
        }
    }
    let series = SeriesTensor::new(n, t, d, data).map_err(|e| format_err!("values: {e}"))?;

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(labels_csv.as_bytes());
    check_header(&mut reader, &LABEL_HEADER, "labels")?;
    let mut labels = vec![None; n];
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| format_err!("labels: {e}"))?;
        let line = rec.position().map_or(0, |p| p.line());
        let sample: usize = field(&rec, 0, "sample", line, "labels")?;
        let label: usize = field(&rec, 1, "label", line, "labels")?;
        let name = rec.get(2).ok_or_else(|| format_err!("labels line {line}: missing `class` field"))?.to_string();
        let slot = labels
            .get_mut(sample)
            .ok_or_else(|| format_err!("labels line {line}: sample {sample} has no values"))?;
        if slot.replace(label).is_some() {
            return Err(format_err!("labels line {line}: duplicate label for sample {sample}"));
        }
        match names.get(&label) {
            Some(existing) if *existing != name => {
                return Err(format_err!(
                    "labels line {line}: class {label} named `{name}` but earlier `{existing}`"
                ))
            }
            _ => {
                names.insert(label, name);
            }
        }
    }
    let labels: Vec<usize> = labels
        .into_iter()
        .enumerate()
        .map(|(s, l)| l.ok_or_else(|| format_err!("labels: missing label for sample {s}")))
        .collect::<Result<_>>()?;
    let n_classes = names.keys().next_back().map_or(0, |k| k + 1);
    let class_names = (0..n_classes)
        .map(|k| names.remove(&k).ok_or_else(|| format_err!("labels: no sample names class index {k}")))
        .collect::<Result<Vec<_>>>()?;
    Split::new(series, labels, class_names)
}

pub fn read_csv_split(values_path: &Path) -> Result<Split> {
    let values = std::fs::read_to_string(values_path)?;
    let labels = std::fs::read_to_string(labels_path_for(values_path))?;
    parse_csv(&values, &labels)
}

pub fn write_csv_split(values_path: &Path, split: &Split) -> Result<()> {
    let (values, labels) = emit_csv(split);
    std::fs::write(values_path, values)?;
    std::fs::write(labels_path_for(values_path), labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LABELS: &str = "sample,label,class\n0,0,up\n1,1,down\n";

    #[test]
    fn header_only_is_rejected() {
        assert!(parse_csv("sample,step,channel,value\n", LABELS).is_err());
    }

    #[test]
    fn hand_fixture_in_any_order() {
        let mut rows = vec![];
        for s in 0..2 {
            for t in 0..2 {
                for c in 0..2 {
                    rows.push(format!("{s},{t},{c},{}", s * 100 + t * 10 + c));
                }
            }
        }
        rows.reverse();
        let text = format!("sample,step,channel,value\n{}\n", rows.join("\n"));
        let split = parse_csv(&text, LABELS).unwrap();
        assert_eq!(split.series.shape(), (2, 2, 2));
        assert_eq!(split.series.get(1, 0, 1), 101.0);
        assert_eq!(split.labels, vec![0, 1]);
        assert_eq!(split.class_names, vec!["up", "down"]);
    }

    #[test]
    fn gap_is_named() {
        let text = "sample,step,channel,value\n0,0,0,1\n0,1,0,2\n1,0,0,3\n";
        let err = parse_csv(text, LABELS).unwrap_err().to_string();
        assert!(err.contains("sample=1 step=1 channel=0"), "{err}");
    }

    #[test]
    fn bad_values_are_located() {
        let text = "sample,step,channel,value\n0,0,0,abc\n";
        let err = parse_csv(text, "sample,label,class\n0,0,a\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("abc"), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            n in 1usize..4, t in 1usize..5, d in 1usize..4,
            raw in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 48),
        ) {
            let series = SeriesTensor::from_fn(n, t, d, |a, b, c| raw[(a * t * d + b * d + c) % raw.len()]).unwrap();
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let split = Split::new(series, labels, vec!["x".into(), "y, z".into()]).unwrap();
            let (v, l) = emit_csv(&split);
            let back = parse_csv(&v, &l).unwrap();
            prop_assert!(back.series.values().iter().zip(split.series.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.labels, split.labels);
        }
    }
}
