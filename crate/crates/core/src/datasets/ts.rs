//! UEA/sktime `.ts` text format (equal-length, classification problems only).

use std::fmt::Write as _;

use super::Split;
use crate::error::{format_err, Result};
use crate::tensor::SeriesTensor;

#[derive(Default)]
struct Header {
    dimensions: Option<usize>,
    series_length: Option<usize>,
    class_labels: Option<Vec<String>>,
}

fn parse_bool(value: Option<&str>, directive: &str, line_no: usize) -> Result<bool> {
    match value.map(str::to_ascii_lowercase).as_deref() {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        _ => Err(format_err!("line {line_no}: {directive} expects true or false")),
    }
}

fn parse_count(value: Option<&str>, directive: &str, line_no: usize) -> Result<usize> {
    value
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .ok_or_else(|| format_err!("line {line_no}: {directive} expects a positive integer"))
}

/// Parses one split of a `.ts` file. Labels are indexed by their position
/// in the `@classLabel` declaration.
pub fn parse_ts(text: &str) -> Result<Split> {
    let mut header = Header::default();
    let mut in_data = false;
    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut shape: Option<(usize, usize)> = None; // (dims, length)

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            if !line.starts_with('@') {
                return Err(format_err!("line {line_no}: expected a header directive or @data"));
            }
            let mut parts = line.split_whitespace();
            let directive = parts.next().unwrap_or_default().to_ascii_lowercase();
            match directive.as_str() {
                "@problemname" => {}
                "@timestamps" => {
                    if parse_bool(parts.next(), "@timeStamps", line_no)? {
                        return Err(format_err!("line {line_no}: timestamped series are not supported"));
                    }
                }
                "@missing" => {
                    parse_bool(parts.next(), "@missing", line_no)?;
                }
                "@univariate" => {
                    if parse_bool(parts.next(), "@univariate", line_no)? {
                        header.dimensions.get_or_insert(1);
                    }
                }
                "@dimensions" | "@dimension" => {
                    header.dimensions = Some(parse_count(parts.next(), "@dimensions", line_no)?);
                }
                "@equallength" => {
                    if !parse_bool(parts.next(), "@equalLength", line_no)? {
                        return Err(format_err!("line {line_no}: variable-length series are not supported"));
                    }
                }
                "@serieslength" => {
                    header.series_length = Some(parse_count(parts.next(), "@seriesLength", line_no)?);
                }
                "@classlabel" => {
                    if !parse_bool(parts.next(), "@classLabel", line_no)? {
                        return Err(format_err!("line {line_no}: only classification problems are supported"));
                    }
                    let names: Vec<String> = parts.map(str::to_string).collect();
                    if names.is_empty() {
                        return Err(format_err!("line {line_no}: @classLabel true lists no labels"));
                    }
                    header.class_labels = Some(names);
                }
                "@targetlabel" => {
                    return Err(format_err!("line {line_no}: regression problems are not supported"));
                }
                "@data" => in_data = true,
                other => return Err(format_err!("line {line_no}: unknown directive {other}")),
            }
            continue;
        }

        let class_names =
            header.class_labels.as_ref().ok_or_else(|| format_err!("missing @classLabel declaration"))?;
        let fields: Vec<&str> = line.split(':').collect();
        if fields.len() < 2 {
            return Err(format_err!("line {line_no}: expected dimensions followed by a class label"));
        }
        let (dims, label) = fields.split_at(fields.len() - 1);
        let label = label[0].trim();
        let class = class_names
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| format_err!("line {line_no}: unknown class label `{label}`"))?;

        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dims.len());
        for (d, field) in dims.iter().enumerate() {
            let col = field
                .split(',')
                .map(|tok| {
                    let tok = tok.trim();
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| format_err!("line {line_no}, dimension {d}: non-numeric value `{tok}`"))
                })
                .collect::<Result<Vec<f64>>>()?;
            columns.push(col);
        }
        let len = columns[0].len();
        if let Some((d, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != len) {
            return Err(format_err!(
                "line {line_no}: dimension {d} has {} values but dimension 0 has {len}",
                c.len()
            ));
        }
        match shape {
            None => {
                if let Some(expected) = header.dimensions.filter(|&e| e != columns.len()) {
                    return Err(format_err!(
                        "line {line_no}: {} dimensions but @dimensions declares {expected}",
                        columns.len()
                    ));
                }
                if let Some(expected) = header.series_length.filter(|&e| e != len) {
                    return Err(format_err!(
                        "line {line_no}: series length {len} but @seriesLength declares {expected}"
                    ));
                }
                shape = Some((columns.len(), len));
            }
            Some((dd, ll)) if (dd, ll) != (columns.len(), len) => {
                return Err(format_err!(
                    "line {line_no}: sample has {} dimensions of length {len}, expected {dd} of length {ll}",
                    columns.len()
                ));
            }
            Some(_) => {}
        }
        for t in 0..len {
            values.extend(columns.iter().map(|c| c[t]));
        }
        labels.push(class);
    }

    if !in_data {
        return Err(format_err!("missing @data section"));
    }
    let (dims, len) = shape.ok_or_else(|| format_err!("@data section contains no samples"))?;
    let series = SeriesTensor::new(labels.len(), len, dims, values).map_err(|e| format_err!("{e}"))?;
    Split::new(series, labels, header.class_labels.unwrap_or_default())
}

/// Writes a split in `.ts` format with 17 significant digits per value.
pub fn emit_ts(split: &Split, problem_name: &str) -> String {
    let (n, t, d) = split.series.shape();
    let mut out = String::with_capacity(n * t * d * 24 + 256);
    let _ = writeln!(out, "@problemName {problem_name}");
    out.push_str("@timeStamps false\n@missing false\n");
    let _ = writeln!(out, "@univariate {}", d == 1);
    if d > 1 {
        let _ = writeln!(out, "@dimensions {d}");
    }
    out.push_str("@equalLength true\n");
    let _ = writeln!(out, "@seriesLength {t}");
    let _ = writeln!(out, "@classLabel true {}", split.class_names.join(" "));
    out.push_str("@data\n");
    for s in 0..n {
        for c in 0..d {
            for step in 0..t {
                if step > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:.16e}", split.series.get(s, step, c));
            }
            out.push(':');
        }
        out.push_str(&split.class_names[split.labels[s]]);
        out.push('\n');
    }
    out
}
