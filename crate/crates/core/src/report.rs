//! Turns a results file into the comparison CSVs.
//!
//! Only `ok` rows contribute. A dataset is left out of ranks and p-values when
//! any method has no `ok` row for it; every dropped cell and dataset is listed
//! in `exclusions.csv`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::bench::read_results;
use crate::error::{format_err, Result};
use crate::stats::{average_rank, fmt_sig6, summarize, welch_t_test, MethodSample};
use crate::training::{RunRecord, RunStatus};

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: String,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exclusion {
    pub dataset: String,
    pub method: String,
    /// Empty for dataset-level exclusions.
    pub seed: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// Datasets where every method has at least one `ok` row.
    pub ranked_datasets: Vec<String>,
    pub summary: Vec<SummaryRow>,
    /// `(dataset, method, mean wall seconds)` over `ok` rows.
    pub timing: Vec<(String, String, f64)>,
    /// Average rank per method, `None` when no dataset is complete.
    pub ranks: Vec<Option<f64>>,
    /// Pairwise p-values; `None` where a method has fewer than two values.
    pub pvalues: Vec<Vec<Option<f64>>>,
    pub exclusions: Vec<Exclusion>,
}

fn first_appearance<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    it.filter(|s| seen.insert(*s)).map(str::to_string).collect()
}

fn ok_rows<'a>(records: &'a [RunRecord], dataset: &'a str, method: &'a str) -> impl Iterator<Item = &'a RunRecord> {
    records
        .iter()
        .filter(move |r| r.status == RunStatus::Ok && r.dataset_id == dataset && r.adapter_id == method)
}

pub fn build_report(records: &[RunRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(format_err!("results file has no runs"));
    }
    let datasets = first_appearance(records.iter().map(|r| r.dataset_id.as_str()));
    let methods = first_appearance(records.iter().map(|r| r.adapter_id.as_str()));

    let mut summary = Vec::new();
    let mut timing = Vec::new();
    let mut exclusions: Vec<Exclusion> = records
        .iter()
        .filter(|r| r.status != RunStatus::Ok)
        .map(|r| Exclusion {
            dataset: r.dataset_id.clone(),
            method: r.adapter_id.clone(),
            seed: r.seed.to_string(),
            reason: r.status.as_str().to_string(),
        })
        .collect();

    let mut ranked_datasets = Vec::new();
    let mut table = Vec::new();
    for ds in &datasets {
        let mut row = Vec::with_capacity(methods.len());
        for m in &methods {
            let rows: Vec<&RunRecord> = ok_rows(records, ds, m).collect();
            if rows.is_empty() {
                continue;
            }
            let acc: Vec<f64> = rows.iter().filter_map(|r| r.accuracy).collect();
            let (mean, std) = summarize(&acc);
            summary.push(SummaryRow { dataset: ds.clone(), method: m.clone(), mean, std, n_seeds: acc.len() });
            let wall: f64 = rows.iter().map(|r| r.wall_seconds).sum::<f64>() / rows.len() as f64;
            timing.push((ds.clone(), m.clone(), wall));
            row.push(mean);
        }
        if row.len() == methods.len() {
            ranked_datasets.push(ds.clone());
            table.push(row);
        } else {
            exclusions.push(Exclusion {
                dataset: ds.clone(),
                method: String::new(),
                seed: String::new(),
                reason: "dataset_excluded_missing_method".into(),
            });
        }
    }

    let ranks = if table.is_empty() {
        vec![None; methods.len()]
    } else {
        average_rank(&table)?.into_iter().map(Some).collect()
    };

    // Per-seed accuracy averaged over the ranked datasets.
    let samples: Vec<MethodSample> = methods
        .iter()
        .map(|m| {
            let mut per_seed: Vec<(u64, f64, usize)> = Vec::new();
            for ds in &ranked_datasets {
                for r in ok_rows(records, ds, m) {
                    let acc = r.accuracy.unwrap_or(f64::NAN);
                    match per_seed.iter_mut().find(|(s, _, _)| *s == r.seed) {
                        Some(entry) => {
                            entry.1 += acc;
                            entry.2 += 1;
                        }
                        None => per_seed.push((r.seed, acc, 1)),
                    }
                }
            }
            let values = per_seed
                .into_iter()
                .filter(|&(_, _, count)| count == ranked_datasets.len())
                .map(|(_, sum, count)| sum / count as f64)
                .collect();
            MethodSample::new(m.clone(), values)
        })
        .collect();

    let m = methods.len();
    let mut pvalues = vec![vec![Some(1.0); m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let p = welch_t_test(&samples[i], &samples[j]).ok().map(|w| w.p_two_sided);
            pvalues[i][j] = p;
            pvalues[j][i] = p;
        }
    }

    Ok(Report { methods, datasets, ranked_datasets, summary, timing, ranks, pvalues, exclusions })
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig6).unwrap_or_else(|| "NA".into())
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| std::io::Error::other(e.to_string()))?;
    let io = |e: csv::Error| std::io::Error::other(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

impl Report {
    /// Writes `summary.csv`, `timing.csv`, `ranks.csv`, `pvalues.csv` and
    /// `exclusions.csv` into `dir`, returning the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let paths: Vec<PathBuf> =
            ["summary.csv", "timing.csv", "ranks.csv", "pvalues.csv", "exclusions.csv"].iter().map(|f| dir.join(f)).collect();

        write_csv(
            &paths[0],
            &["dataset", "method", "mean", "std", "n_seeds"],
            self.summary.iter().map(|s| {
                vec![s.dataset.clone(), s.method.clone(), fmt_sig6(s.mean), fmt_sig6(s.std), s.n_seeds.to_string()]
            }),
        )?;
        write_csv(
            &paths[1],
            &["dataset", "method", "mean_wall_seconds"],
            self.timing.iter().map(|(d, m, t)| vec![d.clone(), m.clone(), fmt_sig6(*t)]),
        )?;
        write_csv(
            &paths[2],
            &["method", "avg_rank"],
            self.methods.iter().zip(&self.ranks).map(|(m, r)| vec![m.clone(), opt(*r)]),
        )?;
        let mut header = vec!["method"];
        header.extend(self.methods.iter().map(String::as_str));
        write_csv(
            &paths[3],
            &header,
            self.methods.iter().zip(&self.pvalues).map(|(m, row)| {
                std::iter::once(m.clone()).chain(row.iter().map(|p| opt(*p))).collect()
            }),
        )?;
        write_csv(
            &paths[4],
            &["dataset", "method", "seed", "reason"],
            self.exclusions
                .iter()
                .map(|e| vec![e.dataset.clone(), e.method.clone(), e.seed.clone(), e.reason.clone()]),
        )?;
        Ok(paths)
    }
}

/// Reads `results` and writes the report CSVs into `out_dir`.
pub fn run_report(results: &Path, out_dir: &Path) -> Result<Report> {
    let (_, records) = read_results(results)?;
    let report = build_report(&records)?;
    report.write(out_dir)?;
    Ok(report)
}
