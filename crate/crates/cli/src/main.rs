use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chanreduce::bench::{run_benchmark, BenchmarkConfig};
use chanreduce::datasets::{read_split, write_split, DataFormat, Split};
use chanreduce::report::run_report;
use chanreduce::{fit_pca, fit_random_projection, fit_truncated_svd, fit_variance_selection, Adapter, Error};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chanreduce", version, about = "Channel reduction adapters and benchmark for multivariate time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    Pca,
    Svd,
    #[value(name = "rand_proj", alias = "rand-proj")]
    RandProj,
    #[value(name = "var_select", alias = "var-select")]
    VarSelect,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ts,
    Csv,
}

impl From<Format> for DataFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Ts => DataFormat::Ts,
            Format::Csv => DataFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a reducer on a training split and save it as JSON.
    Fit {
        #[arg(long, value_enum)]
        adapter: FitKind,
        /// Number of output channels D'.
        #[arg(long)]
        dim: usize,
        /// Patch window size (pca only).
        #[arg(long, default_value_t = 1)]
        pws: usize,
        /// Standardize channels before PCA.
        #[arg(long)]
        scaled: bool,
        /// Seed for random projection.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        input: PathBuf,
        /// Input format; inferred from the extension when omitted.
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Apply a saved reducer. The output uses the input's format.
    Transform {
        #[arg(long)]
        reducer: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run a dataset × adapter × seed grid, appending to a results CSV.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Results file; defaults to results.csv under $CHANREDUCE_OUTPUT_DIR
        /// or the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Runs executed in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Summaries, ranks, p-values and timings from a results CSV.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Io(_) => 2,
        Error::Format(_) | Error::Json(_) => 3,
        Error::InvalidArgument(_) | Error::Underdetermined(_) | Error::DegenerateLabels(_) => 4,
    }
}

fn resolve_format(path: &Path, explicit: Option<Format>) -> Result<DataFormat, Error> {
    if let Some(f) = explicit {
        return Ok(f.into());
    }
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ts") => Ok(DataFormat::Ts),
        Some("csv") => Ok(DataFormat::Csv),
        _ => Err(Error::Config(format!("cannot infer format of {}; pass --format", path.display()))),
    }
}

fn read_input(path: &Path, format: DataFormat) -> Result<Split, Error> {
    read_split(path, format).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn problem_name(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("reduced").to_string()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fit { adapter, dim, pws, scaled, seed, input, format, output } => {
            if pws != 1 && !matches!(adapter, FitKind::Pca) {
                return Err(Error::Config("--pws applies to pca only".into()));
            }
            if scaled && !matches!(adapter, FitKind::Pca) {
                return Err(Error::Config("--scaled applies to pca only".into()));
            }
            let split = read_input(&input, resolve_format(&input, format)?)?;
            let x = &split.series;
            let reducer = match adapter {
                FitKind::Pca => fit_pca(x, dim, scaled, pws)?,
                FitKind::Svd => fit_truncated_svd(x, dim)?,
                FitKind::RandProj => fit_random_projection(x, dim, seed)?,
                FitKind::VarSelect => fit_variance_selection(x, dim)?,
            };
            let ratios = reducer.explained_variance_ratio();
            if !ratios.is_empty() {
                let total: f64 = ratios.iter().sum();
                let listed: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
                println!("explained variance ratio: [{}] (total {total:.4})", listed.join(", "));
            }
            if reducer.truncated_steps() > 0 {
                eprintln!("note: {} trailing step(s) dropped to fit the patch window", reducer.truncated_steps());
            }
            std::fs::write(&output, Adapter::from(reducer).to_json()?)?;
            println!("wrote {}", output.display());
        }
        Command::Transform { reducer, input, output, format } => {
            let text = std::fs::read_to_string(&reducer)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", reducer.display()))))?;
            let adapter = Adapter::from_json(&text)?;
            let fmt = resolve_format(&input, format)?;
            let split = read_input(&input, fmt)?;
            let series = adapter.transform(&split.series)?;
            let out = Split::new(series, split.labels, split.class_names)?;
            write_split(&output, fmt, &out, &problem_name(&output))?;
        }
        Command::Benchmark { config, out, jobs } => {
            let cfg = BenchmarkConfig::load(&config)?;
            let path = out.unwrap_or_else(|| cfg.default_results_path());
            let outcome = run_benchmark(&cfg, &path, jobs)?;
            println!(
                "{} run(s) executed, {} already present; results in {}",
                outcome.executed,
                outcome.skipped,
                path.display()
            );
        }
        Command::Report { results, out_dir } => {
            let report = run_report(&results, &out_dir)?;
            println!(
                "{} method(s), {} of {} dataset(s) ranked; reports in {}",
                report.methods.len(),
                report.ranked_datasets.len(),
                report.datasets.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
