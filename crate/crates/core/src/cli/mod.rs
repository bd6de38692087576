//! Command-line interface: dataset statistics, cross-validation, the
//! exploitation simulation and rank tables.
//!
//! Exit status is 0 on success, 2 for configuration or usage errors and 3
//! for data errors. Failures are reported on stderr as
//! `{"error": {"kind": ..., "message": ...}}`.

pub mod config;
pub mod experiment;
pub mod rank;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{load_mulan_files, DatasetSummary};
use crate::ensemble::Parallelism;
use crate::error::{Error, Result};
use crate::sampling::RngStream;
use crate::simulate::{sweep, write_sweep_csv, SweepParams};
use config::{parse_methods, ExperimentConfig, FileConfig, MethodList};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "chainbalance",
    version,
    about = "Undersampled classifier-chain ensembles for imbalanced multi-label data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print label-imbalance statistics of a dataset as JSON.
    Stats(StatsArgs),
    /// Run repeated stratified cross-validation.
    Cv(CvArgs),
    /// Tabulate the majority-exploitation probability against simulation.
    Simulate(SimulateArgs),
    /// Average method ranks over several saved `cv` runs.
    Rank(RankArgs),
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub arff: PathBuf,
    #[arg(long)]
    pub xml: PathBuf,
    #[arg(long)]
    pub keep_fraction: Option<f64>,
    /// JSON destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    /// TOML file; flags given here take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub arff: Option<PathBuf>,
    #[arg(long)]
    pub xml: Option<PathBuf>,
    /// Dataset name in reports; defaults to the ARFF file stem.
    #[arg(long)]
    pub name: Option<String>,
    /// Comma-separated, e.g. `BR,ECC,ECCRU3`.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub c: Option<usize>,
    #[arg(long)]
    pub theta_max: Option<f64>,
    #[arg(long)]
    pub theta_min: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub keep_fraction: Option<f64>,
    #[arg(long)]
    pub tree_max_depth: Option<usize>,
    #[arg(long)]
    pub tree_min_samples_leaf: Option<usize>,
    /// Output directory for `metrics.json`, `timing.json` and `per_label.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Train and predict on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
    /// Size of the worker pool.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub c: usize,
    #[arg(long, default_value_t = 20)]
    pub m_start: usize,
    #[arg(long, default_value_t = 400)]
    pub m_end: usize,
    #[arg(long, default_value_t = 20)]
    pub m_step: usize,
    #[arg(long, default_value_t = 10_000)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Directory searched recursively for `metrics.json`.
    #[arg(long)]
    pub dir: PathBuf,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

fn report_error(kind: &str, message: String) {
    let record = ErrorRecord {
        error: ErrorBody { kind, message },
    };
    let line = serde_json::to_string(&record).unwrap_or_else(|_| "{\"error\":{}}".into());
    eprintln!("{line}");
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_DATA
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => {
            report_error("usage", e.kind().to_string() + ": " + e.to_string().trim());
            return EXIT_CONFIG;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            report_error(e.kind(), e.to_string());
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats(args) => stats(args),
        Command::Cv(args) => cv(args),
        Command::Simulate(args) => simulate(args),
        Command::Rank(args) => rank_cmd(args),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Serialize)]
struct LabelRecord<'a> {
    index: usize,
    name: &'a str,
    positives: usize,
    minority_class: u8,
    minority_count: usize,
    majority_count: usize,
    imr: Option<f64>,
}

#[derive(Serialize)]
struct StatsRecord<'a> {
    schema: &'static str,
    relation: &'a str,
    summary: DatasetSummary,
    labels: Vec<LabelRecord<'a>>,
}

fn stats(args: StatsArgs) -> Result<()> {
    let mut ds = load_mulan_files(&args.arff, &args.xml)?;
    if let Some(f) = args.keep_fraction {
        ds = ds.reduce_features_by_frequency(f)?;
    }
    let stats = ds.all_label_stats();
    let record = StatsRecord {
        schema: "chainbalance.stats/v1",
        relation: &ds.relation,
        summary: ds.summarize()?,
        labels: stats
            .iter()
            .map(|s| LabelRecord {
                index: s.label_index,
                name: &ds.label_names[s.label_index],
                positives: ds
                    .label_column(s.label_index)
                    .iter()
                    .map(|&v| v as usize)
                    .sum(),
                minority_class: s.minority_class,
                minority_count: s.minority_count,
                majority_count: s.majority_count,
                imr: s.imr,
            })
            .collect(),
    };
    let mut out = output(&args.out)?;
    serde_json::to_writer_pretty(&mut out, &record)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Overlays command-line flags on the config file, if any.
pub fn resolve_cv_config(args: &CvArgs) -> Result<ExperimentConfig> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let arff = args.arff.clone().or(file.arff).ok_or_else(|| {
        Error::Config("no ARFF file given (--arff or `arff` in the config)".into())
    })?;
    let xml =
        args.xml.clone().or(file.xml).ok_or_else(|| {
            Error::Config("no label XML given (--xml or `xml` in the config)".into())
        })?;
    let mut cfg = ExperimentConfig::new(arff, xml);
    if let Some(name) = args.name.clone().or(file.name) {
        cfg.name = name;
    }
    let methods = match (&args.methods, file.methods, file.method) {
        (Some(list), _, _) => Some(parse_methods(list)?),
        (None, Some(MethodList::Joined(list)), None) => Some(parse_methods(&list)?),
        (None, Some(MethodList::List(list)), None) => {
            Some(list.iter().map(|s| s.parse()).collect::<Result<Vec<_>>>()?)
        }
        (None, None, Some(one)) => Some(vec![one.parse()?]),
        (None, Some(_), Some(_)) => {
            return Err(Error::Config(
                "set either `method` or `methods`, not both".into(),
            ))
        }
        (None, None, None) => None,
    };
    if let Some(methods) = methods {
        cfg.methods = methods;
    }
    macro_rules! overlay {
        ($field:expr, $flag:expr, $file:expr) => {
            if let Some(v) = $flag.or($file) {
                $field = v;
            }
        };
    }
    overlay!(cfg.c, args.c, file.ensemble.c);
    overlay!(cfg.theta_max, args.theta_max, file.ensemble.theta_max);
    overlay!(cfg.seed, args.seed, file.seed);
    overlay!(cfg.repeats, args.repeats, file.cv.repeats);
    overlay!(cfg.folds, args.folds, file.cv.folds);
    overlay!(
        cfg.tree.min_samples_leaf,
        args.tree_min_samples_leaf,
        file.tree.min_samples_leaf
    );
    cfg.theta_min = args.theta_min.or(file.ensemble.theta_min);
    cfg.tree.max_depth = args.tree_max_depth.or(file.tree.max_depth);
    cfg.feature_keep_fraction = args.keep_fraction.or(file.feature_keep_fraction);
    cfg.out_dir = args.out.clone().or(file.out);
    if args.sequential || file.sequential.unwrap_or(false) {
        cfg.parallelism = Parallelism::Sequential;
    }
    cfg.tree.validate()?;
    cfg.validate()?;
    Ok(cfg)
}

fn cv(args: CvArgs) -> Result<()> {
    let cfg = resolve_cv_config(&args)?;
    if args.threads == Some(0) {
        return Err(Error::Config("--threads must be positive".into()));
    }
    let outcome = match args.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?
            .install(|| experiment::run_cv(&cfg))?,
        None => experiment::run_cv(&cfg)?,
    };
    match &cfg.out_dir {
        Some(dir) => outcome.write(dir)?,
        None => {
            let mut out = io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &outcome.report)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let params = SweepParams {
        n: args.n,
        chains: args.c,
        m_start: args.m_start,
        m_end: args.m_end,
        m_step: args.m_step,
        runs: args.runs,
    };
    let rows = sweep(&params, RngStream::new(args.seed))?;
    write_sweep_csv(&rows, output(&args.out)?)
}

fn rank_cmd(args: RankArgs) -> Result<()> {
    let runs = rank::collect_runs(&args.dir)?;
    let table = rank::rank_table(&runs)?;
    table.write_csv(output(&args.out)?)
}
