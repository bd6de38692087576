//! Average-rank tables across datasets from saved cross-validation runs.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::experiment::{CvReport, MethodResult, TimingReport, CV_SCHEMA};
use crate::ensemble::Method;
use crate::error::{Error, Result};
use crate::metrics::{average_ranks, MetricKind};

/// Per-dataset mean results of one run directory.
#[derive(Debug, Clone)]
pub struct RunResults {
    pub dir: PathBuf,
    pub report: CvReport,
    pub timing: Option<TimingReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub measure: String,
    pub datasets: usize,
    pub ranks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub methods: Vec<Method>,
    pub rows: Vec<RankRow>,
}

/// Finds every `metrics.json` below `root`, in path order.
pub fn collect_runs(root: &Path) -> Result<Vec<RunResults>> {
    let mut dirs = Vec::new();
    find_metric_dirs(root, &mut dirs)?;
    dirs.sort();
    dirs.into_iter()
        .map(|dir| {
            let text = std::fs::read_to_string(dir.join("metrics.json"))?;
            let report: CvReport = serde_json::from_str(&text)?;
            if report.schema != CV_SCHEMA {
                return Err(Error::Data(format!(
                    "{}: unexpected schema {}",
                    dir.display(),
                    report.schema
                )));
            }
            let timing_path = dir.join("timing.json");
            let timing = if timing_path.exists() {
                Some(serde_json::from_str(&std::fs::read_to_string(
                    timing_path,
                )?)?)
            } else {
                None
            };
            Ok(RunResults {
                dir,
                report,
                timing,
            })
        })
        .collect()
}

fn find_metric_dirs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join("metrics.json").is_file() {
        out.push(dir.to_path_buf());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            find_metric_dirs(&path, out)?;
        }
    }
    Ok(())
}

/// Ranks methods per dataset and averages. Every run must cover the same
/// methods; a metric undefined on some dataset is dropped from that row.
pub fn rank_table(runs: &[RunResults]) -> Result<RankTable> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Data("no metrics.json found".into()))?;
    let mut methods: Vec<Method> = first.report.methods.iter().map(|m| m.method).collect();
    methods.sort();
    for run in runs {
        let mut these: Vec<Method> = run.report.methods.iter().map(|m| m.method).collect();
        these.sort();
        if these != methods {
            return Err(Error::Data(format!(
                "{} covers different methods than {}",
                run.dir.display(),
                first.dir.display()
            )));
        }
    }
    let mut rows = Vec::new();
    for kind in MetricKind::ALL {
        let columns: Vec<Vec<f64>> = runs
            .iter()
            .filter_map(|run| {
                methods
                    .iter()
                    .map(|&m| lookup(run, m).overall.get(kind))
                    .collect::<Option<Vec<f64>>>()
            })
            .collect();
        rows.push(ranked_row(kind.key(), &columns, methods.len(), true)?);
    }
    if runs.iter().all(|r| r.timing.is_some()) {
        let columns = runs
            .iter()
            .map(|run| {
                let timing = run.timing.as_ref().expect("checked above");
                methods
                    .iter()
                    .map(|&m| {
                        timing
                            .methods
                            .iter()
                            .find(|t| t.method == m)
                            .map(|t| t.mean_train_seconds)
                            .ok_or_else(|| {
                                Error::Data(format!("{}: no timing for {m}", run.dir.display()))
                            })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ranked_row("train_seconds", &columns, methods.len(), false)?);
    }
    Ok(RankTable { methods, rows })
}

fn lookup(run: &RunResults, method: Method) -> &MethodResult {
    run.report
        .methods
        .iter()
        .find(|m| m.method == method)
        .expect("method sets were checked")
}

/// `columns[dataset][method]` to a row of mean ranks; an empty row holds NaN.
fn ranked_row(
    measure: &str,
    columns: &[Vec<f64>],
    methods: usize,
    higher: bool,
) -> Result<RankRow> {
    let ranks = if columns.is_empty() {
        vec![f64::NAN; methods]
    } else {
        let by_method: Vec<Vec<f64>> = (0..methods)
            .map(|m| columns.iter().map(|c| c[m]).collect())
            .collect();
        average_ranks(&by_method, higher)?
    };
    Ok(RankRow {
        measure: measure.into(),
        datasets: columns.len(),
        ranks,
    })
}

impl RankTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["measure".to_string(), "datasets".to_string()];
        header.extend(self.methods.iter().map(|m| m.name().to_string()));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.measure.clone(), row.datasets.to_string()];
            record.extend(row.ranks.iter().map(|r| {
                if r.is_nan() {
                    String::new()
                } else {
                    format!("{r:.4}")
                }
            }));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}
