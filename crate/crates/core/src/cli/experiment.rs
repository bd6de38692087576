//! Repeated stratified cross-validation of several ensemble methods.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::dataset::{load_mulan_files, DatasetSummary, MultiLabelDataset};
use crate::ensemble::{
    instance_budget, train_ensemble_with, EnsembleModel, InstanceBudget, Method,
};
use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_label, imr_bucket_report, ImrBucket, LabelMetrics, MacroSummary, MetricKind,
    MetricReport,
};
use crate::sampling::{iterative_stratified_kfold, tag, RngStream};

pub const CV_SCHEMA: &str = "chainbalance.cv/v1";
pub const TIMING_SCHEMA: &str = "chainbalance.timing/v1";
pub const PER_LABEL_SCHEMA: &str = "chainbalance.per_label/v1";

/// Mean of each metric over some collection; `None` where nothing was defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub f_measure: Option<f64>,
    pub g_mean: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub auc_roc: Option<f64>,
    pub auc_pr: Option<f64>,
}

impl MetricMeans {
    pub fn from_fn(mut f: impl FnMut(MetricKind) -> Option<f64>) -> Self {
        Self {
            f_measure: f(MetricKind::FMeasure),
            g_mean: f(MetricKind::GMean),
            balanced_accuracy: f(MetricKind::BalancedAccuracy),
            auc_roc: f(MetricKind::AucRoc),
            auc_pr: f(MetricKind::AucPr),
        }
    }

    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::FMeasure => self.f_measure,
            MetricKind::GMean => self.g_mean,
            MetricKind::BalancedAccuracy => self.balanced_accuracy,
            MetricKind::AucRoc => self.auc_roc,
            MetricKind::AucPr => self.auc_pr,
        }
    }
}

fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub macro_avg: MacroSummary,
    pub skipped_labels: usize,
    pub threshold_fallbacks: usize,
    pub classifiers: usize,
    pub fitted_rows: usize,
    pub instance_budget: Option<InstanceBudget>,
    /// Classifiers per label after clamping, for the budgeted methods.
    pub effective_budget: Option<Vec<Option<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMeans {
    pub label: usize,
    pub name: String,
    pub imr: Option<f64>,
    pub metrics: MetricMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    /// Mean of fold macro averages over all folds of all repeats.
    pub overall: MetricMeans,
    pub repeats: Vec<MetricMeans>,
    pub folds: Vec<FoldResult>,
    pub per_label: Vec<LabelMeans>,
    pub imr_buckets: BTreeMap<String, Vec<ImrBucket>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub methods: Vec<Method>,
    pub c: usize,
    pub theta_max: f64,
    pub theta_min: Option<f64>,
    pub tree_max_depth: Option<usize>,
    pub tree_min_samples_leaf: usize,
    pub repeats: usize,
    pub folds: usize,
    pub feature_keep_fraction: Option<f64>,
    pub seed: u64,
}

impl From<&ExperimentConfig> for RunSettings {
    fn from(cfg: &ExperimentConfig) -> Self {
        Self {
            methods: cfg.methods.clone(),
            c: cfg.c,
            theta_max: cfg.theta_max,
            theta_min: cfg.theta_min,
            tree_max_depth: cfg.tree.max_depth,
            tree_min_samples_leaf: cfg.tree.min_samples_leaf,
            repeats: cfg.repeats,
            folds: cfg.folds,
            feature_keep_fraction: cfg.feature_keep_fraction,
            seed: cfg.seed,
        }
    }
}

/// Everything in `metrics.json`. Holds no timings, so identical inputs give
/// identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub schema: String,
    pub dataset: String,
    pub settings: RunSettings,
    pub summary: DatasetSummary,
    pub label_names: Vec<String>,
    pub label_imr: Vec<Option<f64>>,
    pub methods: Vec<MethodResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTiming {
    pub repeat: usize,
    pub fold: usize,
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: Method,
    pub mean_train_seconds: f64,
    pub folds: Vec<FoldTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub schema: String,
    pub dataset: String,
    pub methods: Vec<MethodTiming>,
}

/// One row of `per_label.csv`.
#[derive(Debug, Clone, Serialize)]
struct PerLabelRow<'a> {
    schema: &'static str,
    method: &'a str,
    repeat: usize,
    fold: usize,
    label: usize,
    name: &'a str,
    imr: Option<f64>,
    f_measure: Option<f64>,
    g_mean: Option<f64>,
    balanced_accuracy: Option<f64>,
    auc_roc: Option<f64>,
    auc_pr: Option<f64>,
    threshold_f: f64,
    threshold_g: f64,
    threshold_b: f64,
    threshold_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: CvReport,
    pub timing: TimingReport,
    /// Per-label test metrics, indexed `[method][repeat * folds + fold]`.
    pub fold_labels: Vec<Vec<Vec<LabelMetrics>>>,
}

/// Loads the dataset named in `cfg`, applies feature reduction and runs CV.
pub fn run_cv(cfg: &ExperimentConfig) -> Result<CvOutcome> {
    cfg.validate()?;
    let ds = load_mulan_files(&cfg.arff, &cfg.xml)?;
    run_cv_on(&ds, cfg)
}

pub fn run_cv_on(ds: &MultiLabelDataset, cfg: &ExperimentConfig) -> Result<CvOutcome> {
    cfg.validate()?;
    let reduced;
    let ds = match cfg.feature_keep_fraction {
        Some(f) if f < 1.0 => {
            reduced = ds.reduce_features_by_frequency(f)?;
            &reduced
        }
        _ => ds,
    };
    if ds.n_rows() < cfg.folds {
        return Err(Error::Data(format!(
            "{} rows cannot fill {} folds",
            ds.n_rows(),
            cfg.folds
        )));
    }
    let summary = ds.summarize()?;
    let label_imr: Vec<Option<f64>> = ds.all_label_stats().iter().map(|s| s.imr).collect();
    let root = RngStream::new(cfg.seed);
    let q = ds.n_labels();

    let mut partitions = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        partitions.push(iterative_stratified_kfold(
            ds,
            cfg.folds,
            root.derive(&[tag::FOLDS, r as u64]),
        )?);
    }

    let mut methods = Vec::new();
    let mut timings = Vec::new();
    let mut fold_labels = Vec::new();
    for &method in &cfg.methods {
        let mut folds = Vec::new();
        let mut fold_timing = Vec::new();
        let mut labels_by_fold = Vec::new();
        for (r, parts) in partitions.iter().enumerate() {
            for (f, test_rows) in parts.iter().enumerate() {
                let mut train_rows: Vec<usize> = parts
                    .iter()
                    .enumerate()
                    .filter(|&(g, _)| g != f)
                    .flat_map(|(_, p)| p.iter().copied())
                    .collect();
                train_rows.sort_unstable();
                let train = ds.select_rows(&train_rows);
                let test = ds.select_rows(test_rows);
                let seed = root.derive(&[tag::TRAIN, r as u64, f as u64]).key();
                let spec = cfg.spec_for(method, seed);

                let start = Instant::now();
                let model = train_ensemble_with(&train, &spec, cfg.parallelism)?;
                let train_seconds = start.elapsed().as_secs_f64();
                let start = Instant::now();
                let train_scores = model.predict_matrix(train.features.view(), cfg.parallelism)?;
                let test_scores = model.predict_matrix(test.features.view(), cfg.parallelism)?;
                let predict_seconds = start.elapsed().as_secs_f64();

                let per_label = (0..q)
                    .map(|j| {
                        let col = |a: &ndarray::Array2<f64>| a.column(j).to_vec();
                        evaluate_label(
                            j,
                            &col(&train_scores),
                            &train.label_column(j).to_vec(),
                            &col(&test_scores),
                            &test.label_column(j).to_vec(),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                let report = MetricReport::from_labels(per_label, model.skipped.len());
                folds.push(FoldResult {
                    repeat: r,
                    fold: f,
                    train_rows: train.n_rows(),
                    test_rows: test.n_rows(),
                    macro_avg: report.macro_avg.clone(),
                    skipped_labels: report.skipped_labels,
                    threshold_fallbacks: report
                        .per_label
                        .iter()
                        .filter(|l| l.threshold_fallback)
                        .count(),
                    classifiers: model.classifier_count(),
                    fitted_rows: model.fitted_rows(),
                    instance_budget: instance_budget(&train, &spec).ok(),
                    effective_budget: effective_budget(&model),
                });
                fold_timing.push(FoldTiming {
                    repeat: r,
                    fold: f,
                    train_seconds,
                    predict_seconds,
                });
                labels_by_fold.push(report.per_label);
            }
        }
        methods.push(summarize_method(
            method,
            &folds,
            &labels_by_fold,
            cfg.repeats,
            ds,
            &label_imr,
        ));
        let mean_train_seconds =
            fold_timing.iter().map(|t| t.train_seconds).sum::<f64>() / fold_timing.len() as f64;
        timings.push(MethodTiming {
            method,
            mean_train_seconds,
            folds: fold_timing,
        });
        fold_labels.push(labels_by_fold);
    }

    let dataset = cfg.name.clone();
    Ok(CvOutcome {
        report: CvReport {
            schema: CV_SCHEMA.into(),
            dataset: dataset.clone(),
            settings: RunSettings::from(cfg),
            summary,
            label_names: ds.label_names.clone(),
            label_imr,
            methods,
        },
        timing: TimingReport {
            schema: TIMING_SCHEMA.into(),
            dataset,
            methods: timings,
        },
        fold_labels,
    })
}

fn effective_budget(model: &EnsembleModel) -> Option<Vec<Option<usize>>> {
    let budget = model.budget.as_ref()?;
    let mut per_label = vec![None; model.q];
    let trained = (0..model.q).filter(|j| !model.skipped.iter().any(|s| s.label == *j));
    for (j, &cj) in trained.zip(&budget.clamped) {
        per_label[j] = Some(cj);
    }
    Some(per_label)
}

fn summarize_method(
    method: Method,
    folds: &[FoldResult],
    labels_by_fold: &[Vec<LabelMetrics>],
    repeats: usize,
    ds: &MultiLabelDataset,
    label_imr: &[Option<f64>],
) -> MethodResult {
    let fold_mean = |fs: &[FoldResult], kind| {
        mean_defined(fs.iter().map(|f| f.macro_avg.get(kind).map(|v| v.mean)))
    };
    let overall = MetricMeans::from_fn(|kind| fold_mean(folds, kind));
    let per_repeat = folds.len() / repeats;
    let repeat_means = folds
        .chunks(per_repeat)
        .map(|chunk| MetricMeans::from_fn(|kind| fold_mean(chunk, kind)))
        .collect();
    let per_label: Vec<LabelMeans> = (0..ds.n_labels())
        .map(|j| LabelMeans {
            label: j,
            name: ds.label_names[j].clone(),
            imr: label_imr[j],
            metrics: MetricMeans::from_fn(|kind| {
                mean_defined(labels_by_fold.iter().map(|ls| ls[j].get(kind)))
            }),
        })
        .collect();
    let imr_buckets = MetricKind::ALL
        .iter()
        .map(|&kind| {
            let pairs: Vec<(f64, Option<f64>)> = per_label
                .iter()
                .filter_map(|l| l.imr.map(|imr| (imr, l.metrics.get(kind))))
                .collect();
            (kind.key().to_string(), imr_bucket_report(&pairs))
        })
        .collect();
    MethodResult {
        method,
        overall,
        repeats: repeat_means,
        folds: folds.to_vec(),
        per_label,
        imr_buckets,
    }
}

impl CvOutcome {
    /// Writes `metrics.json`, `timing.json` and `per_label.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("metrics.json"), &self.report)?;
        write_json(&dir.join("timing.json"), &self.timing)?;
        let mut w = csv::Writer::from_path(dir.join("per_label.csv"))?;
        let folds = self.report.settings.folds;
        for (m, labels_by_fold) in self.fold_labels.iter().enumerate() {
            let method = self.report.methods[m].method.name();
            for (i, labels) in labels_by_fold.iter().enumerate() {
                for l in labels {
                    w.serialize(PerLabelRow {
                        schema: PER_LABEL_SCHEMA,
                        method,
                        repeat: i / folds,
                        fold: i % folds,
                        label: l.label,
                        name: &self.report.label_names[l.label],
                        imr: self.report.label_imr[l.label],
                        f_measure: l.f_measure,
                        g_mean: l.g_mean,
                        balanced_accuracy: l.balanced_accuracy,
                        auc_roc: l.auc_roc,
                        auc_pr: l.auc_pr,
                        threshold_f: l.threshold_f,
                        threshold_g: l.threshold_g,
                        threshold_b: l.threshold_b,
                        threshold_fallback: l.threshold_fallback,
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
