//! Imbalance-aware evaluation: point metrics under per-label thresholds,
//! ranking metrics, macro-averaging, rank tables and ImR buckets.
//!
//! `None` stands for an undefined value (for instance G-mean on a label with
//! no negatives); such labels are left out of macro averages and counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl BinaryConfusion {
    /// Counts with the rule `score >= threshold ⇒ positive`.
    pub fn at_threshold(scores: &[f64], truth: &[u8], threshold: f64) -> Self {
        let mut c = Self::default();
        for (&s, &t) in scores.iter().zip(truth) {
            match (s >= threshold, t == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn tpr(&self) -> Option<f64> {
        let p = self.tp + self.fn_;
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn tnr(&self) -> Option<f64> {
        let n = self.tn + self.fp;
        (n > 0).then(|| self.tn as f64 / n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointMetric {
    FMeasure,
    GMean,
    BalancedAccuracy,
}

impl PointMetric {
    pub const ALL: [PointMetric; 3] = [
        PointMetric::FMeasure,
        PointMetric::GMean,
        PointMetric::BalancedAccuracy,
    ];

    pub fn key(self) -> &'static str {
        match self {
            PointMetric::FMeasure => "f_measure",
            PointMetric::GMean => "g_mean",
            PointMetric::BalancedAccuracy => "balanced_accuracy",
        }
    }
}

/// F-measure is undefined only without positives in the truth; G-mean and
/// balanced accuracy also need negatives.
pub fn point_metric(conf: &BinaryConfusion, kind: PointMetric) -> Option<f64> {
    match kind {
        PointMetric::FMeasure => {
            conf.tpr()?;
            let denom = 2 * conf.tp + conf.fp + conf.fn_;
            Some(2.0 * conf.tp as f64 / denom as f64)
        }
        PointMetric::GMean => Some((conf.tpr()? * conf.tnr()?).sqrt()),
        PointMetric::BalancedAccuracy => Some((conf.tpr()? + conf.tnr()?) / 2.0),
    }
}

fn check_lengths(scores: &[f64], truth: &[u8]) -> Result<()> {
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch {
            scores: scores.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

/// Area under the ROC curve as the Mann-Whitney statistic, ties counting half.
pub fn auc_roc(scores: &[f64], truth: &[u8]) -> Result<Option<f64>> {
    check_lengths(scores, truth)?;
    let p = truth.iter().filter(|&&t| t == 1).count();
    let n = truth.len() - p;
    if p == 0 || n == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // half-credit pair count: for each block of equal scores, positives beat
    // every negative below the block and tie with the negatives inside it
    let mut twice_wins: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let block_pos = order[i..j].iter().filter(|&&k| truth[k] == 1).count() as u128;
        let block_neg = (j - i) as u128 - block_pos;
        twice_wins += block_pos * (2 * negatives_below + block_neg);
        negatives_below += block_neg;
        i = j;
    }
    Ok(Some(twice_wins as f64 / 2.0 / (p as f64 * n as f64)))
}

/// Average precision: recall increments weighted by precision, with tied
/// scores entering as one block evaluated at its end.
pub fn auc_pr(scores: &[f64], truth: &[u8]) -> Result<Option<f64>> {
    check_lengths(scores, truth)?;
    let p = truth.iter().filter(|&&t| t == 1).count();
    if p == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let block_tp = order[i..j].iter().filter(|&&k| truth[k] == 1).count();
        tp += block_tp;
        seen += j - i;
        if block_tp > 0 {
            ap += (block_tp as f64 / p as f64) * (tp as f64 / seen as f64);
        }
        i = j;
    }
    Ok(Some(ap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub grid: Vec<f64>,
    pub objective: PointMetric,
}

/// Threshold used when the objective cannot be evaluated on training data.
pub const FALLBACK_THRESHOLD: f64 = 0.5;

impl ThresholdPolicy {
    /// The grid `{0, 0.05, …, 1}`.
    pub fn new(objective: PointMetric) -> Self {
        Self {
            grid: (0..=20).map(|k| k as f64 / 20.0).collect(),
            objective,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    /// Training objective at `threshold`; `None` when the fallback was used.
    pub objective_value: Option<f64>,
}

impl ThresholdChoice {
    pub fn is_fallback(&self) -> bool {
        self.objective_value.is_none()
    }
}

/// Smallest grid threshold maximising the objective on the given scores.
pub fn select_threshold(scores: &[f64], truth: &[u8], policy: &ThresholdPolicy) -> ThresholdChoice {
    let mut best: Option<(f64, f64)> = None;
    for &t in &policy.grid {
        let conf = BinaryConfusion::at_threshold(scores, truth, t);
        if let Some(v) = point_metric(&conf, policy.objective) {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((t, v));
            }
        }
    }
    match best {
        Some((threshold, v)) => ThresholdChoice {
            threshold,
            objective_value: Some(v),
        },
        None => ThresholdChoice {
            threshold: FALLBACK_THRESHOLD,
            objective_value: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroValue {
    pub mean: f64,
    /// Labels left out because the metric was undefined.
    pub excluded: usize,
}

pub fn macro_average(values: &[Option<f64>]) -> Result<MacroValue> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::AllUndefined);
    }
    Ok(MacroValue {
        mean: defined.iter().sum::<f64>() / defined.len() as f64,
        excluded: values.len() - defined.len(),
    })
}

/// Metrics of one label on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: usize,
    pub f_measure: Option<f64>,
    pub g_mean: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub auc_roc: Option<f64>,
    pub auc_pr: Option<f64>,
    pub threshold_f: f64,
    pub threshold_g: f64,
    pub threshold_b: f64,
    /// No usable training signal for at least one threshold.
    pub threshold_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    FMeasure,
    GMean,
    BalancedAccuracy,
    AucRoc,
    AucPr,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::FMeasure,
        MetricKind::GMean,
        MetricKind::BalancedAccuracy,
        MetricKind::AucRoc,
        MetricKind::AucPr,
    ];

    pub fn key(self) -> &'static str {
        match self {
            MetricKind::FMeasure => "f_measure",
            MetricKind::GMean => "g_mean",
            MetricKind::BalancedAccuracy => "balanced_accuracy",
            MetricKind::AucRoc => "auc_roc",
            MetricKind::AucPr => "auc_pr",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.key() == key)
    }
}

impl LabelMetrics {
    pub fn get(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::FMeasure => self.f_measure,
            MetricKind::GMean => self.g_mean,
            MetricKind::BalancedAccuracy => self.balanced_accuracy,
            MetricKind::AucRoc => self.auc_roc,
            MetricKind::AucPr => self.auc_pr,
        }
    }

    pub fn threshold(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::FMeasure => Some(self.threshold_f),
            MetricKind::GMean => Some(self.threshold_g),
            MetricKind::BalancedAccuracy => Some(self.threshold_b),
            _ => None,
        }
    }
}

/// Macro averages; `None` when every label was undefined for that metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSummary {
    pub f_measure: Option<MacroValue>,
    pub g_mean: Option<MacroValue>,
    pub balanced_accuracy: Option<MacroValue>,
    pub auc_roc: Option<MacroValue>,
    pub auc_pr: Option<MacroValue>,
}

impl MacroSummary {
    pub fn get(&self, kind: MetricKind) -> Option<MacroValue> {
        match kind {
            MetricKind::FMeasure => self.f_measure,
            MetricKind::GMean => self.g_mean,
            MetricKind::BalancedAccuracy => self.balanced_accuracy,
            MetricKind::AucRoc => self.auc_roc,
            MetricKind::AucPr => self.auc_pr,
        }
    }

    pub fn from_fn(mut f: impl FnMut(MetricKind) -> Option<MacroValue>) -> Self {
        Self {
            f_measure: f(MetricKind::FMeasure),
            g_mean: f(MetricKind::GMean),
            balanced_accuracy: f(MetricKind::BalancedAccuracy),
            auc_roc: f(MetricKind::AucRoc),
            auc_pr: f(MetricKind::AucPr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_label: Vec<LabelMetrics>,
    pub macro_avg: MacroSummary,
    /// Labels excluded from training as single-class.
    pub skipped_labels: usize,
}

/// Evaluates one label: thresholds chosen on training relevance, metrics on test.
pub fn evaluate_label(
    label: usize,
    train_scores: &[f64],
    train_truth: &[u8],
    test_scores: &[f64],
    test_truth: &[u8],
) -> Result<LabelMetrics> {
    check_lengths(train_scores, train_truth)?;
    check_lengths(test_scores, test_truth)?;
    let mut fallback = false;
    let mut point = |kind: PointMetric| {
        let choice = select_threshold(train_scores, train_truth, &ThresholdPolicy::new(kind));
        fallback |= choice.is_fallback();
        let conf = BinaryConfusion::at_threshold(test_scores, test_truth, choice.threshold);
        (point_metric(&conf, kind), choice.threshold)
    };
    let (f_measure, threshold_f) = point(PointMetric::FMeasure);
    let (g_mean, threshold_g) = point(PointMetric::GMean);
    let (balanced_accuracy, threshold_b) = point(PointMetric::BalancedAccuracy);
    Ok(LabelMetrics {
        label,
        f_measure,
        g_mean,
        balanced_accuracy,
        auc_roc: auc_roc(test_scores, test_truth)?,
        auc_pr: auc_pr(test_scores, test_truth)?,
        threshold_f,
        threshold_g,
        threshold_b,
        threshold_fallback: fallback,
    })
}

impl MetricReport {
    pub fn from_labels(per_label: Vec<LabelMetrics>, skipped_labels: usize) -> Self {
        let macro_avg = MacroSummary::from_fn(|kind| {
            let values: Vec<Option<f64>> = per_label.iter().map(|l| l.get(kind)).collect();
            macro_average(&values).ok()
        });
        Self {
            per_label,
            macro_avg,
            skipped_labels,
        }
    }
}

/// Mean rank of each method (rows) across datasets (columns); rank 1 is best
/// and ties share the mean of their positions.
pub fn average_ranks(results: &[Vec<f64>], higher_is_better: bool) -> Result<Vec<f64>> {
    let methods = results.len();
    if methods == 0 {
        return Ok(Vec::new());
    }
    let datasets = results[0].len();
    if results.iter().any(|r| r.len() != datasets) {
        return Err(Error::Data(
            "every method needs a value for every dataset".into(),
        ));
    }
    if results.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::Data("rank table holds a missing value".into()));
    }
    if datasets == 0 {
        return Err(Error::Data("rank table has no datasets".into()));
    }
    let mut totals = vec![0.0; methods];
    for col in 0..datasets {
        let mut order: Vec<usize> = (0..methods).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (results[a][col], results[b][col]);
            if higher_is_better {
                y.total_cmp(&x)
            } else {
                x.total_cmp(&y)
            }
        });
        let mut i = 0;
        while i < methods {
            let mut j = i;
            while j < methods && results[order[j]][col] == results[order[i]][col] {
                j += 1;
            }
            // positions i+1 ..= j share their mean
            let rank = (i + 1 + j) as f64 / 2.0;
            for &m in &order[i..j] {
                totals[m] += rank;
            }
            i = j;
        }
    }
    Ok(totals.into_iter().map(|t| t / datasets as f64).collect())
}

/// ImR interval bounds: `[1,5) [5,10) [10,15) [15,25) [25,50) [50,100) [100,∞)`.
pub const IMR_BUCKETS: [(f64, f64); 7] = [
    (1.0, 5.0),
    (5.0, 10.0),
    (10.0, 15.0),
    (15.0, 25.0),
    (25.0, 50.0),
    (50.0, 100.0),
    (100.0, f64::INFINITY),
];

pub fn imr_bucket(imr: f64) -> usize {
    IMR_BUCKETS
        .iter()
        .position(|&(lo, hi)| imr >= lo && imr < hi)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImrBucket {
    pub lower: f64,
    /// `None` for the open-ended last interval.
    pub upper: Option<f64>,
    pub labels: usize,
    pub label_percent: f64,
    pub mean_metric: Option<f64>,
}

/// Groups `(imr, metric)` pairs by ImR interval; undefined metrics count
/// toward the label share but not the mean.
pub fn imr_bucket_report(per_label: &[(f64, Option<f64>)]) -> Vec<ImrBucket> {
    let total = per_label.len();
    IMR_BUCKETS
        .iter()
        .enumerate()
        .map(|(b, &(lower, upper))| {
            let members: Vec<Option<f64>> = per_label
                .iter()
                .filter(|(imr, _)| imr_bucket(*imr) == b)
                .map(|&(_, v)| v)
                .collect();
            ImrBucket {
                lower,
                upper: upper.is_finite().then_some(upper),
                labels: members.len(),
                label_percent: if total == 0 {
                    0.0
                } else {
                    100.0 * members.len() as f64 / total as f64
                },
                mean_metric: macro_average(&members).ok().map(|m| m.mean),
            }
        })
        .collect()
}
