//! Ensemble trainers and vote-normalised prediction.
//!
//! All seven methods produce an [`EnsembleModel`]: a list of chains (length-1
//! chains for the binary-relevance family) plus a per-label count of fitted
//! classifiers. The relevance of label `k` is the fraction of the classifiers
//! targeting `k` that vote positive.
//!
//! ECCRU2 and ECCRU3 redistribute the training budget: label `j` gets
//! `floor(c · Σm / (q · m_j))` classifiers (clamped), and chains are built
//! over the shrinking set of labels that still need classifiers.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{train_cc, train_ccru_lenient, ChainModel, ChainSpec};
use crate::dataset::MultiLabelDataset;
use crate::error::{Error, Result};
use crate::learner::TreeSpec;
use crate::sampling::{bootstrap_indices, shuffled, tag, RngStream};

pub const MODEL_SCHEMA: &str = "chainbalance.model/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Br,
    Brus,
    Ebrus,
    Ecc,
    Eccru,
    Eccru2,
    Eccru3,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Br,
        Method::Brus,
        Method::Ebrus,
        Method::Ecc,
        Method::Eccru,
        Method::Eccru2,
        Method::Eccru3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Br => "BR",
            Method::Brus => "BRUS",
            Method::Ebrus => "EBRUS",
            Method::Ecc => "ECC",
            Method::Eccru => "ECCRU",
            Method::Eccru2 => "ECCRU2",
            Method::Eccru3 => "ECCRU3",
        }
    }

    pub fn is_budgeted(self) -> bool {
        matches!(self, Method::Eccru2 | Method::Eccru3)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == upper)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub method: Method,
    /// Standard number of chains (or bagging rounds).
    pub c: usize,
    pub theta_max: f64,
    /// Lower clamp factor; ECCRU3 only (defaults to 0.5 there).
    pub theta_min: Option<f64>,
    pub tree: TreeSpec,
    pub seed: u64,
}

pub const DEFAULT_THETA_MIN: f64 = 0.5;

impl EnsembleSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            c: 10,
            theta_max: 10.0,
            theta_min: None,
            tree: TreeSpec::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_c(mut self, c: usize) -> Self {
        self.c = c;
        self
    }

    pub fn effective_theta_min(&self) -> Option<f64> {
        (self.method == Method::Eccru3).then(|| self.theta_min.unwrap_or(DEFAULT_THETA_MIN))
    }

    pub fn max_classifiers(&self) -> usize {
        (self.c as f64 * self.theta_max + 1e-9).floor() as usize
    }

    pub fn min_classifiers(&self) -> Option<usize> {
        self.effective_theta_min()
            .map(|t| ((self.c as f64 * t) - 1e-9).ceil() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if self.c == 0 {
            return Err(Error::Config("ensemble.c must be at least 1".into()));
        }
        if self.theta_max.is_nan() || self.theta_max < 1.0 {
            return Err(Error::Config(format!(
                "ensemble.theta_max must be at least 1, got {}",
                self.theta_max
            )));
        }
        if self.theta_min.is_some() && self.method != Method::Eccru3 {
            return Err(Error::Config(format!(
                "ensemble.theta_min only applies to ECCRU3, not {}",
                self.method
            )));
        }
        if let Some(t) = self.effective_theta_min() {
            let c = self.c as f64;
            if !(t * c >= 1.0 - 1e-9 && t <= 1.0 + 1e-9) {
                return Err(Error::Config(format!(
                    "ensemble.theta_min must lie in [1/c, 1], got {t} with c = {}",
                    self.c
                )));
            }
        }
        Ok(())
    }
}

/// Per-label classifier targets for the budgeted methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierBudget {
    pub minority_counts: Vec<usize>,
    /// `floor(c · Σm / (q · m_j))`.
    pub raw: Vec<usize>,
    /// After the method's clamps; never below 1.
    pub clamped: Vec<usize>,
    pub total_minority: usize,
    pub c_max: usize,
    pub c_min: Option<usize>,
}

pub fn compute_classifier_budget(
    minority_counts: &[usize],
    spec: &EnsembleSpec,
) -> Result<ClassifierBudget> {
    if let Some(j) = minority_counts.iter().position(|&m| m == 0) {
        return Err(Error::ZeroMinorityCount(j));
    }
    if minority_counts.is_empty() {
        return Err(Error::NoTrainableLabels);
    }
    let q = minority_counts.len() as u128;
    let total: usize = minority_counts.iter().sum();
    let numerator = spec.c as u128 * total as u128;
    let raw: Vec<usize> = minority_counts
        .iter()
        .map(|&m| (numerator / (q * m as u128)) as usize)
        .collect();
    let c_max = spec.max_classifiers();
    let c_min = spec.min_classifiers();
    let clamped = raw
        .iter()
        .map(|&cj| {
            let lower = c_min.map_or(cj, |lo| cj.max(lo));
            lower.min(c_max).max(1)
        })
        .collect();
    Ok(ClassifierBudget {
        minority_counts: minority_counts.to_vec(),
        raw,
        clamped,
        total_minority: total,
        c_max,
        c_min,
    })
}

/// Label sets of the partial chains: at every step the labels whose counter
/// is still positive form the set and each counter is decremented. Stops
/// after `max_chains` steps or once fewer than two labels remain.
///
/// `labels[i]` is the label whose target is `targets[i]`.
pub fn plan_partial_chains(
    labels: &[usize],
    targets: &[usize],
    max_chains: usize,
) -> Vec<Vec<usize>> {
    let mut counters = targets.to_vec();
    let mut plan = Vec::new();
    for _ in 0..max_chains {
        let mut set = Vec::new();
        for (k, counter) in counters.iter_mut().enumerate() {
            if *counter > 0 {
                set.push(labels[k]);
                *counter -= 1;
            }
        }
        if set.len() < 2 {
            break;
        }
        plan.push(set);
    }
    plan
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLabel {
    pub label: usize,
    /// The only class observed for this label in training.
    pub constant: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub schema: String,
    pub method: Method,
    pub q: usize,
    pub d: usize,
    pub chains: Vec<ChainModel>,
    /// Number of fitted classifiers per label.
    pub vote_counts: Vec<usize>,
    pub skipped: Vec<SkippedLabel>,
    pub budget: Option<ClassifierBudget>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Parallel,
    Sequential,
}

/// Lists the trainable labels and the constant fallbacks for single-class ones.
fn partition_labels(ds: &MultiLabelDataset) -> (Vec<usize>, Vec<usize>, Vec<SkippedLabel>) {
    let mut eligible = Vec::new();
    let mut minority = Vec::new();
    let mut skipped = Vec::new();
    for stats in ds.all_label_stats() {
        if stats.is_degenerate() {
            skipped.push(SkippedLabel {
                label: stats.label_index,
                constant: stats.majority_class(),
            });
        } else {
            eligible.push(stats.label_index);
            minority.push(stats.minority_count);
        }
    }
    (eligible, minority, skipped)
}

fn budget_for(minority: &[usize], spec: &EnsembleSpec) -> Result<ClassifierBudget> {
    compute_classifier_budget(minority, spec)
}

enum Job {
    /// Single label, no resampling.
    Single { label: usize, undersample: bool },
    /// Bootstrap round training one undersampled tree per label.
    BaggedSingles { round: usize },
    /// Bootstrap plus random order over `labels`.
    Chain {
        index: usize,
        labels: Vec<usize>,
        undersample: bool,
    },
}

fn run_job(
    job: &Job,
    ds: &MultiLabelDataset,
    eligible: &[usize],
    spec: &EnsembleSpec,
    root: RngStream,
) -> Result<Vec<ChainModel>> {
    let q = ds.n_labels();
    match job {
        Job::Single { label, undersample } => {
            let chain = ChainSpec::new(vec![*label], q)?;
            let stream = root.derive(&[tag::CHAIN, *label as u64]);
            let model = if *undersample {
                train_ccru_lenient(ds, &chain, &spec.tree, stream)?
            } else {
                train_cc(ds, &chain, &spec.tree)?
            };
            Ok(vec![model])
        }
        Job::BaggedSingles { round } => {
            let stream = root.derive(&[tag::CHAIN, *round as u64]);
            let sample = ds.select_rows(&bootstrap_indices(
                ds.n_rows(),
                stream.child(tag::BOOTSTRAP),
            ));
            eligible
                .iter()
                .map(|&label| {
                    let chain = ChainSpec::new(vec![label], q)?;
                    train_ccru_lenient(&sample, &chain, &spec.tree, stream)
                })
                .collect()
        }
        Job::Chain {
            index,
            labels,
            undersample,
        } => {
            let stream = root.derive(&[tag::CHAIN, *index as u64]);
            let sample = ds.select_rows(&bootstrap_indices(
                ds.n_rows(),
                stream.child(tag::BOOTSTRAP),
            ));
            let order = shuffled(labels, stream.child(tag::PERMUTE));
            let chain = ChainSpec::new(order, q)?;
            let model = if *undersample {
                train_ccru_lenient(&sample, &chain, &spec.tree, stream)?
            } else {
                train_cc(&sample, &chain, &spec.tree)?
            };
            Ok(vec![model])
        }
    }
}

pub fn train_ensemble(ds: &MultiLabelDataset, spec: &EnsembleSpec) -> Result<EnsembleModel> {
    train_ensemble_with(ds, spec, Parallelism::Parallel)
}

/// Trains `spec.method` on `ds`. Chains are independent given their random
/// substreams, so both parallelism settings give identical models.
pub fn train_ensemble_with(
    ds: &MultiLabelDataset,
    spec: &EnsembleSpec,
    parallelism: Parallelism,
) -> Result<EnsembleModel> {
    spec.validate()?;
    let (eligible, minority, skipped) = partition_labels(ds);
    if eligible.is_empty() {
        return Err(Error::NoTrainableLabels);
    }
    let root = RngStream::new(spec.seed);
    let mut budget = None;

    let jobs: Vec<Job> = match spec.method {
        Method::Br | Method::Brus => eligible
            .iter()
            .map(|&label| Job::Single {
                label,
                undersample: spec.method == Method::Brus,
            })
            .collect(),
        Method::Ebrus => (0..spec.c)
            .map(|round| Job::BaggedSingles { round })
            .collect(),
        Method::Ecc | Method::Eccru => (0..spec.c)
            .map(|index| Job::Chain {
                index,
                labels: eligible.clone(),
                undersample: spec.method == Method::Eccru,
            })
            .collect(),
        Method::Eccru2 | Method::Eccru3 => {
            if eligible.len() < 2 {
                return Err(Error::TooFewLabels {
                    method: spec.method.to_string(),
                    found: eligible.len(),
                });
            }
            let b = budget_for(&minority, spec)?;
            let plan = plan_partial_chains(&eligible, &b.clamped, spec.max_classifiers());
            budget = Some(b);
            plan.into_iter()
                .enumerate()
                .map(|(index, labels)| Job::Chain {
                    index,
                    labels,
                    undersample: true,
                })
                .collect()
        }
    };

    let results: Vec<Result<Vec<ChainModel>>> = match parallelism {
        Parallelism::Parallel => jobs
            .par_iter()
            .map(|job| run_job(job, ds, &eligible, spec, root))
            .collect(),
        Parallelism::Sequential => jobs
            .iter()
            .map(|job| run_job(job, ds, &eligible, spec, root))
            .collect(),
    };
    let mut chains = Vec::new();
    for r in results {
        chains.extend(r?);
    }

    let q = ds.n_labels();
    let mut vote_counts = vec![0usize; q];
    for chain in &chains {
        for label in chain.labels() {
            vote_counts[label] += 1;
        }
    }
    Ok(EnsembleModel {
        schema: MODEL_SCHEMA.to_string(),
        method: spec.method,
        q,
        d: ds.n_features(),
        chains,
        vote_counts,
        skipped,
        budget,
    })
}

impl EnsembleModel {
    /// Relevance degree of every label for one instance, each in `[0, 1]`.
    pub fn predict_relevance(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::ArityMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let mut buf = Vec::with_capacity(self.d + self.q);
        let mut out = vec![0.0; self.q];
        self.relevance_into(x, &mut buf, &mut out);
        Ok(out)
    }

    fn relevance_into(&self, x: &[f64], buf: &mut Vec<f64>, out: &mut [f64]) {
        let mut positive = vec![0usize; self.q];
        for chain in &self.chains {
            chain.visit_votes(x, buf, |label, bit| positive[label] += bit as usize);
        }
        for k in 0..self.q {
            out[k] = if self.vote_counts[k] > 0 {
                positive[k] as f64 / self.vote_counts[k] as f64
            } else {
                0.0
            };
        }
        for s in &self.skipped {
            out[s.label] = f64::from(s.constant);
        }
    }

    /// Relevance for every row of `x`, as an `n × q` matrix.
    pub fn predict_matrix(
        &self,
        x: ArrayView2<'_, f64>,
        parallelism: Parallelism,
    ) -> Result<Array2<f64>> {
        if x.ncols() != self.d {
            return Err(Error::ArityMismatch {
                expected: self.d,
                got: x.ncols(),
            });
        }
        let n = x.nrows();
        let mut out = Array2::<f64>::zeros((n, self.q));
        let work = |(row, mut dest): (
            ndarray::ArrayView1<'_, f64>,
            ndarray::ArrayViewMut1<'_, f64>,
        )| {
            let mut buf = Vec::with_capacity(self.d + self.q);
            let xs = row.to_vec();
            let mut scores = vec![0.0; self.q];
            self.relevance_into(&xs, &mut buf, &mut scores);
            dest.assign(&ndarray::ArrayView1::from(&scores));
        };
        match parallelism {
            Parallelism::Parallel => {
                let rows: Vec<_> = x.rows().into_iter().zip(out.rows_mut()).collect();
                rows.into_par_iter().for_each(work);
            }
            Parallelism::Sequential => x.rows().into_iter().zip(out.rows_mut()).for_each(work),
        }
        Ok(out)
    }

    /// Training rows consumed by all classifier fits.
    pub fn fitted_rows(&self) -> usize {
        self.chains.iter().map(ChainModel::fit_rows).sum()
    }

    pub fn classifier_count(&self) -> usize {
        self.vote_counts.iter().sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.schema != MODEL_SCHEMA {
            return Err(Error::Data(format!(
                "unsupported model schema `{}`",
                model.schema
            )));
        }
        Ok(model)
    }
}

pub fn predict_relevance(model: &EnsembleModel, x: &[f64]) -> Result<Vec<f64>> {
    model.predict_relevance(x)
}

/// Training-row accounting derived from label counts alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceBudget {
    pub method: Method,
    /// `None` when the method cannot be built (budgeted methods with < 2 labels).
    pub rows: Option<usize>,
    /// Reference figure for plain ECCRU with the same `c`.
    pub eccru_rows: usize,
    /// Classifiers per label the method builds.
    pub classifiers_per_label: Vec<usize>,
}

pub fn instance_budget(ds: &MultiLabelDataset, spec: &EnsembleSpec) -> Result<InstanceBudget> {
    spec.validate()?;
    let (eligible, minority, _) = partition_labels(ds);
    if eligible.is_empty() {
        return Err(Error::NoTrainableLabels);
    }
    let n = ds.n_rows();
    let q = ds.n_labels();
    let c = spec.c;
    let balanced: usize = minority.iter().map(|m| 2 * m).sum();
    let eccru_rows = c * balanced;
    let mut per_label = vec![0usize; q];
    let uniform = |count: usize, per_label: &mut Vec<usize>| {
        for &j in &eligible {
            per_label[j] = count;
        }
    };
    let rows = match spec.method {
        Method::Br => {
            uniform(1, &mut per_label);
            Some(eligible.len() * n)
        }
        Method::Brus => {
            uniform(1, &mut per_label);
            Some(balanced)
        }
        Method::Ebrus | Method::Eccru => {
            uniform(c, &mut per_label);
            Some(eccru_rows)
        }
        Method::Ecc => {
            uniform(c, &mut per_label);
            Some(c * eligible.len() * n)
        }
        Method::Eccru2 | Method::Eccru3 => {
            if eligible.len() < 2 {
                None
            } else {
                let b = budget_for(&minority, spec)?;
                for set in plan_partial_chains(&eligible, &b.clamped, spec.max_classifiers()) {
                    for j in set {
                        per_label[j] += 1;
                    }
                }
                Some(
                    eligible
                        .iter()
                        .zip(&minority)
                        .map(|(&j, &m)| per_label[j] * 2 * m)
                        .sum(),
                )
            }
        }
    };
    Ok(InstanceBudget {
        method: spec.method,
        rows,
        eccru_rows,
        classifiers_per_label: per_label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(method: Method) -> EnsembleSpec {
        EnsembleSpec::new(method)
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(m.name().to_lowercase().parse::<Method>().unwrap(), m);
        }
        assert!("COCOA".parse::<Method>().is_err());
    }

    #[test]
    fn worked_budget_example() {
        let b = compute_classifier_budget(&[10, 20, 30], &spec(Method::Eccru2)).unwrap();
        assert_eq!(b.raw, vec![20, 10, 6]);
        assert_eq!(b.clamped, vec![20, 10, 6]);
        assert_eq!(b.total_minority, 60);
        assert_eq!(b.c_max, 100);
    }

    #[test]
    fn uniform_minority_gives_c_each() {
        for c in [1, 3, 10] {
            let b =
                compute_classifier_budget(&[7, 7, 7, 7], &spec(Method::Eccru2).with_c(c)).unwrap();
            assert_eq!(b.raw, vec![c; 4]);
        }
    }

    #[test]
    fn eccru3_lower_clamp() {
        let s = EnsembleSpec {
            theta_min: Some(0.5),
            ..spec(Method::Eccru3)
        };
        let b = compute_classifier_budget(&[10, 15, 200], &s).unwrap();
        assert_eq!(b.raw, vec![75, 50, 3]);
        assert_eq!(b.clamped, vec![75, 50, 5]);
        assert_eq!(b.c_min, Some(5));
        // ECCRU2 keeps the raw value
        let b2 = compute_classifier_budget(&[10, 15, 200], &spec(Method::Eccru2)).unwrap();
        assert_eq!(b2.clamped, vec![75, 50, 3]);
    }

    #[test]
    fn upper_clamp() {
        let b = compute_classifier_budget(&[1, 1000], &spec(Method::Eccru2)).unwrap();
        assert_eq!(b.raw, vec![5005, 5]);
        assert_eq!(b.clamped, vec![100, 5]);
    }

    #[test]
    fn zero_minority_rejected() {
        assert!(matches!(
            compute_classifier_budget(&[3, 0], &spec(Method::Eccru2)),
            Err(Error::ZeroMinorityCount(1))
        ));
    }

    #[test]
    fn worked_chain_plan() {
        let plan = plan_partial_chains(&[0, 1, 2], &[20, 10, 6], 100);
        assert_eq!(plan.len(), 10);
        assert!(plan[..6].iter().all(|s| s == &vec![0, 1, 2]));
        assert!(plan[6..].iter().all(|s| s == &vec![0, 1]));
    }

    #[test]
    fn plan_respects_chain_cap() {
        let plan = plan_partial_chains(&[4, 9], &[50, 50], 7);
        assert_eq!(plan.len(), 7);
        assert!(plan.iter().all(|s| s == &vec![4, 9]));
    }

    #[test]
    fn spec_validation() {
        assert!(spec(Method::Eccru3).validate().is_ok());
        assert_eq!(spec(Method::Eccru3).min_classifiers(), Some(5));
        let bad = EnsembleSpec {
            theta_min: Some(0.5),
            ..spec(Method::Eccru2)
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = EnsembleSpec {
            theta_min: Some(0.05),
            ..spec(Method::Eccru3)
        };
        assert!(bad.validate().is_err());
        assert!(spec(Method::Ecc).with_c(0).validate().is_err());
        let bad = EnsembleSpec {
            theta_max: 0.5,
            ..spec(Method::Eccru2)
        };
        assert!(bad.validate().is_err());
    }
}
