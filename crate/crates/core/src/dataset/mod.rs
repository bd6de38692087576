//! Multi-label datasets, Mulan-format ingestion and per-label imbalance statistics.
//!
//! A dataset is an `n × d` feature matrix paired with an `n × q` binary label
//! matrix. For every label the rarer value is the minority class; its count `m`
//! and the count `M` of the other value give the imbalance ratio `M / m`.

mod arff;

pub use arff::{load_mulan, load_mulan_files, write_arff, write_label_xml};

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared type of a feature attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    /// Nominal attribute; values are stored as the index into `categories`.
    Nominal(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct MultiLabelDataset {
    pub relation: String,
    pub features: Array2<f64>,
    pub labels: Array2<u8>,
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub label_names: Vec<String>,
}

/// Minority/majority counts of one label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelImbalanceStats {
    pub label_index: usize,
    pub minority_count: usize,
    pub majority_count: usize,
    pub minority_class: u8,
    /// `None` when the label has a single class.
    pub imr: Option<f64>,
}

impl LabelImbalanceStats {
    pub fn is_degenerate(&self) -> bool {
        self.minority_count == 0
    }

    /// The value a constant predictor should emit for a single-class label.
    pub fn majority_class(&self) -> u8 {
        1 - self.minority_class
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub d: usize,
    pub q: usize,
    pub label_cardinality: f64,
    pub mean_imr: f64,
    pub max_imr: f64,
    /// Population standard deviation of the defined ratios over their mean.
    pub cv_imr: f64,
    pub degenerate_labels: usize,
}

impl MultiLabelDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Array2<u8>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if labels.nrows() != n {
            return Err(Error::Data(format!(
                "feature rows ({n}) and label rows ({}) differ",
                labels.nrows()
            )));
        }
        if labels.ncols() == 0 {
            return Err(Error::Data("dataset has no labels".into()));
        }
        if label_names.len() != labels.ncols() {
            return Err(Error::Data(
                "label name count does not match label columns".into(),
            ));
        }
        if feature_names.len() != features.ncols() || feature_kinds.len() != features.ncols() {
            return Err(Error::Data(
                "feature descriptors do not match feature columns".into(),
            ));
        }
        if labels.iter().any(|&v| v > 1) {
            return Err(Error::Data(
                "label matrix holds values outside {0,1}".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &label_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Data(format!("duplicate label name `{name}`")));
            }
        }
        Ok(Self {
            relation: "dataset".to_string(),
            features,
            labels,
            feature_names,
            feature_kinds,
            label_names,
        })
    }

    /// Dataset with numeric features and generated names, mostly for tests.
    pub fn from_arrays(features: Array2<f64>, labels: Array2<u8>) -> Result<Self> {
        let d = features.ncols();
        let q = labels.ncols();
        Self::new(
            features,
            labels,
            (0..d).map(|i| format!("f{i}")).collect(),
            vec![FeatureKind::Numeric; d],
            (0..q).map(|j| format!("L{j}")).collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.ncols()
    }

    pub fn label_column(&self, j: usize) -> ArrayView1<'_, u8> {
        self.labels.column(j)
    }

    /// Rows in the given order; duplicates are allowed.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            relation: self.relation.clone(),
            features: self.features.select(Axis(0), rows),
            labels: self.labels.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            label_names: self.label_names.clone(),
        }
    }

    /// Counts for label `j`; ties make the positive class the minority.
    ///
    /// Panics if `j` is out of range.
    pub fn label_stats(&self, j: usize) -> LabelImbalanceStats {
        let n = self.n_rows();
        let positives = self.labels.column(j).iter().filter(|&&v| v == 1).count();
        let negatives = n - positives;
        let (minority_class, m, big_m) = if positives <= negatives {
            (1, positives, negatives)
        } else {
            (0, negatives, positives)
        };
        LabelImbalanceStats {
            label_index: j,
            minority_count: m,
            majority_count: big_m,
            minority_class,
            imr: (m > 0).then(|| big_m as f64 / m as f64),
        }
    }

    pub fn all_label_stats(&self) -> Vec<LabelImbalanceStats> {
        (0..self.n_labels()).map(|j| self.label_stats(j)).collect()
    }

    pub fn summarize(&self) -> Result<DatasetSummary> {
        let stats = self.all_label_stats();
        let imrs: Vec<f64> = stats.iter().filter_map(|s| s.imr).collect();
        if imrs.is_empty() {
            return Err(Error::AllLabelsDegenerate);
        }
        let n = self.n_rows();
        let label_cardinality =
            self.labels.iter().map(|&v| v as usize).sum::<usize>() as f64 / n as f64;
        let k = imrs.len() as f64;
        let mean_imr = imrs.iter().sum::<f64>() / k;
        let max_imr = imrs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let variance = imrs.iter().map(|v| (v - mean_imr).powi(2)).sum::<f64>() / k;
        Ok(DatasetSummary {
            n,
            d: self.n_features(),
            q: self.n_labels(),
            label_cardinality,
            mean_imr,
            max_imr,
            cv_imr: variance.sqrt() / mean_imr,
            degenerate_labels: stats.len() - imrs.len(),
        })
    }

    /// Number of non-zero entries in each feature column.
    pub fn nonzero_counts(&self) -> Vec<usize> {
        self.features
            .columns()
            .into_iter()
            .map(|col| col.iter().filter(|&&v| v != 0.0).count())
            .collect()
    }

    /// Keeps the `ceil(keep_fraction · d)` most frequently non-zero features.
    ///
    /// Ties go to the lower column index; retained columns keep their order.
    pub fn reduce_features_by_frequency(&self, keep_fraction: f64) -> Result<Self> {
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "feature keep fraction must lie in (0, 1], got {keep_fraction}"
            )));
        }
        let d = self.n_features();
        let keep = ((keep_fraction * d as f64) - 1e-9).ceil().max(1.0) as usize;
        let keep = keep.min(d);
        if d == 0 {
            return Ok(self.clone());
        }
        let counts = self.nonzero_counts();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let mut retained = order[..keep].to_vec();
        retained.sort_unstable();
        Ok(Self {
            relation: self.relation.clone(),
            features: self.features.select(Axis(1), &retained),
            labels: self.labels.clone(),
            feature_names: retained
                .iter()
                .map(|&i| self.feature_names[i].clone())
                .collect(),
            feature_kinds: retained
                .iter()
                .map(|&i| self.feature_kinds[i].clone())
                .collect(),
            label_names: self.label_names.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single_label(ones: usize, n: usize) -> MultiLabelDataset {
        let features = Array2::zeros((n, 1));
        let labels = Array2::from_shape_fn((n, 1), |(i, _)| u8::from(i < ones));
        MultiLabelDataset::from_arrays(features, labels).unwrap()
    }

    #[test]
    fn minority_is_rarer_class() {
        let s = single_label(3, 10).label_stats(0);
        assert_eq!(
            (s.minority_count, s.majority_count, s.minority_class),
            (3, 7, 1)
        );
        assert!((s.imr.unwrap() - 7.0 / 3.0).abs() < 1e-12);

        let s = single_label(8, 10).label_stats(0);
        assert_eq!(
            (s.minority_count, s.majority_count, s.minority_class),
            (2, 8, 0)
        );
    }

    #[test]
    fn tie_makes_positive_the_minority() {
        let s = single_label(5, 10).label_stats(0);
        assert_eq!(
            (s.minority_count, s.majority_count, s.minority_class),
            (5, 5, 1)
        );
        assert_eq!(s.imr, Some(1.0));
    }

    #[test]
    fn single_class_label_has_no_ratio() {
        let s = single_label(0, 10).label_stats(0);
        assert_eq!((s.minority_count, s.majority_count), (0, 10));
        assert_eq!(s.imr, None);
        assert!(s.is_degenerate());
        assert_eq!(s.majority_class(), 0);
    }

    #[test]
    fn label_cardinality_is_mean_row_sum() {
        let ds =
            MultiLabelDataset::from_arrays(Array2::zeros((2, 1)), array![[1, 0], [1, 1]]).unwrap();
        // label 0 is single-class but label 1 is fine
        let s = ds.summarize().unwrap();
        assert!((s.label_cardinality - 1.5).abs() < 1e-12);
        assert_eq!(s.degenerate_labels, 1);
    }

    #[test]
    fn imr_moments_over_defined_labels() {
        // label 0: 5 positives / 10 negatives -> 2; label 1: 3 / 12 -> 4; label 2 single-class
        let n = 15;
        let labels = Array2::from_shape_fn((n, 3), |(i, j)| match j {
            0 => u8::from(i < 5),
            1 => u8::from(i < 3),
            _ => 0,
        });
        let ds = MultiLabelDataset::from_arrays(Array2::zeros((n, 1)), labels).unwrap();
        let s = ds.summarize().unwrap();
        assert!((s.mean_imr - 3.0).abs() < 1e-12);
        assert!((s.max_imr - 4.0).abs() < 1e-12);
        assert!((s.cv_imr - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.degenerate_labels, 1);
    }

    #[test]
    fn all_degenerate_labels_rejected() {
        let err = single_label(0, 4).summarize().unwrap_err();
        assert!(matches!(err, Error::AllLabelsDegenerate));
    }

    fn with_nonzero_counts(counts: &[usize]) -> MultiLabelDataset {
        let n = *counts.iter().max().unwrap().max(&1);
        let features =
            Array2::from_shape_fn(
                (n, counts.len()),
                |(i, j)| if i < counts[j] { 1.0 } else { 0.0 },
            );
        let labels = Array2::from_shape_fn((n, 1), |(i, _)| u8::from(i % 2 == 0));
        MultiLabelDataset::from_arrays(features, labels).unwrap()
    }

    #[test]
    fn reduction_keeps_most_frequent_columns() {
        let ds = with_nonzero_counts(&[5, 1, 3, 3]);
        let reduced = ds.reduce_features_by_frequency(0.5).unwrap();
        assert_eq!(reduced.feature_names, vec!["f0", "f2"]);
        assert_eq!(reduced.labels, ds.labels);
    }

    #[test]
    fn reduction_ties_go_to_lower_index() {
        let ds = with_nonzero_counts(&[2, 2, 2, 2]);
        let reduced = ds.reduce_features_by_frequency(0.25).unwrap();
        assert_eq!(reduced.feature_names, vec!["f0"]);
    }

    #[test]
    fn full_reduction_is_identity() {
        let ds = with_nonzero_counts(&[5, 1, 3, 3]);
        let reduced = ds.reduce_features_by_frequency(1.0).unwrap();
        assert_eq!(reduced.features, ds.features);
        assert_eq!(reduced.feature_names, ds.feature_names);
    }

    #[test]
    fn reduction_rounds_up() {
        let ds = with_nonzero_counts(&[1, 2, 3]);
        // 0.5 * 3 = 1.5 -> 2 columns
        let reduced = ds.reduce_features_by_frequency(0.5).unwrap();
        assert_eq!(reduced.feature_names, vec!["f1", "f2"]);
        assert!(ds.reduce_features_by_frequency(0.0).is_err());
    }

    #[test]
    fn constructor_checks_invariants() {
        assert!(MultiLabelDataset::from_arrays(Array2::zeros((2, 1)), array![[2], [0]]).is_err());
        assert!(
            MultiLabelDataset::from_arrays(Array2::zeros((2, 1)), array![[1], [0], [1]]).is_err()
        );
        assert!(
            MultiLabelDataset::from_arrays(Array2::zeros((0, 1)), Array2::zeros((0, 1))).is_err()
        );
    }
}
