//! Classifier chains.
//!
//! Link `j` of a chain sees the `d` original features followed by one column
//! per earlier link. Plain chains fill those columns with the true label
//! values; undersampled chains fill them with the earlier links' predictions
//! on every row of the training set, including majority rows that were left
//! out of the earlier link's fitting set.

use ndarray::{s, Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::dataset::MultiLabelDataset;
use crate::error::{Error, Result};
use crate::learner::{BinaryClassifier, DecisionTree, TreeSpec};
use crate::sampling::{tag, undersample_indices, RngStream};

/// Order in which labels are chained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec(Vec<usize>);

impl ChainSpec {
    pub fn new(order: Vec<usize>, q: usize) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::Config("a chain needs at least one label".into()));
        }
        let mut seen = vec![false; q];
        for &j in &order {
            if j >= q {
                return Err(Error::Config(format!("label {j} out of range for q = {q}")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Config(format!("label {j} repeated in chain")));
            }
        }
        Ok(Self(order))
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub label: usize,
    pub model: DecisionTree,
    /// Class counts of the rows this link was fitted on.
    pub fit_negatives: usize,
    pub fit_positives: usize,
}

impl ChainLink {
    pub fn fit_rows(&self) -> usize {
        self.fit_negatives + self.fit_positives
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    pub links: Vec<ChainLink>,
    pub base_arity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Protocol {
    /// All rows, true labels as augmented features.
    Plain,
    /// Undersampled fitting sets, predictions as augmented features.
    Undersampled {
        /// Fit a single-class label on all rows instead of failing.
        lenient: bool,
    },
}

fn build(
    ds: &MultiLabelDataset,
    chain: &ChainSpec,
    spec: &TreeSpec,
    stream: RngStream,
    protocol: Protocol,
) -> Result<ChainModel> {
    let n = ds.n_rows();
    let d = ds.n_features();
    let len = chain.len();
    // column-major: trees scan one feature across many rows
    let mut work = Array2::<f64>::zeros((n, d + len - 1).f());
    work.slice_mut(s![.., ..d]).assign(&ds.features);

    let all_rows: Vec<usize> = (0..n).collect();
    let mut links = Vec::with_capacity(len);
    for (j, &label) in chain.labels().iter().enumerate() {
        let targets = ds.label_column(label).to_vec();
        let rows = match protocol {
            Protocol::Plain => all_rows.clone(),
            Protocol::Undersampled { lenient } => {
                match undersample_indices(
                    &targets,
                    stream.derive(&[tag::UNDERSAMPLE, label as u64]),
                ) {
                    Ok(rows) => rows,
                    Err(Error::SingleClassInput { .. }) if lenient => all_rows.clone(),
                    Err(Error::SingleClassInput { .. }) => {
                        return Err(Error::SingleClassLabel(label))
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let view = work.slice(s![.., ..d + j]);
        let model = DecisionTree::fit_rows(view, &targets, &rows, spec);
        debug_assert_eq!(model.arity(), d + j);
        let fit_positives = rows.iter().filter(|&&r| targets[r] == 1).count();
        let fit_negatives = rows.len() - fit_positives;

        if j + 1 < len {
            let column: Vec<f64> = match protocol {
                Protocol::Plain => targets.iter().map(|&t| f64::from(t)).collect(),
                Protocol::Undersampled { .. } => (0..n)
                    .map(|r| f64::from(model.predict_by(|f| view[[r, f]])))
                    .collect(),
            };
            work.column_mut(d + j)
                .assign(&ndarray::Array1::from(column));
        }
        links.push(ChainLink {
            label,
            model,
            fit_negatives,
            fit_positives,
        });
    }
    Ok(ChainModel {
        links,
        base_arity: d,
    })
}

/// Classic classifier chain: every link fitted on all rows with the true
/// values of earlier labels appended.
pub fn train_cc(ds: &MultiLabelDataset, chain: &ChainSpec, spec: &TreeSpec) -> Result<ChainModel> {
    build(ds, chain, spec, RngStream::new(0), Protocol::Plain)
}

/// Chain whose links are fitted on randomly undersampled, exactly balanced
/// sets, with earlier links' predictions on all rows as augmented features.
///
/// Fails with [`Error::SingleClassLabel`] if a chained label has one class.
pub fn train_ccru(
    ds: &MultiLabelDataset,
    chain: &ChainSpec,
    spec: &TreeSpec,
    stream: RngStream,
) -> Result<ChainModel> {
    build(
        ds,
        chain,
        spec,
        stream,
        Protocol::Undersampled { lenient: false },
    )
}

/// As [`train_ccru`], but a label with a single class in `ds` gets a link
/// fitted on all rows (a constant tree) instead of an error. Used on
/// bootstrap replicates, which can miss every minority row of a rare label.
pub(crate) fn train_ccru_lenient(
    ds: &MultiLabelDataset,
    chain: &ChainSpec,
    spec: &TreeSpec,
    stream: RngStream,
) -> Result<ChainModel> {
    build(
        ds,
        chain,
        spec,
        stream,
        Protocol::Undersampled { lenient: true },
    )
}

impl ChainModel {
    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.links.iter().map(|l| l.label)
    }

    /// Walks the chain, calling `vote(label, bit)` per link. `buf` is scratch
    /// space; `x` must have `base_arity` values.
    pub fn visit_votes(&self, x: &[f64], buf: &mut Vec<f64>, mut vote: impl FnMut(usize, u8)) {
        buf.clear();
        buf.extend_from_slice(x);
        for link in &self.links {
            let bit = link.model.predict_unchecked(buf);
            vote(link.label, bit);
            buf.push(f64::from(bit));
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<(usize, u8)>> {
        if x.len() != self.base_arity {
            return Err(Error::ArityMismatch {
                expected: self.base_arity,
                got: x.len(),
            });
        }
        let mut out = Vec::with_capacity(self.links.len());
        self.visit_votes(
            x,
            &mut Vec::with_capacity(x.len() + self.links.len()),
            |l, b| out.push((l, b)),
        );
        Ok(out)
    }

    /// Rows consumed by all link fits.
    pub fn fit_rows(&self) -> usize {
        self.links.iter().map(ChainLink::fit_rows).sum()
    }
}

pub fn predict_chain(model: &ChainModel, x: &[f64]) -> Result<Vec<(usize, u8)>> {
    model.predict(x)
}
