//! Seeded randomness and resampling.
//!
//! Every random decision draws from an [`RngStream`] addressed by a path below
//! the master seed, so a model trained in parallel is bit-identical to the one
//! trained sequentially.

mod stratify;

pub use stratify::iterative_stratified_kfold;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::MultiLabelDataset;
use crate::error::{Error, Result};

/// Component tags used as the first path element of derived streams.
pub mod tag {
    pub const FOLDS: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const CHAIN: u64 = 3;
    pub const BOOTSTRAP: u64 = 4;
    pub const PERMUTE: u64 = 5;
    pub const UNDERSAMPLE: u64 = 6;
    pub const MONTE_CARLO: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Address of an independent random sequence: a master seed plus a path.
///
/// The path is folded into a 64-bit key, so the value is `Copy` and derived
/// streams can be handed to concurrent tasks freely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    master_seed: u64,
    key: u64,
    depth: u32,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            key: splitmix64(master_seed),
            depth: 0,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn child(&self, component: u64) -> Self {
        let depth = self.depth + 1;
        let salt = splitmix64(component ^ (depth as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
        Self {
            master_seed: self.master_seed,
            key: splitmix64(self.key ^ salt),
            depth,
        }
    }

    pub fn derive(&self, path: &[u64]) -> Self {
        path.iter().fold(*self, |s, &p| s.child(p))
    }

    /// A 64-bit value identifying this stream, usable as a seed elsewhere.
    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}

/// `n` row indices drawn uniformly with replacement.
pub fn bootstrap_indices(n: usize, stream: RngStream) -> Vec<usize> {
    let mut rng = stream.rng();
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Resamples `ds` with replacement to the same size.
pub fn bootstrap(ds: &MultiLabelDataset, stream: RngStream) -> MultiLabelDataset {
    ds.select_rows(&bootstrap_indices(ds.n_rows(), stream))
}

/// Uniform random permutation of `items`.
pub fn shuffled<T: Clone>(items: &[T], stream: RngStream) -> Vec<T> {
    use rand::seq::SliceRandom;
    let mut out = items.to_vec();
    out.shuffle(&mut stream.rng());
    out
}

/// Single-label training set for one binary classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    pub features: Array2<f64>,
    pub targets: Vec<u8>,
    positives: usize,
}

impl BinaryDataset {
    pub fn new(features: Array2<f64>, targets: Vec<u8>) -> Result<Self> {
        if features.nrows() != targets.len() {
            return Err(Error::Data(format!(
                "{} feature rows vs {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if targets.iter().any(|&t| t > 1) {
            return Err(Error::Data("targets must be 0 or 1".into()));
        }
        let positives = targets.iter().filter(|&&t| t == 1).count();
        Ok(Self {
            features,
            targets,
            positives,
        })
    }

    /// Features of `ds` with label column `j` as the target.
    pub fn from_label(ds: &MultiLabelDataset, j: usize) -> Self {
        let targets = ds.label_column(j).to_vec();
        let positives = targets.iter().filter(|&&t| t == 1).count();
        Self {
            features: ds.features.clone(),
            targets,
            positives,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn positive_count(&self) -> usize {
        self.positives
    }

    pub fn negative_count(&self) -> usize {
        self.targets.len() - self.positives
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }
}

/// Rows kept by random undersampling: every minority row plus a uniform
/// sample, without replacement, of as many majority rows. Ascending order.
pub fn undersample_indices(targets: &[u8], stream: RngStream) -> Result<Vec<usize>> {
    let positives = targets.iter().filter(|&&t| t == 1).count();
    let negatives = targets.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClassInput {
            positives,
            negatives,
        });
    }
    let minority_class = u8::from(positives <= negatives);
    let m = positives.min(negatives);
    let majority: Vec<usize> = (0..targets.len())
        .filter(|&i| targets[i] != minority_class)
        .collect();
    let mut keep_majority = vec![false; majority.len()];
    for k in index::sample(&mut stream.rng(), majority.len(), m) {
        keep_majority[k] = true;
    }
    let mut out = Vec::with_capacity(2 * m);
    let mut next_majority = 0;
    for (i, &t) in targets.iter().enumerate() {
        if t == minority_class {
            out.push(i);
        } else {
            if keep_majority[next_majority] {
                out.push(i);
            }
            next_majority += 1;
        }
    }
    Ok(out)
}

/// Removes `M − m` majority rows at random, leaving both classes with `m` rows.
pub fn random_undersample(bd: &BinaryDataset, stream: RngStream) -> Result<BinaryDataset> {
    let rows = undersample_indices(&bd.targets, stream)?;
    let targets: Vec<u8> = rows.iter().map(|&i| bd.targets[i]).collect();
    BinaryDataset::new(bd.features.select(Axis(0), &rows), targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;

    fn binary(pos: usize, neg: usize) -> BinaryDataset {
        let n = pos + neg;
        let features = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        // spread positives over the range
        let targets = (0..n)
            .map(|i| u8::from(i * pos % n < pos))
            .collect::<Vec<_>>();
        BinaryDataset::new(features, targets).unwrap()
    }

    #[test]
    fn streams_are_stable_and_distinct() {
        let root = RngStream::new(42);
        assert_eq!(root.derive(&[3, 1]), RngStream::new(42).child(3).child(1));
        assert_ne!(root.derive(&[3, 1]).key(), root.derive(&[1, 3]).key());
        assert_ne!(root.derive(&[3]).key(), root.derive(&[3, 0]).key());
        let a: Vec<u32> = (0..4).map(|_| root.rng().random()).collect();
        let b: Vec<u32> = (0..4).map(|_| root.rng().random()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_of_single_row() {
        let ds =
            MultiLabelDataset::from_arrays(Array2::ones((1, 2)), Array2::ones((1, 1))).unwrap();
        let b = bootstrap(&ds, RngStream::new(1));
        assert_eq!(b.n_rows(), 1);
        assert_eq!(b.features, ds.features);
    }

    #[test]
    fn bootstrap_is_reproducible_and_keeps_pairs() {
        let ds = MultiLabelDataset::from_arrays(
            Array2::from_shape_fn((50, 1), |(i, _)| i as f64),
            Array2::from_shape_fn((50, 1), |(i, _)| (i % 2) as u8),
        )
        .unwrap();
        let s = RngStream::new(9).child(tag::BOOTSTRAP);
        let a = bootstrap(&ds, s);
        let b = bootstrap(&ds, s);
        assert_eq!(a.features, b.features);
        for (x, y) in a.features.column(0).iter().zip(a.labels.column(0)) {
            assert_eq!((*x as usize % 2) as u8, *y);
        }
    }

    #[test]
    fn undersampling_balances_and_keeps_minority() {
        let bd = binary(10, 90);
        assert_eq!((bd.positive_count(), bd.negative_count()), (10, 90));
        let out = random_undersample(&bd, RngStream::new(3)).unwrap();
        assert_eq!((out.positive_count(), out.negative_count()), (10, 10));
        let kept: Vec<f64> = out.features.column(0).to_vec();
        for i in 0..bd.len() {
            if bd.targets[i] == 1 {
                assert!(kept.contains(&(i as f64)));
            }
        }
        // original order preserved
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn balanced_input_unchanged() {
        let bd = binary(50, 50);
        let out = random_undersample(&bd, RngStream::new(3)).unwrap();
        assert_eq!(out, bd);
    }

    #[test]
    fn single_class_input_rejected() {
        let bd = BinaryDataset::new(Array2::zeros((100, 1)), vec![0; 100]).unwrap();
        assert!(matches!(
            random_undersample(&bd, RngStream::new(0)),
            Err(Error::SingleClassInput {
                positives: 0,
                negatives: 100
            })
        ));
    }

    #[test]
    fn negative_minority_is_handled() {
        let targets = [1, 1, 1, 0, 1, 1];
        let rows = undersample_indices(&targets, RngStream::new(5)).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.contains(&3));
    }

    proptest! {
        #[test]
        fn undersampling_is_exactly_balanced(targets in prop::collection::vec(0u8..2, 2..200), seed in any::<u64>()) {
            let pos = targets.iter().filter(|&&t| t == 1).count();
            let neg = targets.len() - pos;
            prop_assume!(pos > 0 && neg > 0);
            let s = RngStream::new(seed);
            let rows = undersample_indices(&targets, s).unwrap();
            let kp = rows.iter().filter(|&&i| targets[i] == 1).count();
            prop_assert_eq!(kp, pos.min(neg));
            prop_assert_eq!(rows.len() - kp, pos.min(neg));
            prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(rows, undersample_indices(&targets, s).unwrap());
        }
    }
}
