#![allow(dead_code)]

use chainbalance::dataset::{write_arff, write_label_xml, MultiLabelDataset};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::path::{Path, PathBuf};

/// Imbalanced multi-label data where label `j` has exactly `positives[j]`
/// positive rows: the rows with the highest noisy score
/// `x[j % d] + 0.5 x[(j + 1) % d] + noise`, plus a pull toward label `j − 1`.
pub fn synthetic(n: usize, d: usize, positives: &[usize], seed: u64) -> MultiLabelDataset {
    let q = positives.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = Array2::from_shape_fn((n, d), |_| rng.random::<f64>());
    let mut labels = Array2::<u8>::zeros((n, q));
    for (j, &k) in positives.iter().enumerate() {
        assert!(k <= n);
        let mut scored: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let prev = if j > 0 {
                    0.3 * labels[[i, j - 1]] as f64
                } else {
                    0.0
                };
                let s = features[[i, j % d]]
                    + 0.5 * features[[i, (j + 1) % d]]
                    + prev
                    + 0.2 * rng.random::<f64>();
                (s, i)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &scored[..k] {
            labels[[i, j]] = 1;
        }
    }
    MultiLabelDataset::from_arrays(features, labels).unwrap()
}

/// Random positives in `[1, n/2]` per label.
pub fn random_counts(n: usize, q: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..q).map(|_| rng.random_range(1..=n / 2)).collect()
}

/// Writes `ds` as `<dir>/<name>.arff` plus `<dir>/<name>.xml`.
pub fn write_mulan(ds: &MultiLabelDataset, dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    let arff = dir.join(format!("{name}.arff"));
    let xml = dir.join(format!("{name}.xml"));
    write_arff(ds, File::create(&arff).unwrap()).unwrap();
    write_label_xml(ds, File::create(&xml).unwrap()).unwrap();
    (arff, xml)
}
