use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::RngStream;
use crate::dataset::MultiLabelDataset;
use crate::error::{Error, Result};

fn pick_random(tied: &[usize], rng: &mut ChaCha8Rng) -> usize {
    if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.random_range(0..tied.len())]
    }
}

/// Iterative stratification into `k` folds.
///
/// Labels are processed rarest first; each example carrying the current label
/// goes to the fold that still wants the most examples of that label, then the
/// fold with the most remaining room, then a random one. Folds have integer
/// capacities (`n / k`, the first `n % k` folds one more) and a full fold
/// accepts nothing further, so fold sizes differ by at most one.
pub fn iterative_stratified_kfold(
    ds: &MultiLabelDataset,
    k: usize,
    stream: RngStream,
) -> Result<Vec<Vec<usize>>> {
    let n = ds.n_rows();
    let q = ds.n_labels();
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!("{n} rows cannot fill {k} folds")));
    }
    let mut rng = stream.rng();

    let mut capacity: Vec<usize> = (0..k).map(|f| n / k + usize::from(f < n % k)).collect();
    let rows_with: Vec<Vec<usize>> = (0..q)
        .map(|j| (0..n).filter(|&i| ds.labels[[i, j]] == 1).collect())
        .collect();
    let mut remaining: Vec<usize> = rows_with.iter().map(Vec::len).collect();
    let mut desire: Vec<Vec<f64>> = remaining
        .iter()
        .map(|&count| vec![count as f64 / k as f64; k])
        .collect();
    let mut fold_of: Vec<Option<usize>> = vec![None; n];
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut tied = Vec::with_capacity(k);

    loop {
        let Some(fewest) = remaining.iter().copied().filter(|&c| c > 0).min() else {
            break;
        };
        tied.clear();
        tied.extend((0..q).filter(|&j| remaining[j] == fewest));
        let label = pick_random(&tied, &mut rng);

        for &row in &rows_with[label] {
            if fold_of[row].is_some() {
                continue;
            }
            let open = (0..k).filter(|&f| capacity[f] > 0);
            let best_desire = open
                .clone()
                .map(|f| desire[label][f])
                .fold(f64::NEG_INFINITY, f64::max);
            let by_desire: Vec<usize> = open
                .filter(|&f| (desire[label][f] - best_desire).abs() < 1e-9)
                .collect();
            let best_room = by_desire.iter().map(|&f| capacity[f]).max().unwrap_or(0);
            tied.clear();
            tied.extend(by_desire.into_iter().filter(|&f| capacity[f] == best_room));
            let fold = pick_random(&tied, &mut rng);

            fold_of[row] = Some(fold);
            folds[fold].push(row);
            capacity[fold] -= 1;
            for j in 0..q {
                if ds.labels[[row, j]] == 1 {
                    desire[j][fold] -= 1.0;
                    remaining[j] -= 1;
                }
            }
        }
    }

    // rows without any positive label
    for row in 0..n {
        if fold_of[row].is_some() {
            continue;
        }
        let best_room = capacity.iter().copied().max().unwrap_or(0);
        tied.clear();
        tied.extend((0..k).filter(|&f| capacity[f] == best_room));
        let fold = pick_random(&tied, &mut rng);
        fold_of[row] = Some(fold);
        folds[fold].push(row);
        capacity[fold] -= 1;
    }

    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}
