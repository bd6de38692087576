//! Acceptance checks. Each test writes one `PASS`/`FAIL` line to stderr and
//! then asserts the outcome.
//!
//! Checks on the Mulan `flags`, `scene` and `yeast` datasets are ignored by
//! default. Put `<name>.arff` and `<name>.xml` for each in
//! `$CHAINBALANCE_DATA_DIR` (default: `data/` at the workspace root) and run
//! `cargo test --test acceptance -- --ignored`.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use chainbalance::chain::{train_ccru, ChainSpec};
use chainbalance::cli::config::ExperimentConfig;
use chainbalance::cli::experiment::{run_cv_on, CvReport};
use chainbalance::dataset::{load_mulan_files, MultiLabelDataset};
use chainbalance::ensemble::{
    compute_classifier_budget, plan_partial_chains, train_ensemble, EnsembleSpec, Method,
    Parallelism,
};
use chainbalance::learner::TreeSpec;
use chainbalance::metrics::{auc_roc, select_threshold, PointMetric, ThresholdPolicy};
use chainbalance::sampling::RngStream;
use chainbalance::simulate::{exploitation_probability, sweep, ExploitationQuery, SweepParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, title: &str, ok: bool, detail: &str, elapsed: Duration, limit: Duration) {
    let in_time = elapsed <= limit;
    let verdict = if ok && in_time { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "{verdict} criterion {id}: {title} | {detail} | {:.2} s (limit {} s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "criterion {id} failed: {detail}");
    assert!(in_time, "criterion {id} exceeded its time limit");
}

#[test]
fn criterion_1_budget_worked_example() {
    let start = Instant::now();
    let spec = EnsembleSpec::new(Method::Eccru2);
    let budget = compute_classifier_budget(&[10, 20, 30], &spec).unwrap();
    let plan = plan_partial_chains(&[0, 1, 2], &budget.clamped, spec.max_classifiers());
    let plan_sizes: Vec<usize> = plan.iter().map(Vec::len).collect();

    let ds = common::synthetic(200, 5, &[10, 20, 30], 11);
    let model = train_ensemble(&ds, &spec.with_seed(1)).unwrap();
    let built: Vec<usize> = model.chains.iter().map(|c| c.links.len()).collect();
    let full = built.iter().filter(|&&l| l == 3).count();
    let partial = built.iter().filter(|&&l| l == 2).count();

    let ok = budget.clamped == [20, 10, 6]
        && plan_sizes == [3, 3, 3, 3, 3, 3, 2, 2, 2, 2]
        && built == plan_sizes
        && (full, partial) == (6, 4);
    report(
        1,
        "classifier budget and partial-chain plan for minority counts (10,20,30)",
        ok,
        &format!(
            "budgets {:?}, built {full} three-label + {partial} two-label chains",
            budget.clamped
        ),
        start.elapsed(),
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_2_exploitation_sweep() {
    let start = Instant::now();
    let params = SweepParams::default();
    let rows = sweep(&params, RngStream::new(2024)).unwrap();
    let monotone = rows.windows(2).all(|w| w[1].p_closed > w[0].p_closed);
    let worst = rows
        .iter()
        .map(|r| (r.p_mc - r.p_closed).abs())
        .fold(0.0, f64::max);
    // first integer m whose closed form reaches 0.5, majority n − m
    let crossing = (1..=params.n / 2)
        .find(|&m| {
            let q = ExploitationQuery::new(m, params.n - m, params.chains, 1).unwrap();
            exploitation_probability(&q) >= 0.5
        })
        .unwrap();
    let ok = monotone && crossing > 58 && crossing <= 63 && worst <= 0.02 && rows.len() == 20;
    report(
        2,
        "closed form monotone, crosses 0.5 in (58, 63], simulation within 0.02",
        ok,
        &format!("monotone {monotone}, first m with P >= 0.5 is {crossing}, max |MC - closed| {worst:.4}"),
        start.elapsed(),
        Duration::from_secs(10),
    );
}

fn data_dir() -> PathBuf {
    std::env::var_os("CHAINBALANCE_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn load_benchmark(name: &str) -> Result<MultiLabelDataset, String> {
    let dir = data_dir();
    let arff = dir.join(format!("{name}.arff"));
    let xml = dir.join(format!("{name}.xml"));
    load_mulan_files(&arff, &xml)
        .map_err(|e| format!("{name}: cannot load {}: {e}", arff.display()))
}

#[test]
#[ignore = "requires the flags, scene and yeast Mulan datasets in $CHAINBALANCE_DATA_DIR"]
fn criterion_3_benchmark_statistics() {
    let start = Instant::now();
    // n, d, q, label cardinality, mean ImR, max ImR, CV of ImR
    let expected = [
        ("flags", 194, 19, 7, 3.392, 2.753, 6.462, 0.711),
        ("scene", 2407, 144, 6, 1.074, 4.662, 5.613, 0.148),
        ("yeast", 2417, 103, 14, 4.237, 8.954, 70.088, 1.997),
    ];
    let mut problems = Vec::new();
    for (name, n, d, q, lc, mean, max, cv) in expected {
        let ds = match load_benchmark(name) {
            Ok(ds) => ds,
            Err(e) => {
                problems.push(e);
                continue;
            }
        };
        let s = ds.summarize().unwrap();
        let close = |got: f64, want: f64, tol: f64| (got - want).abs() <= tol;
        if (s.n, s.d, s.q) != (n, d, q)
            || !close(s.label_cardinality, lc, 5e-4)
            || !close(s.mean_imr, mean, 5e-4)
            || !close(s.max_imr, max, 5e-4)
            || !close(s.cv_imr, cv, 0.01)
        {
            problems.push(format!(
                "{name}: got n={} d={} q={} lc={:.3} mean={:.3} max={:.3} cv={:.3}",
                s.n, s.d, s.q, s.label_cardinality, s.mean_imr, s.max_imr, s.cv_imr
            ));
        }
    }
    let detail = if problems.is_empty() {
        "all three datasets match".to_string()
    } else {
        problems.join("; ")
    };
    report(
        3,
        "benchmark statistics of flags, scene, yeast",
        problems.is_empty(),
        &detail,
        start.elapsed(),
        Duration::from_secs(5),
    );
}

#[test]
fn criterion_4_balance_and_budget_invariants() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut datasets = 0;
    let mut links = 0usize;
    let mut failures = Vec::new();
    for case in 0..120u64 {
        let n = rng.random_range(20..160);
        let q = rng.random_range(2..7);
        let d = rng.random_range(1..6);
        let counts = common::random_counts(n, q, &mut rng);
        let ds = common::synthetic(n, d, &counts, case);
        datasets += 1;

        let mut order: Vec<usize> = (0..q).collect();
        order.shuffle(&mut rng);
        let chain = ChainSpec::new(order, q).unwrap();
        let model = train_ccru(&ds, &chain, &TreeSpec::default(), RngStream::new(case)).unwrap();
        for link in &model.links {
            links += 1;
            let m = counts[link.label].min(n - counts[link.label]);
            if link.fit_positives != link.fit_negatives || link.fit_positives != m {
                failures.push(format!(
                    "case {case}: link {} fit {}/{}",
                    link.label, link.fit_negatives, link.fit_positives
                ));
            }
        }

        let c = rng.random_range(1..16);
        let theta_max = rng.random_range(1.0..12.0);
        let theta_min = rng.random_range(1.0 / c as f64..=1.0);
        let minority: Vec<usize> = ds
            .all_label_stats()
            .iter()
            .map(|s| s.minority_count)
            .collect();
        let mut spec = EnsembleSpec::new(Method::Eccru3).with_c(c);
        spec.theta_max = theta_max;
        spec.theta_min = Some(theta_min);
        let b3 = compute_classifier_budget(&minority, &spec).unwrap();
        let lo = c as f64 * theta_min;
        let hi = c as f64 * theta_max;
        if b3
            .clamped
            .iter()
            .any(|&cj| (cj as f64) < lo - 1e-9 || (cj as f64) > hi + 1e-9)
        {
            failures.push(format!(
                "case {case}: ECCRU3 budget {:?} outside [{lo}, {hi}]",
                b3.clamped
            ));
        }

        let mut spec2 = EnsembleSpec::new(Method::Eccru2).with_c(c);
        spec2.theta_max = theta_max;
        let b2 = compute_classifier_budget(&minority, &spec2).unwrap();
        let used: usize = b2.raw.iter().zip(&minority).map(|(cj, m)| cj * m).sum();
        if used > c * minority.iter().sum::<usize>() {
            failures.push(format!(
                "case {case}: ECCRU2 raw budget uses {used} minority rows"
            ));
        }

        if case % 4 == 0 {
            let model = train_ensemble(&ds, &spec.with_seed(case)).unwrap();
            for link in model.chains.iter().flat_map(|c| &c.links) {
                links += 1;
                // a bootstrap that lost a class leaves a constant link fitted on one class
                let single_class = link.fit_positives == 0 || link.fit_negatives == 0;
                if link.fit_positives != link.fit_negatives && !single_class {
                    failures.push(format!(
                        "case {case}: ensemble link {} unbalanced",
                        link.label
                    ));
                }
            }
        }
    }
    let detail = format!(
        "{datasets} datasets, {links} links checked, {} violations{}",
        failures.len(),
        failures
            .first()
            .map(|f| format!(" (first: {f})"))
            .unwrap_or_default()
    );
    report(
        4,
        "undersampled links balanced, ECCRU3 budgets clamped, ECCRU2 raw budgets bounded",
        failures.is_empty() && datasets >= 100,
        &detail,
        start.elapsed(),
        Duration::from_secs(30),
    );
}

/// Independent per-threshold objective: F, G-mean or balanced accuracy.
fn oracle_objective(scores: &[f64], truth: &[u8], t: f64, kind: PointMetric) -> Option<f64> {
    let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for (&s, &y) in scores.iter().zip(truth) {
        match (s >= t, y == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, false) => tn += 1.0,
            (false, true) => fn_ += 1.0,
        }
    }
    let (pos, neg) = (tp + fn_, tn + fp);
    match kind {
        PointMetric::FMeasure => (pos > 0.0).then(|| 2.0 * tp / (2.0 * tp + fp + fn_)),
        PointMetric::GMean => (pos > 0.0 && neg > 0.0).then(|| (tp / pos * (tn / neg)).sqrt()),
        PointMetric::BalancedAccuracy => {
            (pos > 0.0 && neg > 0.0).then(|| (tp / pos + tn / neg) / 2.0)
        }
    }
}

#[test]
fn criterion_5_metric_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let random_case = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(1..=12);
        let levels = rng.random_range(2..=21);
        let scores: Vec<f64> = (0..len)
            .map(|_| rng.random_range(0..levels) as f64 / (levels - 1) as f64)
            .collect();
        let truth: Vec<u8> = (0..len).map(|_| rng.random_range(0..=1)).collect();
        (scores, truth)
    };

    let mut auc_mismatch = 0;
    let mut auc_defined = 0;
    for _ in 0..1000 {
        let (scores, truth) = random_case(&mut rng);
        let (mut twice_wins, mut pairs) = (0u64, 0u64);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if truth[i] == 1 && truth[j] == 0 {
                    pairs += 1;
                    twice_wins += if scores[i] > scores[j] {
                        2
                    } else if scores[i] == scores[j] {
                        1
                    } else {
                        0
                    };
                }
            }
        }
        let expected = (pairs > 0).then(|| twice_wins as f64 / (2 * pairs) as f64);
        auc_defined += usize::from(expected.is_some());
        if auc_roc(&scores, &truth).unwrap() != expected {
            auc_mismatch += 1;
        }
    }

    let mut threshold_mismatch = 0;
    for case in 0..1000 {
        let (scores, truth) = random_case(&mut rng);
        let kind = PointMetric::ALL[case % 3];
        let choice = select_threshold(&scores, &truth, &ThresholdPolicy::new(kind));
        let best = (0..=20)
            .map(|k| k as f64 / 20.0)
            .filter_map(|t| oracle_objective(&scores, &truth, t, kind))
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            });
        let agrees = match (choice.objective_value, best) {
            (Some(got), Some(want)) => {
                (got - want).abs() < 1e-12
                    && oracle_objective(&scores, &truth, choice.threshold, kind)
                        .is_some_and(|v| (v - want).abs() < 1e-12)
            }
            (None, None) => choice.threshold == 0.5,
            _ => false,
        };
        threshold_mismatch += usize::from(!agrees);
    }
    report(
        5,
        "AUC-ROC equals pair counting; selected threshold attains the grid optimum",
        auc_mismatch == 0 && threshold_mismatch == 0,
        &format!(
            "AUC mismatches {auc_mismatch}/1000 ({auc_defined} defined), threshold mismatches {threshold_mismatch}/1000"
        ),
        start.elapsed(),
        Duration::from_secs(30),
    );
}

fn directional_config(parallelism: Parallelism) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("unused.arff", "unused.xml");
    cfg.methods = vec![
        Method::Br,
        Method::Ecc,
        Method::Eccru,
        Method::Eccru2,
        Method::Eccru3,
    ];
    cfg.seed = 20;
    cfg.parallelism = parallelism;
    cfg
}

fn overall(report: &CvReport, method: Method) -> &chainbalance::cli::experiment::MethodResult {
    report.methods.iter().find(|m| m.method == method).unwrap()
}

/// `(a)`: every undersampled ensemble beats BR on macro BA and G-mean.
/// `(b)`: on labels with ImR ≥ 15, the best of them beats BR and ECC on BA.
fn directional_checks(report: &CvReport, high_imr: bool) -> (bool, Vec<String>) {
    let mut ok = true;
    let mut notes = Vec::new();
    let br = overall(report, Method::Br).overall;
    for m in [Method::Eccru, Method::Eccru2, Method::Eccru3] {
        let r = overall(report, m).overall;
        let wins = r.balanced_accuracy > br.balanced_accuracy && r.g_mean > br.g_mean;
        ok &= wins;
        if !wins {
            notes.push(format!(
                "{}: {m} BA {:?} G {:?} vs BR BA {:?} G {:?}",
                report.dataset, r.balanced_accuracy, r.g_mean, br.balanced_accuracy, br.g_mean
            ));
        }
    }
    if high_imr {
        let ba_high = |m: Method| {
            let vals: Vec<f64> = overall(report, m)
                .per_label
                .iter()
                .filter(|l| l.imr.is_some_and(|r| r >= 15.0))
                .filter_map(|l| l.metrics.balanced_accuracy)
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let best = [Method::Eccru, Method::Eccru2, Method::Eccru3]
            .into_iter()
            .filter_map(ba_high)
            .fold(f64::NEG_INFINITY, f64::max);
        let (br, ecc) = (ba_high(Method::Br), ba_high(Method::Ecc));
        let wins = br.is_some_and(|b| best > b) && ecc.is_some_and(|e| best > e);
        ok &= wins;
        notes.push(format!(
            "{} ImR>=15 BA: best undersampled {best:.4}, BR {br:.4?}, ECC {ecc:.4?}",
            report.dataset
        ));
    }
    (ok, notes)
}

#[test]
#[ignore = "requires the flags, scene and yeast Mulan datasets in $CHAINBALANCE_DATA_DIR"]
fn criterion_6_directional_comparison_on_benchmarks() {
    let start = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["scene", "flags", "yeast"] {
        match load_benchmark(name) {
            Ok(ds) => {
                let mut cfg = directional_config(Parallelism::Parallel);
                cfg.name = name.into();
                let outcome = run_cv_on(&ds, &cfg).unwrap();
                let (pass, mut n) = directional_checks(&outcome.report, name == "yeast");
                ok &= pass;
                notes.append(&mut n);
            }
            Err(e) => {
                ok = false;
                notes.push(e);
            }
        }
    }
    report(
        6,
        "undersampled ensembles beat BR on BA and G-mean; win on high-ImR yeast labels",
        ok,
        &notes.join("; "),
        start.elapsed(),
        Duration::from_secs(600),
    );
}

/// Same comparison on generated data with a spread of imbalance ratios. Not
/// a substitute for the benchmark check above.
#[test]
fn directional_comparison_on_synthetic_data() {
    let ds = common::synthetic(600, 12, &[6, 12, 20, 30, 45, 70, 110, 160, 240], 6);
    let mut cfg = directional_config(Parallelism::Parallel);
    cfg.name = "synthetic".into();
    cfg.repeats = 2;
    let outcome = run_cv_on(&ds, &cfg).unwrap();
    let (ok, notes) = directional_checks(&outcome.report, true);
    let _ = writeln!(
        std::io::stderr(),
        "{} synthetic directional check | {}",
        if ok { "PASS" } else { "FAIL" },
        notes.join("; ")
    );
    assert!(ok, "{notes:?}");
}

#[test]
fn criterion_7_determinism_across_parallelism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let ds = common::synthetic(300, 10, &[5, 15, 30, 60, 100, 150], 7);
    let (arff, xml) = common::write_mulan(&ds, dir.path(), "synthetic");
    let run = |parallelism: Parallelism, out: &str| {
        let mut cfg = ExperimentConfig::new(&arff, &xml);
        cfg.seed = 77;
        cfg.parallelism = parallelism;
        let outcome = chainbalance::cli::experiment::run_cv(&cfg).unwrap();
        let path = dir.path().join(out);
        outcome.write(&path).unwrap();
        std::fs::read(path.join("metrics.json")).unwrap()
    };
    let parallel_a = run(Parallelism::Parallel, "parallel_a");
    let parallel_b = run(Parallelism::Parallel, "parallel_b");
    let sequential = run(Parallelism::Sequential, "sequential");
    let ok = parallel_a == parallel_b && parallel_a == sequential;
    report(
        7,
        "metrics.json byte-identical across repeated, parallel and sequential runs",
        ok,
        &format!(
            "{} bytes; parallel repeat identical {}, sequential identical {}",
            parallel_a.len(),
            parallel_a == parallel_b,
            parallel_a == sequential
        ),
        start.elapsed(),
        Duration::from_secs(600),
    );
}
