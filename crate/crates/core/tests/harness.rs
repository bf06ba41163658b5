//! End-to-end runs through the experiment harness on a tiny benchmark.

use std::path::Path;

use efcil_core::data::{Protocol, SyntheticSpec};
use efcil_core::harness::{
    compare, report, run_experiment, run_experiment_in_memory, sweep, DatasetSource, ExperimentConfig, RunRecord,
    SweepGrid,
};
use efcil_core::strategy::{ReferenceCache, Strategy, TrainConfig};
use efcil_core::Error;

fn config(strategy: Strategy, seeds: Vec<u64>, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::Synthetic {
            spec: SyntheticSpec {
                samples_per_class: 10,
                ..SyntheticSpec::default()
            },
        },
        protocol: Protocol::new(4, 2),
        strategy,
        train: TrainConfig {
            epochs_initial: 3,
            epochs_incremental: 2,
            hidden_dims: vec![8],
            feature_dim: 4,
            ..TrainConfig::default()
        },
        seeds,
        out: out.to_path_buf(),
        workers: 2,
    }
}

#[test]
fn records_are_reproducible_and_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Strategy::Rad, vec![0, 1], dir.path());
    let a = run_experiment_in_memory(&cfg, &ReferenceCache::new()).unwrap();
    let b = run_experiment_in_memory(&cfg, &ReferenceCache::new()).unwrap();
    assert!(a.failures.is_empty());
    assert_eq!(a.records.len(), 2);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.content_hash(), y.content_hash());
        assert_eq!(x.recompute_metrics().unwrap(), x.metrics);
        assert_eq!(x.task_classes.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 2, 2]);
        assert_eq!(x.matrix.rows().iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(!x.metrics.intransigence_by_k.contains_key(&0));
    }
    let (r0, r1) = (&a.records[0], &a.records[1]);
    assert_eq!(r0.config, r1.config);
    assert_ne!(r0.matrix, r1.matrix);
}

#[test]
fn persisted_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Strategy::Finetune, vec![3], dir.path());
    let outcome = run_experiment(&cfg, &ReferenceCache::new()).unwrap();
    let loaded = RunRecord::load(&dir.path().join("finetune_B4-2_s3.json")).unwrap();
    assert_eq!(loaded, outcome.records[0]);
    let curve = std::fs::read_to_string(dir.path().join("finetune_B4-2_s3_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 4);
}

#[test]
fn degenerate_sweep_matches_the_base_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Strategy::Rad, vec![0], dir.path());
    let cache = ReferenceCache::new();
    let base = run_experiment_in_memory(&cfg, &cache).unwrap();
    let swept = sweep(&cfg, &SweepGrid::Alpha(vec![1.0]), &cache, None).unwrap();
    assert_eq!(swept.rows.len(), 1);
    assert_eq!(swept.records[0].matrix, base.records[0].matrix);
    assert_eq!(swept.rows[0].mean, base.records[0].metrics.avg_acc);
}

#[test]
fn alpha_grid_gives_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(Strategy::Rad, vec![0], dir.path());
    let out = sweep(&cfg, &SweepGrid::Alpha(vec![0.5, 1.0, 2.0]), &ReferenceCache::new(), Some(dir.path())).unwrap();
    assert_eq!(out.rows.len(), 3);
    assert!(out.rows.iter().all(|r| r.beta == 1.0 && r.avg_acc.len() == 1));
    assert!(out.spread() >= 0.0);
    assert_eq!(std::fs::read_to_string(dir.path().join("sensitivity.csv")).unwrap().lines().count(), 4);
}

#[test]
fn report_and_compare_over_three_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ReferenceCache::new();
    for s in Strategy::ALL {
        run_experiment(&config(s, vec![0, 1, 2, 3, 4], dir.path()), &cache).unwrap();
    }
    let rep = report(dir.path()).unwrap();
    assert_eq!(rep.strategies.len(), 3);
    for s in &rep.strategies {
        assert_eq!(s.curve.len(), 3);
        assert!(s.avg_acc_std.is_finite() && s.curve.iter().all(|c| c.1.is_finite()));
        assert_eq!(s.seeds.len(), 5);
    }
    let table = compare(&[dir.path().to_path_buf()]).unwrap();
    assert_eq!(table.rows.len(), 3);
    let firsts = table.rows.iter().filter(|r| r.ranks.avg_acc == Some(1)).count();
    let seconds = table.rows.iter().filter(|r| r.ranks.avg_acc == Some(2)).count();
    assert_eq!((firsts, seconds), (1, 1));
}

#[test]
fn single_input_has_no_ranks() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config(Strategy::Featstar, vec![0], dir.path()), &ReferenceCache::new()).unwrap();
    let table = compare(&[dir.path().to_path_buf()]).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].ranks, Default::default());
    assert!(!table.text().contains('*'));
}

#[test]
fn compare_rejects_mixed_datasets() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cache = ReferenceCache::new();
    run_experiment(&config(Strategy::Featstar, vec![0], a.path()), &cache).unwrap();
    let mut other = config(Strategy::Featstar, vec![0], b.path());
    other.dataset = DatasetSource::Synthetic {
        spec: SyntheticSpec {
            samples_per_class: 10,
            seed: 99,
            ..SyntheticSpec::default()
        },
    };
    run_experiment(&other, &cache).unwrap();
    let err = compare(&[a.path().to_path_buf(), b.path().to_path_buf()]).unwrap_err();
    assert!(matches!(err, Error::Comparison(_)), "{err}");
}
