use std::fs;

use mindiff::core::{synthesize, Dataset, Strategy, SynthConfig, TrainConfig};
use mindiff::report::{aggregate_runs_csv, AGGREGATE_FILE, PARETO_FILE, RUNS_FILE};
use mindiff::sweep::aggregate;
use mindiff::{emit_report, run_seed, run_sweep, Error, SweepConfig, SweepReport};

fn small_data() -> Dataset {
    let mut sc = SynthConfig::uniform(2, 2, 1200).with_group_bias(0, 0.3);
    sc.dim = 128;
    synthesize(&sc, 4).unwrap()
}

fn small_sweep(strategies: Vec<Strategy>, lambdas: Vec<f64>, runs: usize) -> SweepConfig {
    SweepConfig {
        train: TrainConfig { epochs: 2, hidden: 8, dim: 128, main_batch: 64, side_batch: 4, ..TrainConfig::default() },
        target_fpr: 0.05,
        strategies,
        lambdas,
        runs_per_point: runs,
        split: vec![0.7, 0.1, 0.2],
        seed: 11,
        threads: 1,
    }
}

fn lines(path: &std::path::Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn empty_report_writes_header_only_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let report = SweepReport::empty(vec!["a".into()], vec!["g".into()]);
    let files = emit_report(&report, dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    assert_eq!(lines(&dir.path().join(RUNS_FILE)), 0);
    assert_eq!(lines(&dir.path().join(AGGREGATE_FILE)), 0);
    let header = fs::read_to_string(dir.path().join(RUNS_FILE)).unwrap();
    assert!(header.starts_with("strategy,lambda,run,seed,status,reason,system_roc_auc"));
    assert!(header.contains("d_eo_g"));
}

#[test]
fn one_strategy_two_lambdas_five_runs() {
    let report = run_sweep(&small_data(), &small_sweep(vec![Strategy::InterleavedOverconditioned], vec![0.0, 1.0], 5)).unwrap();
    assert_eq!(report.rows.len(), 10);
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    assert_eq!(lines(&dir.path().join(RUNS_FILE)), 10);
    assert_eq!(lines(&dir.path().join(AGGREGATE_FILE)), 2);
    let agg = report.aggregates();
    assert!(agg.iter().all(|a| a.n_ok == 5 && a.n_failed == 0));

    // Aggregates recomputed from the per-run file alone agree exactly.
    let (cols, from_csv) = aggregate_runs_csv(&dir.path().join(RUNS_FILE)).unwrap();
    assert_eq!(cols, report.metric_columns());
    assert_eq!(from_csv, agg);

    let pareto = fs::read_to_string(dir.path().join(PARETO_FILE)).unwrap();
    assert!(pareto.contains("# group group0") && pareto.contains("# group group1"));
    assert!(pareto.contains("mindiff-io\t0\t") && pareto.contains("mindiff-io\t1\t"));
}

#[test]
fn none_with_one_lambda_two_runs() {
    let report = run_sweep(&small_data(), &small_sweep(vec![Strategy::None], vec![0.0], 2)).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.aggregates().len(), 1);
}

#[test]
fn t_interval_matches_hand_computation() {
    // values 1..5: mean 3, s = sqrt(2.5), half-width 2.776 * s / sqrt(5) = 1.963
    let cells = (1..=5).map(|v| ("none".to_string(), 0.0, Some(vec![Some(v as f64), None])));
    let agg = aggregate(cells, 2);
    assert_eq!(agg.len(), 1);
    let ci = agg[0].metrics[0].unwrap();
    assert_eq!(ci.mean, 3.0);
    assert!((ci.half_width.unwrap() - 2.776_445_105 * 2.5f64.sqrt() / 5f64.sqrt()).abs() < 1e-8);
    assert!((ci.half_width.unwrap() - 1.963).abs() < 1e-3);
    assert!(agg[0].metrics[1].is_none());
}

#[test]
fn non_timing_columns_are_deterministic() {
    let cfg = small_sweep(vec![Strategy::Baseline, Strategy::Direct], vec![0.0, 3.0], 2);
    let ds = small_data();
    let a = run_sweep(&ds, &cfg).unwrap();
    let b = run_sweep(&ds, &SweepConfig { threads: 0, ..cfg }).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!((x.strategy, x.lambda, x.run, x.seed), (y.strategy, y.lambda, y.run, y.seed));
        let (mx, my) = (x.outcome.as_ref().unwrap(), y.outcome.as_ref().unwrap());
        assert_eq!(mx.eval, my.eval);
        assert_eq!(mx.total_steps, my.total_steps);
    }
}

#[test]
fn run_seeds_are_stable_and_distinct() {
    let s = run_seed(11, Strategy::Baseline, 0.3, 2);
    assert_eq!(s, run_seed(11, Strategy::Baseline, 0.3, 2));
    assert_eq!(run_seed(12, Strategy::Baseline, 0.3, 2), s.wrapping_add(1));
    assert_ne!(s, run_seed(11, Strategy::Baseline, 0.3, 3));
    assert_ne!(s, run_seed(11, Strategy::Overconditioned, 0.3, 2));
    assert_ne!(s, run_seed(11, Strategy::Baseline, 1.0, 2));
}

#[test]
fn failing_runs_are_recorded_with_a_reason() {
    // Group 1 has no members, so remediation streams cannot be built.
    let mut sc = SynthConfig::uniform(2, 2, 600);
    sc.dim = 128;
    sc.group_prevalence = vec![0.3, 1e-9];
    let ds = synthesize(&sc, 1).unwrap();
    let report = run_sweep(&ds, &small_sweep(vec![Strategy::None, Strategy::Overconditioned], vec![1.0], 2)).unwrap();
    assert_eq!(report.rows.len(), 4);
    let failed: Vec<_> = report.rows.iter().filter(|r| r.outcome.is_err()).collect();
    assert_eq!(failed.len(), 2);
    assert!(failed.iter().all(|r| r.strategy == Strategy::Overconditioned));
    assert!(failed[0].outcome.as_ref().unwrap_err().contains("unremediable"));

    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join(RUNS_FILE)).unwrap();
    assert_eq!(text.matches(",failed,").count(), 2);
    let agg = report.aggregates();
    assert_eq!((agg[1].n_ok, agg[1].n_failed), (0, 2));
}

#[test]
fn unwritable_path_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("not_a_dir");
    fs::write(&blocker, "x").unwrap();
    let report = SweepReport::empty(vec!["a".into()], vec!["g".into()]);
    let err = emit_report(&report, &blocker.join("out")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn invalid_sweep_config_is_rejected() {
    let ds = small_data();
    let mut cfg = small_sweep(vec![Strategy::None], vec![0.0], 2);
    cfg.split = vec![0.5, 0.5, 0.5];
    assert_eq!(run_sweep(&ds, &cfg).unwrap_err().exit_code(), 1);
    cfg.split = vec![0.7, 0.1, 0.2];
    cfg.lambdas = vec![-1.0];
    assert!(run_sweep(&ds, &cfg).is_err());
}
