use mindiff::bench::{bench_dataset, write_bench_csv};
use mindiff::core::{Strategy, TrainConfig};
use mindiff::{run_scaling_bench, BenchConfig, WallClock};

fn cfg(tasks: Vec<usize>, groups: Vec<usize>, strategies: Vec<Strategy>, repeats: usize) -> BenchConfig {
    BenchConfig {
        tasks,
        groups,
        strategies,
        steps: 40,
        repeats,
        n: 2000,
        lambda: 1.0,
        train: TrainConfig { dim: 300, hidden: 16, ..TrainConfig::default() },
        seed: 2,
    }
}

#[test]
fn side_sizes_follow_the_scaling_formulas() {
    let c = cfg(vec![2, 4], vec![2, 4], vec![Strategy::Baseline, Strategy::Overconditioned, Strategy::InterleavedOverconditioned, Strategy::None], 1);
    let rows = run_scaling_bench(&c, &WallClock::new()).unwrap();
    assert_eq!(rows.len(), 16);
    for r in &rows {
        let bs = 16;
        let expected = match r.strategy {
            Strategy::Baseline => 2 * bs * r.tasks * r.groups,
            Strategy::Overconditioned => 2 * bs * r.groups,
            Strategy::InterleavedOverconditioned => 2 * bs,
            _ => 0,
        };
        assert_eq!(r.side_examples, expected, "{r:?}");
    }
    let side = |t, g| rows.iter().find(|r| r.strategy == Strategy::Baseline && r.tasks == t && r.groups == g).unwrap().side_examples;
    assert_eq!(side(4, 4), 4 * side(2, 2));
}

#[test]
fn baseline_slows_down_with_more_tasks_and_groups() {
    let c = cfg(vec![2, 4], vec![2, 4], vec![Strategy::Baseline], 3);
    let rows = run_scaling_bench(&c, &WallClock::new()).unwrap();
    let sps = |t, g| rows.iter().find(|r| r.tasks == t && r.groups == g).unwrap().median_steps_per_sec;
    assert!(sps(4, 4) < sps(2, 2), "{} vs {}", sps(4, 4), sps(2, 2));
    assert!(rows.iter().all(|r| r.samples.len() == 3));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bench.csv");
    write_bench_csv(&p, &rows).unwrap();
    assert_eq!(csv::Reader::from_path(&p).unwrap().records().count(), 4);
}

#[test]
fn bench_dataset_has_every_pool() {
    let ds = bench_dataset(4, 4, 2000, 100, 1).unwrap();
    assert_eq!((ds.num_tasks(), ds.num_groups(), ds.len()), (4, 4, 2000));
}
