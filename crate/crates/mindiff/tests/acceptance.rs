//! Acceptance suite: one PASS/FAIL/SKIP line per criterion, nonzero exit on
//! any failure. Set `CIVIL_COMMENTS_CSV` to the public Civil Comments
//! `train.csv` to include the real-data frontier comparison.

use std::process::ExitCode;
use std::time::Instant;

use mindiff::bench::{bench_dataset, median_throughput};
use mindiff::config::DEFAULT_LAMBDAS;
use mindiff::core::{
    batch_loss, build_streams, expected_regularizer_check_at, lemma1_property_sweep, synthesize, train, Batch, Dataset,
    Example, Membership, MlpParams, SideBatch, SparseFeatures, Strategy, StreamSpec, SynthConfig, TaskScope,
    TrainConfig,
};
use mindiff::csv_io::{load_csv, CsvSchema};
use mindiff::stats::median;
use mindiff::verify::{metric_oracles, mmd_oracle, mmd_singleton};
use mindiff::{run_sweep, SweepConfig, SweepReport, WallClock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Outcome::{Fail, Pass, Skip};

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

type Check = fn() -> Outcome;

fn mmd_equivalence() -> Outcome {
    let pairs = mmd_oracle(100, 17).unwrap();
    let single = mmd_singleton().unwrap();
    verdict(pairs.passed() && single.passed(), format!("{pairs}; {single}"))
}

struct GradInstance {
    ds: Dataset,
    params: MlpParams,
    batch: Batch,
    cfg: TrainConfig,
}

fn gradient_instance(rng: &mut ChaCha8Rng, strategy: Strategy, lambda: f64) -> GradInstance {
    let dim = rng.random_range(2..=8);
    let hidden = rng.random_range(1..=4);
    let tasks = rng.random_range(1..=3);
    let groups = rng.random_range(1..=3);
    let n = 16;
    let mut ds = Dataset::new((0..tasks).map(|t| format!("t{t}")).collect(), (0..groups).map(|g| format!("g{g}")).collect(), dim);
    for _ in 0..n {
        let mut pairs: Vec<(u32, f64)> = Vec::new();
        for j in 0..dim {
            if rng.random_bool(0.6) {
                pairs.push((j as u32, rng.random_range(0.5..3.0)));
            }
        }
        ds.push(Example {
            features: SparseFeatures::from_pairs(dim, pairs),
            labels: (0..tasks).map(|_| rng.random_bool(0.4)).collect(),
            groups: (0..groups).map(|_| Membership::from_flag(rng.random_bool(0.5))).collect(),
        })
        .unwrap();
    }
    let mut params = MlpParams::init(dim, hidden, strategy.num_heads(tasks), rng);
    for h in 0..hidden {
        for j in 0..dim {
            params.set_w1(h, j, rng.random_range(-1.5..1.5));
        }
    }
    for b in params.b1_mut() {
        *b = rng.random_range(-0.3..0.5);
    }
    for b in params.b2_mut() {
        *b = rng.random_range(-0.5..0.5);
    }
    let side = |rng: &mut ChaCha8Rng, task_scope, group| SideBatch {
        task_scope,
        group,
        nonmember: (0..rng.random_range(1..=4)).map(|_| rng.random_range(0..n)).collect(),
        member: (0..rng.random_range(1..=4)).map(|_| rng.random_range(0..n)).collect(),
    };
    let sides = match strategy {
        Strategy::None => Vec::new(),
        Strategy::Baseline => {
            let mut v = Vec::new();
            for t in 0..tasks {
                for m in 0..groups {
                    v.push(side(rng, TaskScope::SingleTask(t), m));
                }
            }
            v
        }
        Strategy::Overconditioned => (0..groups).map(|m| side(rng, TaskScope::AllTasks, m)).collect(),
        Strategy::Direct | Strategy::InterleavedOverconditioned => {
            let m = rng.random_range(0..groups);
            vec![side(rng, TaskScope::AllTasks, m)]
        }
    };
    let main = (0..rng.random_range(1..=6)).map(|_| rng.random_range(0..n)).collect();
    let cfg = TrainConfig { strategy, lambda, dim, hidden, ..TrainConfig::default() };
    GradInstance { ds, params, batch: Batch { main, sides }, cfg }
}

fn max_rel_error(inst: &GradInstance) -> f64 {
    let analytic = batch_loss(&inst.params, &inst.ds, &inst.batch, &inst.cfg).unwrap().grads;
    let loss = |p: &MlpParams| batch_loss(p, &inst.ds, &inst.batch, &inst.cfg).unwrap().loss;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for b in 0..4 {
        for i in 0..inst.params.blocks()[b].len() {
            let mut plus = inst.params.clone();
            plus.blocks_mut()[b][i] += h;
            let mut minus = inst.params.clone();
            minus.blocks_mut()[b][i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let an = analytic.blocks()[b][i];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
        }
    }
    worst
}

fn gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut count, mut worst) = (0, 0.0f64);
    for strategy in Strategy::ALL {
        for lambda in [0.0, 1.0] {
            for _ in 0..6 {
                worst = worst.max(max_rel_error(&gradient_instance(&mut rng, strategy, lambda)));
                count += 1;
            }
        }
    }
    verdict(count >= 50 && worst < 1e-4, format!("{count} instances, max relative error {worst:.2e} (< 1e-4)"))
}

fn table_sweep() -> Outcome {
    let r = lemma1_property_sweep(1000, 4, 1e-6, 2024);
    verdict(
        r.tables == 1000 && r.violations == 0 && r.generator_failures == 0 && r.counterexamples >= 1,
        format!(
            "1000 non-overlapping tables, {} with overall gap > T*eps (worst ratio {:.3}); {} counterexamples among {} overlapping tables, largest gap {:.3}",
            r.violations, r.worst_gap_ratio, r.counterexamples, r.overlap_tables, r.largest_counterexample_gap
        ),
    )
}

fn batch_scaling() -> Outcome {
    let bs = 16;
    let mut mismatches = Vec::new();
    for t in 2..=4 {
        for g in 2..=4 {
            let ds = bench_dataset(t, g, 3000, 64, 5).unwrap();
            for strategy in Strategy::ALL {
                let expected = match strategy {
                    Strategy::None => 0,
                    Strategy::Baseline => 2 * bs * t * g,
                    Strategy::Overconditioned => 2 * bs * g,
                    Strategy::InterleavedOverconditioned | Strategy::Direct => 2 * bs,
                };
                let mut streams = build_streams(&ds, &StreamSpec::new(strategy, 128, bs), 1).unwrap();
                for _ in 0..25 {
                    let b = streams.next_batch();
                    if b.side_examples() != expected || b.main.len() != 128 || b.sides.iter().any(|s| s.member.len() != bs || s.nonmember.len() != bs) {
                        mismatches.push(format!("{strategy} T={t} G={g}: {}", b.side_examples()));
                        break;
                    }
                    b.check_conditioning(&ds).unwrap();
                }
            }
        }
    }
    verdict(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "side examples = 2*b_s*T*G / 2*b_s*G / 2*b_s for all (T, G) in {2,3,4}^2".into()
        } else {
            mismatches.join("; ")
        },
    )
}

fn throughput_ordering() -> Outcome {
    let ds = bench_dataset(3, 4, 20_000, 1000, 3).unwrap();
    let base = TrainConfig { side_batch: 16, seed: 3, ..TrainConfig::default() };
    let order = [Strategy::None, Strategy::Baseline, Strategy::Overconditioned, Strategy::InterleavedOverconditioned];
    let samples = median_throughput(&ds, &base, &order, 1.0, 400, 5, &WallClock::new()).unwrap();
    let m: Vec<f64> = samples.iter().map(|s| median(s).unwrap()).collect();
    let (none, baseline, over, inter) = (m[0], m[1], m[2], m[3]);
    verdict(
        inter > over && over > baseline && inter > 0.7 * none,
        format!(
            "median steps/sec: none {none:.0}, mindiff {baseline:.0}, mindiff-o {over:.0}, mindiff-io {inter:.0} (io/none {:.2}, o/none {:.2})",
            inter / none,
            over / none
        ),
    )
}

/// Three tasks, four groups; groups 0 and 1 get task-token leakage into
/// member negatives and a threefold label association.
fn biased_dataset(seed: u64) -> Dataset {
    let sc = SynthConfig::uniform(3, 4, 20_000)
        .with_group_bias(0, 0.2)
        .with_group_bias(1, 0.2)
        .with_label_skew(0, 3.0)
        .with_label_skew(1, 3.0);
    synthesize(&sc, seed).unwrap()
}

fn column_median(r: &SweepReport, s: Strategy, lambda: f64, col: &str) -> f64 {
    median(&r.column_values(s, lambda, col)).unwrap_or(f64::NAN)
}

fn remediation_efficacy() -> Outcome {
    let ds = biased_dataset(7);
    let top = *DEFAULT_LAMBDAS.last().unwrap();
    let cfg = SweepConfig {
        train: TrainConfig::default(),
        target_fpr: 0.05,
        strategies: vec![Strategy::InterleavedOverconditioned],
        lambdas: vec![0.0, top],
        runs_per_point: 5,
        split: vec![0.7, 0.1, 0.2],
        seed: 7,
        threads: 0,
    };
    let r = run_sweep(&ds, &cfg).unwrap();
    let io = Strategy::InterleavedOverconditioned;
    let mut ok = r.rows.iter().all(|row| row.outcome.is_ok());
    let mut parts = Vec::new();
    for g in ["group0", "group1"] {
        let ratio = column_median(&r, io, 0.0, &format!("r_eo_{g}"));
        let d0 = column_median(&r, io, 0.0, &format!("d_eo_{g}"));
        let d1 = column_median(&r, io, top, &format!("d_eo_{g}"));
        let reduction = 1.0 - d1 / d0;
        ok &= ratio > 1.5 && reduction >= 0.4;
        parts.push(format!("{g}: r_eo {ratio:.2}, d_eo {d0:.3} -> {d1:.3} ({:.0}% lower)", 100.0 * reduction));
    }
    let auc0 = column_median(&r, io, 0.0, "system_roc_auc");
    let auc1 = column_median(&r, io, top, "system_roc_auc");
    ok &= auc0 - auc1 < 0.05;
    parts.push(format!("system AUC {auc0:.4} -> {auc1:.4}"));
    verdict(ok, format!("mindiff-io lambda 0 vs {top}, median of 5 runs; {}", parts.join("; ")))
}

fn expectation_match() -> Outcome {
    let ds = biased_dataset(8);
    let warm = TrainConfig { strategy: Strategy::None, epochs: 1, seed: 8, ..TrainConfig::default() };
    let params = train(&ds, &warm, &WallClock::new()).unwrap().params;
    let cfg = TrainConfig { strategy: Strategy::InterleavedOverconditioned, lambda: 1.0, seed: 8, ..TrainConfig::default() };
    let c = expected_regularizer_check_at(&params, &ds, &cfg, 10_000).unwrap();
    let z = (c.interleaved_mean - c.overconditioned_mean) / c.interleaved_std_err;
    verdict(
        z.abs() < 3.0,
        format!(
            "10000 batches: interleaved {:.6} vs overconditioned {:.6}, {:.2} standard errors",
            c.interleaved_mean, c.overconditioned_mean, z
        ),
    )
}

fn metric_equivalence() -> Outcome {
    let [auc, ap] = metric_oracles(100, 23);
    verdict(auc.passed() && ap.passed(), format!("{auc}; {ap}"))
}

fn civil_comments() -> Outcome {
    let Ok(path) = std::env::var("CIVIL_COMMENTS_CSV") else {
        return Skip("CIVIL_COMMENTS_CSV not set".into());
    };
    let schema = CsvSchema {
        text_column: "comment_text".into(),
        label_columns: ["identity_attack", "insult", "toxicity"].map(String::from).into(),
        group_columns: ["black", "homosexual_gay_or_lesbian", "female", "transgender"].map(String::from).into(),
    };
    let load = match load_csv(path.as_ref(), &schema, 1000) {
        Ok(l) => l,
        Err(e) => return Fail(format!("cannot load {path}: {e}")),
    };
    let cfg = SweepConfig {
        train: TrainConfig::default(),
        target_fpr: 0.05,
        strategies: vec![Strategy::Direct, Strategy::Baseline, Strategy::InterleavedOverconditioned],
        lambdas: DEFAULT_LAMBDAS.to_vec(),
        runs_per_point: 5,
        split: vec![0.7, 0.1, 0.2],
        seed: 1,
        threads: 0,
    };
    let r = run_sweep(&load.dataset, &cfg).unwrap();
    let mean = |s, l, c: &str| {
        let v = r.column_values(s, l, c);
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut details = Vec::new();
    let mut ok = true;
    let mut large = 0;
    for g in load.dataset.group_names() {
        if mean(Strategy::Baseline, 0.0, &format!("r_eo_{g}")) <= 1.5 {
            continue;
        }
        large += 1;
        let d = format!("d_eo_{g}");
        let dominated = DEFAULT_LAMBDAS
            .iter()
            .filter(|&&ld| {
                let (dd, da) = (mean(Strategy::Direct, ld, &d), mean(Strategy::Direct, ld, "system_roc_auc"));
                [Strategy::Baseline, Strategy::InterleavedOverconditioned].iter().any(|&s| {
                    DEFAULT_LAMBDAS.iter().any(|&lc| mean(s, lc, &d) <= dd && mean(s, lc, "system_roc_auc") > da)
                })
            })
            .count();
        ok &= dominated >= 2;
        details.push(format!("{g}: direct dominated at {dominated} lambda points"));
    }
    verdict(ok && large > 0, format!("{} rows, {} skipped; {}", load.dataset.len(), load.skipped_rows, details.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("mmd oracle equivalence", mmd_equivalence),
        ("gradient suite", gradient_suite),
        ("equal-opportunity table sweep", table_sweep),
        ("batch scaling", batch_scaling),
        ("throughput ordering", throughput_ordering),
        ("remediation efficacy", remediation_efficacy),
        ("expectation match", expectation_match),
        ("metric oracles", metric_equivalence),
        ("civil comments frontier", civil_comments),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name} [{secs:.1}s]: {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
