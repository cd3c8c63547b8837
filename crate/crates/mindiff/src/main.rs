use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mindiff::bench::{run_scaling_bench, write_bench_csv, BenchConfig};
use mindiff::config::{DataConfig, ExperimentConfig};
use mindiff::csv_io::write_records;
use mindiff::verify::run_verify;
use mindiff::{emit_report, run_sweep, Error, SweepConfig, WallClock};

const EXIT_CONFIG: u8 = 1;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "mindiff", version, about = "Equal-opportunity remediation experiments for compositional classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Lambda sweep over strategies; writes runs.csv, aggregate.csv and pareto.txt.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads for independent runs (0 = all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Side-batch scaling and throughput benchmark; writes bench.csv.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Equal-opportunity table sweep and metric reference checks.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tables: Option<usize>,
        #[arg(long)]
        t_max: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Writes the configured synthetic dataset as CSV.
    Synth {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn sweep(common: &Common, threads: Option<usize>) -> Result<(), Error> {
    let (mut cfg, out) = load(common)?;
    if let Some(t) = threads {
        cfg.sweep.threads = t;
    }
    let sc = SweepConfig::from_experiment(&cfg)?;
    let (ds, skipped) = cfg.dataset()?;
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} unparsable rows");
    }
    eprintln!(
        "sweep: {} examples, {} strategies x {} lambdas x {} runs",
        ds.len(),
        sc.strategies.len(),
        sc.lambdas.len(),
        sc.runs_per_point
    );
    let report = run_sweep(&ds, &sc)?;
    for r in report.rows.iter().filter(|r| r.outcome.is_err()) {
        eprintln!("run failed: {} lambda={} run={}: {}", r.strategy, r.lambda, r.run, r.outcome.as_ref().unwrap_err());
    }
    for p in emit_report(&report, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn bench(common: &Common) -> Result<(), Error> {
    let (cfg, out) = load(common)?;
    let bc = BenchConfig::from_experiment(&cfg)?;
    let rows = run_scaling_bench(&bc, &WallClock::new())?;
    println!("tasks\tgroups\tstrategy\tside_examples\tmedian_steps_per_sec");
    for r in &rows {
        println!("{}\t{}\t{}\t{}\t{:.1}", r.tasks, r.groups, r.strategy, r.side_examples, r.median_steps_per_sec);
    }
    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
    let path = out.join("bench.csv");
    write_bench_csv(&path, &rows)?;
    println!("{}", path.display());
    Ok(())
}

fn verify(common: &Common, tables: Option<usize>, t_max: Option<usize>, eps: Option<f64>) -> Result<bool, Error> {
    let (cfg, _) = load(common)?;
    let v = &cfg.verify;
    let report = run_verify(tables.unwrap_or(v.tables), t_max.unwrap_or(v.t_max), eps.unwrap_or(v.eps), cfg.seed)?;
    print!("{report}");
    Ok(report.passed())
}

fn synth(common: &Common) -> Result<(), Error> {
    let (cfg, out) = load(common)?;
    let Some(DataConfig::Synthetic(s)) = &cfg.data else {
        return Err(Error::Config("synth needs a [data] section with source = \"synthetic\"".into()));
    };
    let sc = s.to_synth_config(cfg.train.dim)?;
    let records = mindiff::core::synthesize_records(&sc, cfg.seed)?;
    let path = if out.extension().is_some() { out } else { out.join("synthetic.csv") };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    write_records(Path::new(&path), &records, &sc.task_names(), &sc.group_names())?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Sweep { common, threads } => sweep(common, *threads).map(|_| true),
        Command::Bench { common } => bench(common).map(|_| true),
        Command::Verify { common, tables, t_max, eps } => verify(common, *tables, *t_max, *eps),
        Command::Synth { common } => synth(common).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
