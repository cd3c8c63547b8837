//! File formats, experiment sweeps, throughput benchmarks and report
//! emission on top of [`mindiff_core`].

pub mod bench;
pub mod clock;
pub mod config;
pub mod csv_io;
mod error;
pub mod report;
pub mod stats;
pub mod sweep;
pub mod verify;

pub use mindiff_core as core;

pub use bench::{run_scaling_bench, BenchConfig, BenchRow};
pub use clock::WallClock;
pub use config::ExperimentConfig;
pub use csv_io::{load_csv, CsvLoad, CsvSchema};
pub use error::{Error, Result};
pub use report::emit_report;
pub use sweep::{run_seed, run_sweep, AggregateRow, RunMetrics, RunRow, SweepConfig, SweepReport};
