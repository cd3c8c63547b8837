use std::path::Path;

use mindiff::config::{DataConfig, ExperimentConfig, DEFAULT_LAMBDAS};
use mindiff::core::Strategy;
use mindiff::SweepConfig;

fn shipped(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn shipped_configs_parse() {
    let syn = shipped("synthetic.toml");
    let Some(DataConfig::Synthetic(s)) = &syn.data else { panic!("synthetic source expected") };
    let sc = s.to_synth_config(syn.train.dim).unwrap();
    assert_eq!(sc.bias[2], [0.2, 0.2, 0.0, 0.0]);
    assert_eq!(sc.label_skew, [3.0, 3.0, 1.0, 1.0]);
    let sweep = SweepConfig::from_experiment(&syn).unwrap();
    assert_eq!(sweep.strategies, Strategy::ALL);
    assert_eq!(sweep.lambdas, DEFAULT_LAMBDAS);

    let civil = shipped("civil_comments.toml");
    let Some(DataConfig::Csv(c)) = &civil.data else { panic!("csv source expected") };
    assert_eq!(c.schema.label_columns, ["identity_attack", "insult", "toxicity"]);
    assert_eq!(c.schema.group_columns.len(), 4);
}

#[test]
fn defaults_fill_missing_sections() {
    let cfg = ExperimentConfig::from_toml("seed = 4\n").unwrap();
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.sweep.runs_per_point, 5);
    assert_eq!(cfg.sweep.split, [0.7, 0.1, 0.2]);
    let tc = cfg.train.to_train_config().unwrap();
    assert_eq!((tc.epochs, tc.hidden, tc.dim, tc.side_batch, tc.main_batch), (25, 64, 1000, 16, 128));
    assert_eq!(tc.kernel.bandwidth, 1.0);
}

#[test]
fn invalid_values_are_config_errors() {
    for text in [
        "[sweep]\nstrategies = [\"bogus\"]\n",
        "[sweep]\nlambdas = [-1.0]\n",
        "[sweep]\nsplit = [0.5, 0.5]\n",
        "[train]\nbandwidth = 0.0\n",
        "[train]\ntarget_fpr = 1.5\n",
    ] {
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let err = SweepConfig::from_experiment(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 1, "{text}: {err}");
    }
    let cfg = ExperimentConfig::from_toml("[data]\nsource = \"synthetic\"\ngroups = 2\ngroup_bias = [0.1]\n").unwrap();
    assert_eq!(cfg.dataset().unwrap_err().exit_code(), 1);
    let cfg = ExperimentConfig::from_toml("[data]\nsource = \"synthetic\"\nprevalence = 1.0\n").unwrap();
    assert_eq!(cfg.dataset().unwrap_err().exit_code(), 1);
    assert!(ExperimentConfig::from_toml("[data]\nsource = \"parquet\"\n").is_err());
}
