//! Declarative experiment configuration (TOML).

use std::path::{Path, PathBuf};

use mindiff_core::{Dataset, KernelConfig, Strategy, SynthConfig, TrainConfig};
use serde::Deserialize;

use crate::csv_io::{load_csv, CsvSchema};
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDAS: [f64; 6] = [0.0, 0.1, 0.3, 1.0, 3.0, 10.0];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataConfig {
    Csv(CsvSource),
    Synthetic(SynthSection),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub tasks: usize,
    pub groups: usize,
    pub n: usize,
    pub prevalence: f64,
    pub group_label_rate: f64,
    pub mention_rate: f64,
    pub task_rate: f64,
    pub noise: f64,
    /// Leakage per group, applied to every task.
    pub group_bias: Vec<f64>,
    /// Full `[task][group]` leakage matrix; overrides `group_bias`.
    pub bias: Option<Vec<Vec<f64>>>,
    pub label_skew: Vec<f64>,
    pub filler_tokens: usize,
    pub filler_vocab: usize,
    pub task_vocab: usize,
    pub group_vocab: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let u = SynthConfig::uniform(3, 4, 20_000);
        Self {
            tasks: u.tasks,
            groups: u.groups,
            n: u.n,
            prevalence: 0.2,
            group_label_rate: u.group_label_rate,
            mention_rate: u.mention_rate,
            task_rate: 0.1,
            noise: u.noise,
            group_bias: Vec::new(),
            bias: None,
            label_skew: Vec::new(),
            filler_tokens: u.filler_tokens,
            filler_vocab: u.filler_vocab,
            task_vocab: u.task_vocab,
            group_vocab: u.group_vocab,
        }
    }
}

impl SynthSection {
    pub fn to_synth_config(&self, dim: usize) -> Result<SynthConfig> {
        let mut c = SynthConfig::uniform(self.tasks, self.groups, self.n);
        c.dim = dim;
        c.group_prevalence = vec![self.prevalence; self.groups];
        c.group_label_rate = self.group_label_rate;
        c.mention_rate = self.mention_rate;
        c.task_rate = vec![self.task_rate; self.tasks];
        c.noise = self.noise;
        c.filler_tokens = self.filler_tokens;
        c.filler_vocab = self.filler_vocab;
        c.task_vocab = self.task_vocab;
        c.group_vocab = self.group_vocab;
        if let Some(bias) = &self.bias {
            c.bias = bias.clone();
        } else if !self.group_bias.is_empty() {
            if self.group_bias.len() != self.groups {
                return Err(Error::Config(format!("group_bias needs {} entries", self.groups)));
            }
            for (m, &b) in self.group_bias.iter().enumerate() {
                c = c.with_group_bias(m, b);
            }
        }
        if !self.label_skew.is_empty() {
            c.label_skew = self.label_skew.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub dim: usize,
    pub main_batch: usize,
    pub side_batch: usize,
    pub bandwidth: f64,
    pub interleave_rescale: bool,
    pub group_weights: Option<Vec<f64>>,
    pub target_fpr: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            lr: t.lr,
            hidden: t.hidden,
            dim: t.dim,
            main_batch: t.main_batch,
            side_batch: t.side_batch,
            bandwidth: t.kernel.bandwidth,
            interleave_rescale: t.interleave_rescale,
            group_weights: None,
            target_fpr: 0.05,
        }
    }
}

impl TrainSection {
    /// Base training configuration; strategy, lambda and seed are set per run.
    pub fn to_train_config(&self) -> Result<TrainConfig> {
        if !(self.target_fpr > 0.0 && self.target_fpr < 1.0) {
            return Err(Error::Config(format!("target_fpr {} not in (0, 1)", self.target_fpr)));
        }
        Ok(TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            hidden: self.hidden,
            dim: self.dim,
            main_batch: self.main_batch,
            side_batch: self.side_batch,
            kernel: KernelConfig::new(self.bandwidth)?,
            interleave_rescale: self.interleave_rescale,
            group_weights: self.group_weights.clone(),
            ..TrainConfig::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub strategies: Vec<String>,
    pub lambdas: Vec<f64>,
    pub runs_per_point: usize,
    pub split: Vec<f64>,
    /// Worker threads for independent runs; 0 uses every core.
    pub threads: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.iter().map(|s| s.name().to_string()).collect(),
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            runs_per_point: 5,
            split: vec![0.7, 0.1, 0.2],
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub tasks: Vec<usize>,
    pub groups: Vec<usize>,
    pub strategies: Vec<String>,
    pub steps: usize,
    pub repeats: usize,
    pub n: usize,
    pub lambda: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            tasks: vec![2, 3, 4],
            groups: vec![2, 3, 4],
            strategies: Strategy::ALL.iter().map(|s| s.name().to_string()).collect(),
            steps: 300,
            repeats: 5,
            n: 4000,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub tables: usize,
    pub t_max: usize,
    pub eps: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { tables: 1000, t_max: 4, eps: 1e-6 }
    }
}

pub fn parse_strategies(names: &[String]) -> Result<Vec<Strategy>> {
    if names.is_empty() {
        return Err(Error::Config("strategy list is empty".into()));
    }
    names.iter().map(|n| n.parse::<Strategy>().map_err(|_| Error::Config(format!("unknown strategy `{n}`")))).collect()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Builds the configured dataset. Synthetic data is generated from the
    /// base seed; CSV rows skipped during parsing are returned alongside.
    pub fn dataset(&self) -> Result<(Dataset, usize)> {
        match &self.data {
            None => Err(Error::Config("no [data] section".into())),
            Some(DataConfig::Csv(c)) => {
                let load = load_csv(&c.path, &c.schema, self.train.dim)?;
                Ok((load.dataset, load.skipped_rows))
            }
            Some(DataConfig::Synthetic(s)) => {
                Ok((mindiff_core::synthesize(&s.to_synth_config(self.train.dim)?, self.seed)?, 0))
            }
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            data: None,
            train: TrainSection::default(),
            sweep: SweepSection::default(),
            bench: BenchSection::default(),
            verify: VerifySection::default(),
        }
    }
}
