//! Pipeline configuration files (TOML). Parsing is strict: unknown keys
//! are rejected so a mistyped policy flag cannot silently fall back to a
//! default. Referenced dataset files are checked for existence up front.

use crate::analyzer::{ModelGraph, Policy};
use crate::error::{Result, TacError};
use crate::graphs::{self, NamedPolicy};
use crate::train::data::{self, Dataset};
use crate::train::TrainConfig;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Graph name from the shipped zoo.
    pub model: String,
    pub dataset: DatasetConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub policy: PolicySection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// `synthetic`, `mnist`, or `cifar10`.
    pub name: String,
    /// Directory that holds the dataset files (unused for `synthetic`).
    #[serde(default)]
    pub path: PathBuf,
    #[serde(default = "default_train_count")]
    pub train_count: usize,
    #[serde(default = "default_test_count")]
    pub test_count: usize,
}

fn default_train_count() -> usize {
    2000
}

fn default_test_count() -> usize {
    500
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_ft_lr")]
    pub fine_tune_lr: f64,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_decay_factor")]
    pub lr_decay_factor: f64,
    #[serde(default = "d_decay_interval")]
    pub lr_decay_interval: usize,
    #[serde(default = "d_schedule")]
    pub prune_schedule: Vec<f64>,
    #[serde(default = "d_bits")]
    pub quant_bits: u32,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_ft_epochs")]
    pub finetune_epochs: usize,
    #[serde(default)]
    pub freeze_conv_finetune: bool,
    #[serde(default)]
    pub prune_last_layer: bool,
    #[serde(default = "d_budget")]
    pub quant_accuracy_budget: f64,
}

fn d_lr() -> f64 {
    0.001
}
fn d_ft_lr() -> f64 {
    1e-4
}
fn d_momentum() -> f64 {
    0.9
}
fn d_wd() -> f64 {
    1e-5
}
fn d_batch() -> usize {
    32
}
fn d_epochs() -> usize {
    15
}
fn d_decay_factor() -> f64 {
    0.5
}
fn d_decay_interval() -> usize {
    60
}
fn d_schedule() -> Vec<f64> {
    vec![0.2, 0.4, 0.6, 0.7, 0.75]
}
fn d_bits() -> u32 {
    4
}
fn d_seed() -> u64 {
    42
}
fn d_ft_epochs() -> usize {
    2
}
fn d_budget() -> f64 {
    0.02
}

impl Default for TrainSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section fills defaults")
    }
}

/// Base named policy plus optional per-layer overrides.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(default = "d_policy_name")]
    pub name: String,
    #[serde(default = "d_rate")]
    pub rate: f64,
    #[serde(default = "d_bits")]
    pub bits: u32,
    #[serde(default)]
    pub overrides: std::collections::BTreeMap<String, LayerPolicy>,
}

fn d_policy_name() -> String {
    "tac".into()
}
fn d_rate() -> f64 {
    0.75
}

impl Default for PolicySection {
    fn default() -> Self {
        toml::from_str("").expect("empty section fills defaults")
    }
}

/// One layer's policy override: a simple name or a pruned/quantized spec.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum LayerPolicy {
    Named(String),
    PrunedQuant { rate: f64, bits: u32 },
}

impl LayerPolicy {
    fn to_policy(&self) -> Result<Policy> {
        match self {
            LayerPolicy::Named(s) => match s.as_str() {
                "full" => Ok(Policy::Full),
                "binary" => Ok(Policy::Binary { scaled: false }),
                "binary-scaled" => Ok(Policy::Binary { scaled: true }),
                other => Err(TacError::Config(format!(
                    "unknown layer policy '{other}' (full, binary, binary-scaled, or {{rate, bits}})"
                ))),
            },
            LayerPolicy::PrunedQuant { rate, bits } => Ok(Policy::PrunedQuant {
                rate: *rate,
                bit_width: *bits,
            }),
        }
    }
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            TacError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| TacError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        graphs::by_name(&self.model)?;
        NamedPolicy::parse(&self.policy.name)?;
        match self.dataset.name.as_str() {
            "synthetic" => {}
            "mnist" | "cifar10" => {
                for f in self.dataset_files()? {
                    if !f.exists() {
                        return Err(TacError::MissingData(format!(
                            "dataset file {} does not exist",
                            f.display()
                        )));
                    }
                }
            }
            other => {
                return Err(TacError::Config(format!(
                    "unknown dataset '{other}' (synthetic, mnist, or cifar10)"
                )))
            }
        }
        self.train_config().validate()?;
        Ok(())
    }

    fn dataset_files(&self) -> Result<Vec<PathBuf>> {
        let p = &self.dataset.path;
        Ok(match self.dataset.name.as_str() {
            "mnist" => vec![
                p.join("train-images-idx3-ubyte"),
                p.join("train-labels-idx1-ubyte"),
                p.join("t10k-images-idx3-ubyte"),
                p.join("t10k-labels-idx1-ubyte"),
            ],
            "cifar10" => {
                let mut files: Vec<PathBuf> = (1..=5)
                    .map(|i| p.join(format!("data_batch_{i}.bin")))
                    .collect();
                files.push(p.join("test_batch.bin"));
                files
            }
            _ => Vec::new(),
        })
    }

    /// Loads (train, test) splits per the dataset section.
    pub fn load_datasets(&self) -> Result<(Dataset, Dataset)> {
        let d = &self.dataset;
        match d.name.as_str() {
            "synthetic" => Ok((
                data::synthetic(d.train_count, 1000),
                data::synthetic(d.test_count, 2000),
            )),
            "mnist" => {
                let files = self.dataset_files()?;
                let train = data::load_idx(&files[0], &files[1])?.take(d.train_count);
                let test = data::load_idx(&files[2], &files[3])?.take(d.test_count);
                Ok((train, test))
            }
            "cifar10" => {
                let files = self.dataset_files()?;
                let refs: Vec<&Path> = files[..5].iter().map(|p| p.as_path()).collect();
                let train = data::load_cifar10(&refs)?.take(d.train_count);
                let test = data::load_cifar10(&[files[5].as_path()])?.take(d.test_count);
                Ok((train, test))
            }
            other => Err(TacError::Config(format!("unknown dataset '{other}'"))),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            fine_tune_lr: t.fine_tune_lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            lr_decay_factor: t.lr_decay_factor,
            lr_decay_interval: t.lr_decay_interval,
            prune_schedule: t.prune_schedule.clone(),
            quant_bits: t.quant_bits,
            seed: t.seed,
            finetune_epochs: t.finetune_epochs,
            freeze_conv_finetune: t.freeze_conv_finetune,
            prune_last_layer: t.prune_last_layer,
            quant_accuracy_budget: t.quant_accuracy_budget,
        }
    }

    /// The model graph with the configured policy and overrides applied.
    pub fn resolve_graph(&self) -> Result<ModelGraph> {
        let base = graphs::by_name(&self.model)?;
        let named = NamedPolicy::parse(&self.policy.name)?;
        let mut g = graphs::apply_policy(&base, named, self.policy.rate, self.policy.bits)?;
        for (layer, lp) in &self.policy.overrides {
            g.set_policy(layer, lp.to_policy()?)?;
        }
        g.validate()?;
        Ok(g)
    }
}
