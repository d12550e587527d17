//! Declarative run configuration for the experiment pipeline.

use crate::attacks::AttackConfig;
use crate::error::{Error, Result};
use crate::metrics::{AsrRule, MdRule};
use crate::models::{MlpConfig, SdtConfig, TrainConfig};
use crate::vae::VaeConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub csv: PathBuf,
    pub schema: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ratios")]
    pub ratios: (f64, f64, f64),
}

fn default_ratios() -> (f64, f64, f64) {
    (0.70, 0.10, 0.20)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetConfig {
    Mlp {
        #[serde(default)]
        arch: MlpArch,
        #[serde(default)]
        train: TrainConfig,
    },
    Sdt {
        #[serde(default)]
        arch: SdtArch,
        #[serde(default)]
        train: TrainConfig,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpArch {
    pub hidden: Vec<usize>,
}

impl Default for MlpArch {
    fn default() -> Self {
        let d = MlpConfig::default();
        Self { hidden: d.hidden }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdtArch {
    pub depth: usize,
}

impl Default for SdtArch {
    fn default() -> Self {
        let d = SdtConfig::default();
        Self { depth: d.depth }
    }
}

impl TargetConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            TargetConfig::Mlp { .. } => "mlp",
            TargetConfig::Sdt { .. } => "sdt",
        }
    }

    pub fn train(&self) -> &TrainConfig {
        match self {
            TargetConfig::Mlp { train, .. } | TargetConfig::Sdt { train, .. } => train,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationConfig {
    /// Samples drawn from the test split per campaign; clamped to the split
    /// size when the split is smaller.
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    /// Stratify the sample draw for equal class representation.
    #[serde(default)]
    pub class_balanced: bool,
    #[serde(default)]
    pub md_rule: MdRule,
    #[serde(default)]
    pub asr_rule: AsrRule,
    /// Only attack samples the target initially classifies correctly.
    #[serde(default)]
    pub restrict_to_correct: bool,
    /// Seed of the sample draw; defaults to the dataset seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads for per-sample attacks (0 = available parallelism).
    #[serde(default)]
    pub threads: usize,
}

fn default_sample_count() -> usize {
    500
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            sample_count: default_sample_count(),
            class_balanced: false,
            md_rule: MdRule::default(),
            asr_rule: AsrRule::default(),
            restrict_to_correct: false,
            seed: None,
            threads: 0,
        }
    }
}

/// Hyperparameter sweep requests, emitted by the `sweep` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepConfig {
    /// Grid over the margin weight λ and learning rate η of the latent
    /// C&W attack.
    LambdaEta {
        #[serde(default = "default_lambdas")]
        lambdas: Vec<f64>,
        #[serde(default = "default_etas")]
        etas: Vec<f64>,
        /// Target model kind the sweep attacks.
        #[serde(default)]
        target: Option<String>,
        /// Iteration budget of each sweep cell.
        #[serde(default = "default_sweep_iterations")]
        iterations: usize,
    },
    /// Sweep of the ℓ1 sparsity weight.
    L1 {
        #[serde(default = "default_weights")]
        weights: Vec<f64>,
        #[serde(default)]
        target: Option<String>,
    },
    /// Sweep of the sigmoid-ℓ0 sparsity weight.
    L0Sigmoid {
        #[serde(default = "default_weights")]
        weights: Vec<f64>,
        #[serde(default)]
        target: Option<String>,
    },
}

fn default_lambdas() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

fn default_etas() -> Vec<f64> {
    vec![0.01, 0.03, 0.1, 0.15, 0.2, 0.25, 0.3]
}

fn default_sweep_iterations() -> usize {
    500
}

fn default_weights() -> Vec<f64> {
    vec![0.01, 0.1, 0.5, 1.0]
}

/// Top-level declarative experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub vae: VaeConfig,
    pub targets: Vec<TargetConfig>,
    pub attacks: Vec<AttackConfig>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dataset.csv.exists() {
            return Err(Error::Config(format!(
                "dataset csv not found: {}",
                self.dataset.csv.display()
            )));
        }
        if !self.dataset.schema.exists() {
            return Err(Error::Config(format!(
                "schema not found: {}",
                self.dataset.schema.display()
            )));
        }
        if self.targets.is_empty() {
            return Err(Error::Config("at least one target model required".into()));
        }
        for attack in &self.attacks {
            attack.validate()?;
        }
        Ok(())
    }

    pub fn eval_seed(&self) -> u64 {
        self.evaluation.seed.unwrap_or(self.dataset.seed)
    }
}
