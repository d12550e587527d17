//! Experiment driver: declarative run configs, config-hash lineage, and the
//! pipeline stages behind the CLI subcommands.

mod config;
mod hash;
mod stages;

pub use config::{
    DatasetConfig, EvaluationConfig, MlpArch, RunConfig, SdtArch, SweepConfig, TargetConfig,
};
pub use hash::{canonical_json, config_hash, fnv1a64};
pub use stages::{
    lineage_hash, run_attack, run_preprocess, run_report, run_sweep, run_train_target,
    run_train_vae, select_samples, AttackRunEntry, AttacksSummary, CampaignRow, FullReport, Paths,
};
