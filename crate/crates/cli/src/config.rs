//! Flat run configuration: JSON file with every tunable, overridable by
//! command-line flags (flags win). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use elink_core::optim::AdamConfig;
use elink_core::pipeline::PipelineMode;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // Candidate generation.
    pub threshold: f64,
    pub candidate_limit: usize,
    // Sequence limits.
    pub max_sentence_tokens: usize,
    pub max_disamb_source: usize,
    pub max_decode_len: usize,
    // Model size.
    pub embed_dim: usize,
    pub hidden: usize,
    // Optimization.
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    // Data preparation.
    pub split_ratio: f64,
    pub max_vocab: usize,
    pub min_count: u64,
    // Artifact paths (used by link/evaluate).
    pub index_path: Option<PathBuf>,
    pub vocab_path: Option<PathBuf>,
    pub extractor_checkpoint: Option<PathBuf>,
    pub disambiguator_checkpoint: Option<PathBuf>,
    pub baseline_checkpoint: Option<PathBuf>,
    pub mode: PipelineMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            threshold: 0.85,
            candidate_limit: 64,
            max_sentence_tokens: 25,
            max_disamb_source: 100,
            max_decode_len: 50,
            embed_dim: 300,
            hidden: 300,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 30,
            seed: 42,
            split_ratio: 0.8,
            max_vocab: 50_000,
            min_count: 1,
            index_path: None,
            vocab_path: None,
            extractor_checkpoint: None,
            disambiguator_checkpoint: None,
            baseline_checkpoint: None,
            mode: PipelineMode::Full,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
        }
    }

    /// One-line effective-config echo, printed to stderr by every command.
    pub fn echo(&self) {
        eprintln!(
            "config: {}",
            serde_json::to_string(self).expect("config serializes")
        );
    }
}

/// Flag-level overrides shared by all commands; any flag present beats the
/// config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file with defaults for every tunable.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub candidate_limit: Option<usize>,
    #[arg(long)]
    pub max_sentence_tokens: Option<usize>,
    #[arg(long)]
    pub max_disamb_source: Option<usize>,
    #[arg(long)]
    pub max_decode_len: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[arg(long)]
    pub min_count: Option<u64>,
}

impl Overrides {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        apply!(
            threshold,
            candidate_limit,
            max_sentence_tokens,
            max_disamb_source,
            max_decode_len,
            embed_dim,
            hidden,
            learning_rate,
            epochs,
            seed,
            split_ratio,
            max_vocab,
            min_count
        );
        Ok(config)
    }
}
