//! Flat TOML run configuration.
//!
//! One file covers the encoder shape, pretraining and fine-tuning settings,
//! and default input paths. Unknown keys are rejected. Command-line
//! overrides are applied as `key=value` pairs before validation, and the
//! resolved configuration is archived next to every command's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, PoolingStrategy};
use crate::error::{Error, Result};
use crate::finetune::{FinetuneConfig, TaskKind};
use crate::pretrain::PretrainConfig;

pub const ARCHIVE_NAME: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden: usize,
    pub ff: usize,
    pub max_len: usize,
    pub dropout: f64,

    pub min_count: usize,

    pub temperature: f64,
    pub mlm_weight: f64,
    pub masking_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub pooling: PoolingStrategy,
    pub data_fraction: f64,
    pub validation_fraction: f64,

    pub task: TaskKind,
    /// Class labels in head order; inferred from the training file when empty.
    pub labels: Vec<String>,
    pub ft_epochs: usize,
    pub ft_batch_size: usize,
    pub ft_learning_rate: f64,
    pub ft_weight_decay: f64,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub nli: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triples: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = EncoderConfig::default();
        let p = PretrainConfig::default();
        let f = FinetuneConfig::default();
        RunConfig {
            seed: p.seed,
            num_layers: e.num_layers,
            num_heads: e.num_heads,
            hidden: e.hidden,
            ff: e.ff,
            max_len: e.max_len,
            dropout: e.dropout,
            min_count: 1,
            temperature: p.temperature,
            mlm_weight: p.mlm_weight,
            masking_rate: p.masking_rate,
            batch_size: p.batch_size,
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            weight_decay: p.weight_decay,
            pooling: p.pooling,
            data_fraction: p.data_fraction,
            validation_fraction: p.validation_fraction,
            task: TaskKind::Pair,
            labels: Vec::new(),
            ft_epochs: f.epochs,
            ft_batch_size: f.batch_size,
            ft_learning_rate: f.learning_rate,
            ft_weight_decay: f.weight_decay,
            nli: None,
            triples: None,
            vocab: None,
            checkpoint: None,
            train: None,
            dev: None,
        }
    }
}

fn parse_override(item: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not KEY=VALUE")))?;
    let key = key.trim().to_owned();
    let raw = raw.trim();
    // Bare words such as `cls` or `pair` are taken as strings.
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    Ok((key, value))
}

impl RunConfig {
    /// Reads `path` (or the defaults), applies `overrides` in order, then
    /// validates.
    pub fn resolve(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (k, v) = parse_override(item)?;
            table.insert(k, v);
        }
        if let Some(s) = seed {
            table.insert("seed".into(), toml::Value::Integer(s as i64));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pretrain().validate()?;
        self.finetune().validate()?;
        let enc = self.encoder(1);
        enc.validate()?;
        Ok(())
    }

    pub fn encoder(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            hidden: self.hidden,
            ff: self.ff,
            vocab_size,
            max_len: self.max_len,
            dropout: self.dropout,
        }
    }

    pub fn pretrain(&self) -> PretrainConfig {
        PretrainConfig {
            temperature: self.temperature,
            mlm_weight: self.mlm_weight,
            masking_rate: self.masking_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed: self.seed,
            pooling: self.pooling,
            data_fraction: self.data_fraction,
            validation_fraction: self.validation_fraction,
        }
    }

    pub fn finetune(&self) -> FinetuneConfig {
        FinetuneConfig {
            epochs: self.ft_epochs,
            batch_size: self.ft_batch_size,
            learning_rate: self.ft_learning_rate,
            weight_decay: self.ft_weight_decay,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn archive(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(ARCHIVE_NAME), self.to_toml()?)?;
        Ok(())
    }
}
