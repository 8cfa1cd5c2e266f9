//! Contrastive pretraining with an optional masked-language-modelling term.

mod loss;
mod trainer;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::PoolingStrategy;
use crate::error::{Error, Result};

pub use loss::{contrastive_loss, mask_for_mlm, mlm_loss, mlm_loss_sum, MaskTarget};
pub use trainer::{resume, split_indices, subsample_indices, train, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub temperature: f64,
    /// Weight of the MLM term; 0 disables it.
    pub mlm_weight: f64,
    pub masking_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub pooling: PoolingStrategy,
    /// Share of the triples kept before the validation split.
    pub data_fraction: f64,
    pub validation_fraction: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            temperature: 0.05,
            mlm_weight: 0.0,
            masking_rate: 0.15,
            batch_size: 8,
            epochs: 10,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            seed: 42,
            pooling: PoolingStrategy::Cls,
            data_fraction: 1.0,
            validation_fraction: 0.1,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.mlm_weight >= 0.0) || !self.mlm_weight.is_finite() {
            return fail(format!("mlm_weight must be non-negative, got {}", self.mlm_weight));
        }
        if !(self.masking_rate > 0.0 && self.masking_rate < 1.0) {
            return fail(format!("masking_rate must be in (0, 1), got {}", self.masking_rate));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return fail(format!("data_fraction must be in (0, 1], got {}", self.data_fraction));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// Mean losses of one split over one epoch. `step` is the optimizer step count
/// at the end of the epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: u64,
    pub split: Split,
    pub contrastive: f64,
    pub mlm: f64,
    pub combined: f64,
}

impl LossRecord {
    pub fn new(epoch: usize, step: u64, split: Split, contrastive: f64, mlm: f64, weight: f64) -> Self {
        LossRecord {
            epoch,
            step,
            split,
            contrastive,
            mlm,
            combined: contrastive + weight * mlm,
        }
    }
}

/// Writes the loss log as `epoch,step,split,contrastive,mlm,combined`.
pub fn write_loss_csv(path: &Path, records: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}
