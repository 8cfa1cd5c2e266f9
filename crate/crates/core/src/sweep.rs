//! One-axis hyperparameter sweeps: pretrain, fine-tune and score on dev for
//! each value, collecting one CSV row per value.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::encoder::PoolingStrategy;
use crate::error::{Error, Result};
use crate::finetune::{finetune, FinetuneOutcome, TaskData, TaskSpec};
use crate::pretrain::{self, csv_err, TrainOutcome};
use crate::text::nli::ContrastiveTriple;
use crate::text::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Tau,
    Lambda,
    MaskRate,
    Pooling,
    DataFraction,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] = [
        SweepAxis::Tau,
        SweepAxis::Lambda,
        SweepAxis::MaskRate,
        SweepAxis::Pooling,
        SweepAxis::DataFraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau",
            SweepAxis::Lambda => "lambda",
            SweepAxis::MaskRate => "mask_rate",
            SweepAxis::Pooling => "pooling",
            SweepAxis::DataFraction => "data_fraction",
        }
    }

    pub fn default_grid(self) -> &'static [&'static str] {
        match self {
            SweepAxis::Tau => &["0.001", "0.01", "0.05", "0.1", "0.5", "1"],
            SweepAxis::Lambda => &["w/o", "0.001", "0.01", "0.05", "0.1", "0.5", "1"],
            SweepAxis::MaskRate => &["0.10", "0.15", "0.20", "0.30", "0.40", "0.50"],
            SweepAxis::Pooling => &["cls", "mean", "first_last", "top2"],
            SweepAxis::DataFraction => &["0.25", "0.5", "0.75", "1.0"],
        }
    }

    /// Sets this axis to `value` in `cfg`. `w/o` on the lambda axis means no
    /// MLM term.
    pub fn apply(self, cfg: &mut RunConfig, value: &str) -> Result<()> {
        let number = || {
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{value}` is not a number for axis {self}")))
        };
        match self {
            SweepAxis::Tau => cfg.temperature = number()?,
            SweepAxis::Lambda => {
                cfg.mlm_weight = if value.trim().eq_ignore_ascii_case("w/o") {
                    0.0
                } else {
                    number()?
                }
            }
            SweepAxis::MaskRate => cfg.masking_rate = number()?,
            SweepAxis::Pooling => cfg.pooling = value.parse::<PoolingStrategy>()?,
            SweepAxis::DataFraction => cfg.data_fraction = number()?,
        }
        cfg.validate()
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        match s.as_str() {
            "tau" | "temperature" => Ok(SweepAxis::Tau),
            "lambda" | "mlm_weight" => Ok(SweepAxis::Lambda),
            "mask_rate" | "masking_rate" => Ok(SweepAxis::MaskRate),
            "pooling" => Ok(SweepAxis::Pooling),
            "data_fraction" => Ok(SweepAxis::DataFraction),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}`; expected one of tau, lambda, mask_rate, pooling, data_fraction"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub status: String,
    pub dev_accuracy: Option<f64>,
    pub dev_macro_f1: Option<f64>,
    pub error: String,
}

pub struct SweepData<'a> {
    pub triples: &'a [ContrastiveTriple],
    pub vocab: &'a Vocabulary,
    pub train: &'a TaskData,
    pub dev: &'a TaskData,
}

/// Pretrains with `cfg`, then fine-tunes the result on the task data.
pub fn run_leg(cfg: &RunConfig, data: &SweepData<'_>) -> Result<(TrainOutcome, FinetuneOutcome)> {
    let pre = pretrain::train(
        data.triples,
        data.vocab,
        cfg.encoder(data.vocab.len()),
        &cfg.pretrain(),
    )?;
    let spec = if cfg.labels.is_empty() {
        TaskSpec::infer(cfg.task, data.train)?
    } else {
        TaskSpec::new(cfg.task, cfg.labels.clone())?
    };
    let ft = finetune(
        pre.checkpoint.encoder.clone(),
        spec,
        data.train,
        data.dev,
        data.vocab,
        &cfg.finetune(),
    )?;
    Ok((pre, ft))
}

/// Runs every value in order. A failing leg is recorded and the sweep moves
/// on.
pub fn sweep(
    base: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    data: &SweepData<'_>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if axis == SweepAxis::MaskRate && base.mlm_weight == 0.0 {
        return Err(Error::Config(
            "a mask_rate sweep needs mlm_weight > 0; the masking rate has no effect otherwise".into(),
        ));
    }
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = base.clone();
        let result = axis
            .apply(&mut cfg, value)
            .and_then(|_| run_leg(&cfg, data));
        rows.push(match result {
            Ok((_, ft)) => SweepRow {
                axis: axis.to_string(),
                value: value.clone(),
                status: "ok".into(),
                dev_accuracy: Some(ft.dev_report.selection_key().0),
                dev_macro_f1: Some(ft.dev_report.macro_f1),
                error: String::new(),
            },
            Err(e) => SweepRow {
                axis: axis.to_string(),
                value: value.clone(),
                status: "failed".into(),
                dev_accuracy: None,
                dev_macro_f1: None,
                error: e.to_string(),
            },
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}
