//! Binary checkpoints.
//!
//! Layout: the magic bytes `VCLS`, a little-endian `u32` format version, a
//! `u32` header length, the JSON header, then every tensor listed in the
//! header as little-endian `f32` values in the listed order. Encoder tensors
//! come first (see [`EncoderWeights::names`]), followed by the classifier head
//! (`head.weight`, `head.bias`) and the optimizer moments (`adam.m.*`,
//! `adam.v.*`) when present.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderWeights};
use crate::error::{Error, Result};
use crate::finetune::{ClassifierHead, FinetuneConfig, TaskSpec};
use crate::optim::{AdamW, AdamWConfig};
use crate::pretrain::PretrainConfig;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VCLS";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Pretrain,
    Finetune,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptimizerMeta {
    config: AdamWConfig,
    step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: CheckpointKind,
    encoder: EncoderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pretrain: Option<PretrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    finetune: Option<FinetuneConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task: Option<TaskSpec>,
    vocab_hash: String,
    step: u64,
    epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerMeta>,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub encoder: EncoderWeights,
    pub pretrain: Option<PretrainConfig>,
    pub finetune: Option<FinetuneConfig>,
    pub task: Option<TaskSpec>,
    pub head: Option<ClassifierHead>,
    pub vocab_hash: String,
    pub step: u64,
    pub epoch: usize,
    pub optimizer: Option<AdamW>,
}

impl Checkpoint {
    pub fn pretrain(
        encoder: EncoderWeights,
        config: PretrainConfig,
        vocab_hash: String,
        step: u64,
        epoch: usize,
        optimizer: AdamW,
    ) -> Self {
        Checkpoint {
            kind: CheckpointKind::Pretrain,
            encoder,
            pretrain: Some(config),
            finetune: None,
            task: None,
            head: None,
            vocab_hash,
            step,
            epoch,
            optimizer: Some(optimizer),
        }
    }

    fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f32])> {
        let mut out: Vec<(String, Vec<usize>, &[f32])> = self
            .encoder
            .names()
            .into_iter()
            .zip(self.encoder.tensors())
            .map(|(n, t)| (n, t.shape().to_vec(), t.data()))
            .collect();
        if let Some(h) = &self.head {
            out.push(("head.weight".into(), h.weight.shape().to_vec(), h.weight.data()));
            out.push(("head.bias".into(), h.bias.shape().to_vec(), h.bias.data()));
        }
        if let Some(opt) = &self.optimizer {
            let (m, v) = opt.moments();
            let shapes: Vec<Vec<usize>> = self
                .encoder
                .tensors()
                .iter()
                .map(|t| t.shape().to_vec())
                .collect();
            let names = self.encoder.names();
            for (prefix, moments) in [("adam.m", m), ("adam.v", v)] {
                for ((n, s), data) in names.iter().zip(&shapes).zip(moments) {
                    out.push((format!("{prefix}.{n}"), s.clone(), data.as_slice()));
                }
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.named_tensors();
        if let Some(opt) = &self.optimizer {
            if opt.moments().0.len() != self.encoder.tensors().len() {
                return Err(Error::Contract(
                    "optimizer state does not cover the encoder parameters".into(),
                ));
            }
        }
        let header = Header {
            kind: self.kind,
            encoder: self.encoder.config,
            pretrain: self.pretrain,
            finetune: self.finetune,
            task: self.task.clone(),
            vocab_hash: self.vocab_hash.clone(),
            step: self.step,
            epoch: self.epoch,
            optimizer: self.optimizer.as_ref().map(|o| OptimizerMeta {
                config: o.config,
                step: o.step_count(),
            }),
            tensors: tensors
                .iter()
                .map(|(name, shape, _)| TensorEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let body: usize = tensors.iter().map(|(_, _, d)| d.len() * 4).sum();
        let mut out = Vec::with_capacity(12 + json.len() + body);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &tensors {
            for v in *data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}, expected {VERSION}"
            )));
        }
        let len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;

        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            let raw = r.take(n * 4).map_err(|_| {
                Error::Format(format!("checkpoint truncated inside tensor `{}`", entry.name))
            })?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((entry.name.as_str(), Tensor::new(entry.shape.clone(), data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }

        let expected = crate::encoder::expected_shapes(&header.encoder);
        let mut it = tensors.into_iter();
        let mut enc = Vec::with_capacity(expected.len());
        for (name, _) in &expected {
            match it.next() {
                Some((n, t)) if n == name => enc.push(t),
                Some((n, _)) => {
                    return Err(Error::Format(format!("expected tensor `{name}`, found `{n}`")))
                }
                None => return Err(Error::Format(format!("missing tensor `{name}`"))),
            }
        }
        let encoder = EncoderWeights::from_tensors(header.encoder, enc)?;

        let rest: Vec<(&str, Tensor)> = it.collect();
        let mut rest = rest.into_iter().peekable();
        let head = if rest.peek().is_some_and(|(n, _)| *n == "head.weight") {
            let (_, weight) = rest.next().expect("peeked");
            let (name, bias) = rest
                .next()
                .ok_or_else(|| Error::Format("head.bias missing".into()))?;
            if name != "head.bias" {
                return Err(Error::Format(format!("expected head.bias, found `{name}`")));
            }
            Some(ClassifierHead::new(weight, bias)?)
        } else {
            None
        };

        let optimizer = match header.optimizer {
            Some(meta) => {
                let mut m = Vec::with_capacity(expected.len());
                let mut v = Vec::with_capacity(expected.len());
                for (prefix, target) in [("adam.m", &mut m), ("adam.v", &mut v)] {
                    for (name, shape) in &expected {
                        let want = format!("{prefix}.{name}");
                        match rest.next() {
                            Some((n, t)) if n == want && t.shape() == shape.as_slice() => {
                                target.push(t.into_data())
                            }
                            _ => return Err(Error::Format(format!("missing tensor `{want}`"))),
                        }
                    }
                }
                Some(AdamW::from_state(meta.config, meta.step, m, v)?)
            }
            None => None,
        };
        if let Some((n, _)) = rest.next() {
            return Err(Error::Format(format!("unexpected tensor `{n}`")));
        }

        Ok(Checkpoint {
            kind: header.kind,
            encoder,
            pretrain: header.pretrain,
            finetune: header.finetune,
            task: header.task,
            head,
            vocab_hash: header.vocab_hash,
            step: header.step,
            epoch: header.epoch,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
