//! Embedding geometry: retrieval accuracy, alignment, uniformity, and
//! attention-map export.

mod metrics;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::{forward, EncoderWeights, Mode, PoolingStrategy};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::tape::Tape;
use crate::text::nli::{NliExample, NliLabel};
use crate::text::tokenizer::{encode_pair, encode_single};
use crate::text::Vocabulary;

pub use metrics::{accuracy_at_topk, alignment, uniformity, RetrievalCase};

pub const TOPK: [usize; 4] = [1, 3, 5, 10];

/// Pooled embeddings with the ids and texts they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub ids: Vec<String>,
    pub texts: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingMeta {
    id: String,
    text: String,
}

/// Bytes before the matrix: `u32` header length, then `u64` rows and `u64`
/// columns.
const EMBEDDING_HEADER: u32 = 16;

impl EmbeddingSet {
    pub fn encode(
        encoder: &EncoderWeights,
        vocab: &Vocabulary,
        ids: Vec<String>,
        texts: Vec<String>,
        pooling: PoolingStrategy,
    ) -> Result<Self> {
        if ids.len() != texts.len() {
            return Err(Error::dim("embedding_set", &[ids.len()], &[texts.len()]));
        }
        let seqs = texts
            .iter()
            .map(|t| encode_single(t, vocab, encoder.config.max_len).map(|s| s.unpadded()))
            .collect::<Result<Vec<_>>>()?;
        let vectors = encoder.embed_batch(&seqs, pooling)?;
        let set = EmbeddingSet { ids, texts, vectors };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.vectors.len() || self.texts.len() != self.vectors.len() {
            return Err(Error::Contract("embedding rows and texts disagree".into()));
        }
        let d = self.dim();
        for (i, v) in self.vectors.iter().enumerate() {
            if v.len() != d {
                return Err(Error::dim("embedding_set", &[d], &[v.len()]));
            }
            if v.iter().all(|&x| x == 0.0) || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Degenerate(format!("embedding row {i} is zero or non-finite")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        self.vectors
            .iter()
            .map(|v| v.iter().map(|&x| f64::from(x)).collect())
            .collect()
    }

    /// Writes the matrix to `path` and ids/texts to `path` with a `.jsonl`
    /// extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let (n, d) = (self.len(), self.dim());
        let mut out = Vec::with_capacity(4 + 16 + n * d * 4);
        out.extend_from_slice(&EMBEDDING_HEADER.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(d as u64).to_le_bytes());
        for v in &self.vectors {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        fs::write(path, out)?;
        let meta: Vec<EmbeddingMeta> = self
            .ids
            .iter()
            .zip(&self.texts)
            .map(|(id, text)| EmbeddingMeta {
                id: id.clone(),
                text: text.clone(),
            })
            .collect();
        jsonl::write(&sidecar(path), &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let short = || Error::Format(format!("{} is truncated", path.display()));
        let word = |at: usize, len: usize| bytes.get(at..at + len).ok_or_else(short);
        let hlen = u32::from_le_bytes(word(0, 4)?.try_into().expect("4 bytes"));
        if hlen != EMBEDDING_HEADER {
            return Err(Error::Format(format!("unexpected embedding header length {hlen}")));
        }
        let n = u64::from_le_bytes(word(4, 8)?.try_into().expect("8 bytes")) as usize;
        let d = u64::from_le_bytes(word(12, 8)?.try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() != n * d * 4 {
            return Err(Error::Format(format!(
                "expected {n}×{d} floats, found {} bytes",
                body.len()
            )));
        }
        let flat: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let vectors = flat.chunks(d.max(1)).take(n).map(<[f32]>::to_vec).collect();
        let meta: Vec<EmbeddingMeta> = jsonl::read(&sidecar(path))?;
        let (ids, texts) = meta.into_iter().map(|m| (m.id, m.text)).unzip();
        let set = EmbeddingSet { ids, texts, vectors };
        set.validate()?;
        Ok(set)
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("jsonl")
}

/// Last-layer attention of one `[CLS] a [SEP] b [SEP]` encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub text_a: String,
    pub text_b: String,
    pub tokens: Vec<String>,
    pub layer: usize,
    /// `[head][query][key]`.
    pub heads: Vec<Vec<Vec<f32>>>,
    pub mean: Vec<Vec<f32>>,
}

/// Both segment orders of one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionExport {
    pub forward: AttentionMap,
    pub swapped: AttentionMap,
}

fn attention_map(encoder: &EncoderWeights, vocab: &Vocabulary, a: &str, b: &str) -> Result<AttentionMap> {
    let seq = encode_pair(a, b, vocab, encoder.config.max_len)?.unpadded();
    let mut tape = Tape::new();
    let vars = encoder.bind(&mut tape, false);
    let out = forward(&mut tape, &vars, &encoder.config, &seq, &mut Mode::Eval)?;
    let att = out.attention.last().expect("at least one layer");
    let (h, n) = (att.shape()[0], att.shape()[1]);
    let data = att.data();
    let heads: Vec<Vec<Vec<f32>>> = (0..h)
        .map(|k| {
            (0..n)
                .map(|i| data[(k * n + i) * n..(k * n + i + 1) * n].to_vec())
                .collect()
        })
        .collect();
    let mean = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| heads.iter().map(|m| m[i][j]).sum::<f32>() / h as f32)
                .collect()
        })
        .collect();
    let tokens = seq
        .ids
        .iter()
        .map(|&id| vocab.token(id).unwrap_or("[UNK]").to_owned())
        .collect();
    Ok(AttentionMap {
        text_a: a.to_owned(),
        text_b: b.to_owned(),
        tokens,
        layer: encoder.config.num_layers,
        heads,
        mean,
    })
}

pub fn export_attention(
    encoder: &EncoderWeights,
    vocab: &Vocabulary,
    a: &str,
    b: &str,
) -> Result<AttentionExport> {
    Ok(AttentionExport {
        forward: attention_map(encoder, vocab, a, b)?,
        swapped: attention_map(encoder, vocab, b, a)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub cases: usize,
    pub accuracy_at_1: f64,
    pub accuracy_at_3: f64,
    pub accuracy_at_5: f64,
    pub accuracy_at_10: f64,
}

impl RetrievalReport {
    pub fn compute(cases: &[RetrievalCase]) -> Result<Self> {
        let acc = |k| accuracy_at_topk(cases, k);
        Ok(RetrievalReport {
            cases: cases.len(),
            accuracy_at_1: acc(TOPK[0])?,
            accuracy_at_3: acc(TOPK[1])?,
            accuracy_at_5: acc(TOPK[2])?,
            accuracy_at_10: acc(TOPK[3])?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub pooling: PoolingStrategy,
    pub entailment_pairs: usize,
    pub contradiction_pairs: usize,
    pub sentences: usize,
    pub alignment_e: f64,
    pub alignment_c: f64,
    pub uniformity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalReport>,
}

/// Alignment over entailment and contradiction pairs of `examples`, and
/// uniformity over every distinct sentence in them.
pub fn analyze_pairs(
    encoder: &EncoderWeights,
    vocab: &Vocabulary,
    examples: &[NliExample],
    pooling: PoolingStrategy,
) -> Result<AnalysisReport> {
    let mut sentences: Vec<String> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut intern = |s: &str| -> usize {
        let s = crate::text::tokenizer::normalize_whitespace(s);
        *index.entry(s.clone()).or_insert_with(|| {
            sentences.push(s);
            sentences.len() - 1
        })
    };
    let mut ent = Vec::new();
    let mut con = Vec::new();
    for ex in examples {
        let pair = (intern(&ex.premise), intern(&ex.hypothesis));
        match ex.label {
            NliLabel::Entailment => ent.push(pair),
            NliLabel::Contradiction => con.push(pair),
            NliLabel::Neutral => {}
        }
    }
    let ids = (0..sentences.len()).map(|i| i.to_string()).collect();
    let set = EmbeddingSet::encode(encoder, vocab, ids, sentences, pooling)?;
    let rows = set.rows_f64();
    let pairs = |idx: &[(usize, usize)]| -> Vec<(&[f64], &[f64])> {
        idx.iter()
            .map(|&(a, b)| (rows[a].as_slice(), rows[b].as_slice()))
            .collect()
    };
    Ok(AnalysisReport {
        pooling,
        entailment_pairs: ent.len(),
        contradiction_pairs: con.len(),
        sentences: rows.len(),
        alignment_e: alignment(&pairs(&ent))?,
        alignment_c: alignment(&pairs(&con))?,
        uniformity: uniformity(&rows)?,
        retrieval: None,
    })
}

/// Candidate passage for retrieval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
}

/// `gold` is an index into the context file or a context id. `candidates`
/// restricts the pool; by default every context competes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimRow {
    #[serde(default)]
    pub id: Option<String>,
    pub claim: String,
    pub gold: serde_json::Value,
    #[serde(default)]
    pub candidates: Option<Vec<usize>>,
}

pub fn retrieval_cases(
    encoder: &EncoderWeights,
    vocab: &Vocabulary,
    claims: &[ClaimRow],
    contexts: &[ContextRow],
    pooling: PoolingStrategy,
) -> Result<Vec<RetrievalCase>> {
    let embed = |texts: Vec<String>| -> Result<Vec<Vec<f64>>> {
        let ids = (0..texts.len()).map(|i| i.to_string()).collect();
        Ok(EmbeddingSet::encode(encoder, vocab, ids, texts, pooling)?.rows_f64())
    };
    let ctx = embed(contexts.iter().map(|c| c.text.clone()).collect())?;
    let qs = embed(claims.iter().map(|c| c.claim.clone()).collect())?;
    let mut cases = Vec::with_capacity(claims.len());
    for (i, (row, q)) in claims.iter().zip(qs).enumerate() {
        let gold = match &row.gold {
            serde_json::Value::Number(n) => n.as_u64().map(|g| g as usize),
            serde_json::Value::String(s) => contexts.iter().position(|c| c.id.as_deref() == Some(s)),
            _ => None,
        }
        .filter(|&g| g < ctx.len())
        .ok_or_else(|| Error::Input(format!("claim {i}: gold {} is not a known context", row.gold)))?;
        let pool: Vec<usize> = row.candidates.clone().unwrap_or_else(|| (0..ctx.len()).collect());
        if let Some(&bad) = pool.iter().find(|&&c| c >= ctx.len()) {
            return Err(Error::Input(format!("claim {i}: candidate {bad} out of range")));
        }
        let pos = pool.iter().position(|&c| c == gold).ok_or_else(|| {
            Error::Input(format!("claim {i}: gold context is not among its candidates"))
        })?;
        cases.push(RetrievalCase {
            claim: q,
            candidates: pool.iter().map(|&c| ctx[c].clone()).collect(),
            gold: pos,
        });
    }
    Ok(cases)
}
