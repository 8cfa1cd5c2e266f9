//! Downstream classification heads: sentence pairs, single sentences, and
//! multiple-choice reading comprehension scored as entailment.

mod metrics;
mod train;

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::rng::{stream, Stream};
use crate::tensor::{lit, Tensor};
use crate::text::tokenizer::{encode_pair, encode_single};
use crate::text::{TokenSequence, Vocabulary};

pub use metrics::{
    accuracy, macro_f1, mrc_accuracy, ClassReport, ClassScores, ConfusionMatrix, MetricsReport,
};
pub use train::{
    argmax_first, evaluate, finetune, mrc_predict, FineTunedModel, FinetuneOutcome, EpochSummary,
    Prediction,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// `[CLS] a [SEP] b [SEP]` classification.
    Pair,
    /// `[CLS] a [SEP]` classification.
    Single,
    /// Each `question + " " + choice` is scored as a hypothesis against the
    /// context; the most probable entailment wins.
    Mrc,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Pair => "pair",
            TaskKind::Single => "single",
            TaskKind::Mrc => "mrc",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(TaskKind::Pair),
            "single" => Ok(TaskKind::Single),
            "mrc" | "multiple_choice" => Ok(TaskKind::Mrc),
            other => Err(Error::Config(format!("unknown task kind `{other}`"))),
        }
    }
}

pub const MRC_LABELS: [&str; 2] = ["entailment", "contradiction"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub labels: Vec<String>,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, labels: Vec<String>) -> Result<Self> {
        if kind == TaskKind::Mrc {
            return Ok(Self::mrc());
        }
        let distinct: BTreeSet<&String> = labels.iter().collect();
        if labels.len() < 2 || distinct.len() != labels.len() {
            return Err(Error::Config(format!(
                "a task needs at least two distinct labels, got {labels:?}"
            )));
        }
        Ok(TaskSpec { kind, labels })
    }

    pub fn mrc() -> Self {
        TaskSpec {
            kind: TaskKind::Mrc,
            labels: MRC_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Label set taken from the training data, sorted. A single observed
    /// label is padded with a placeholder second class.
    pub fn infer(kind: TaskKind, data: &TaskData) -> Result<Self> {
        if kind == TaskKind::Mrc {
            return Ok(Self::mrc());
        }
        let mut set: BTreeSet<String> = data.examples.iter().map(|e| e.label.clone()).collect();
        if set.is_empty() {
            return Err(Error::Input(format!("{} has no labelled rows", data.path.display())));
        }
        if set.len() == 1 {
            set.insert("__other__".into());
        }
        Self::new(kind, set.into_iter().collect())
    }

    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// One classification row. `text_b` is present for pair tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledText {
    pub id: String,
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MrcQuestion {
    pub id: String,
    pub context: String,
    pub question: String,
    pub choices: Vec<String>,
    pub answer: usize,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub kind: TaskKind,
    pub path: PathBuf,
    pub examples: Vec<LabeledText>,
    pub questions: Vec<MrcQuestion>,
}

#[derive(Deserialize)]
struct PairRow {
    #[serde(default)]
    id: Option<serde_json::Value>,
    text_a: String,
    text_b: String,
    label: serde_json::Value,
}

#[derive(Deserialize)]
struct SingleRow {
    #[serde(default)]
    id: Option<serde_json::Value>,
    text: String,
    label: serde_json::Value,
}

#[derive(Deserialize)]
struct MrcRow {
    #[serde(default)]
    id: Option<serde_json::Value>,
    context: String,
    question: String,
    choices: Vec<String>,
    answer_index: usize,
}

fn id_string(id: Option<serde_json::Value>, index: usize) -> String {
    match id {
        Some(serde_json::Value::String(s)) => s,
        Some(v) => v.to_string(),
        None => index.to_string(),
    }
}

fn label_string(v: serde_json::Value, path: &Path, line: usize) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Bool(b) => Ok(b.to_string()),
        other => Err(Error::Data {
            path: path.to_path_buf(),
            line,
            message: format!("label must be a string or number, got {other}"),
        }),
    }
}

impl TaskData {
    pub fn classification(kind: TaskKind, examples: Vec<LabeledText>) -> Self {
        TaskData {
            kind,
            path: PathBuf::from("<memory>"),
            examples,
            questions: Vec::new(),
        }
    }

    pub fn multiple_choice(questions: Vec<MrcQuestion>) -> Self {
        TaskData {
            kind: TaskKind::Mrc,
            path: PathBuf::from("<memory>"),
            examples: Vec::new(),
            questions,
        }
    }

    pub fn len(&self) -> usize {
        match self.kind {
            TaskKind::Mrc => self.questions.len(),
            _ => self.examples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(kind: TaskKind, path: &Path) -> Result<Self> {
        let mut data = TaskData {
            kind,
            path: path.to_path_buf(),
            examples: Vec::new(),
            questions: Vec::new(),
        };
        match kind {
            TaskKind::Pair => {
                for (i, (line, r)) in jsonl::read_numbered::<PairRow>(path)?.into_iter().enumerate() {
                    data.examples.push(LabeledText {
                        id: id_string(r.id, i),
                        text_a: r.text_a,
                        text_b: Some(r.text_b),
                        label: label_string(r.label, path, line)?,
                        line,
                    });
                }
            }
            TaskKind::Single => {
                for (i, (line, r)) in jsonl::read_numbered::<SingleRow>(path)?.into_iter().enumerate() {
                    data.examples.push(LabeledText {
                        id: id_string(r.id, i),
                        text_a: r.text,
                        text_b: None,
                        label: label_string(r.label, path, line)?,
                        line,
                    });
                }
            }
            TaskKind::Mrc => {
                for (i, (line, r)) in jsonl::read_numbered::<MrcRow>(path)?.into_iter().enumerate() {
                    if r.choices.is_empty() || r.answer_index >= r.choices.len() {
                        return Err(Error::Data {
                            path: path.to_path_buf(),
                            line,
                            message: format!(
                                "answer_index {} is not one of {} choices",
                                r.answer_index,
                                r.choices.len()
                            ),
                        });
                    }
                    data.questions.push(MrcQuestion {
                        id: id_string(r.id, i),
                        context: r.context,
                        question: r.question,
                        choices: r.choices,
                        answer: r.answer_index,
                        line,
                    });
                }
            }
        }
        Ok(data)
    }

    /// Writes the rows back in the JSON-lines schema of their kind.
    pub fn save(&self, path: &Path) -> Result<()> {
        use serde_json::json;
        let rows: Vec<serde_json::Value> = match self.kind {
            TaskKind::Mrc => self
                .questions
                .iter()
                .map(|q| {
                    json!({
                        "id": q.id,
                        "context": q.context,
                        "question": q.question,
                        "choices": q.choices,
                        "answer_index": q.answer,
                    })
                })
                .collect(),
            TaskKind::Pair => self
                .examples
                .iter()
                .map(|e| json!({"id": e.id, "text_a": e.text_a, "text_b": e.text_b, "label": e.label}))
                .collect(),
            TaskKind::Single => self
                .examples
                .iter()
                .map(|e| json!({"id": e.id, "text": e.text_a, "label": e.label}))
                .collect(),
        };
        jsonl::write(path, &rows)
    }

    /// Model inputs with class indices. Multiple-choice questions expand to
    /// one entailment row for the answer and contradiction rows for the rest.
    pub fn encode(
        &self,
        spec: &TaskSpec,
        vocab: &Vocabulary,
        max_len: usize,
    ) -> Result<Vec<(TokenSequence, usize)>> {
        if spec.kind != self.kind {
            return Err(Error::Config(format!(
                "task is {} but the data was loaded as {}",
                spec.kind, self.kind
            )));
        }
        let mut out = Vec::new();
        match self.kind {
            TaskKind::Mrc => {
                for q in &self.questions {
                    for (k, choice) in q.choices.iter().enumerate() {
                        let seq = mrc_statement(q, choice, vocab, max_len)?;
                        out.push((seq, usize::from(k != q.answer)));
                    }
                }
            }
            _ => {
                for e in &self.examples {
                    let label = spec.label_index(&e.label).ok_or_else(|| Error::Data {
                        path: self.path.clone(),
                        line: e.line,
                        message: format!("unknown label `{}`; expected one of {:?}", e.label, spec.labels),
                    })?;
                    out.push((encode_example(e, vocab, max_len)?, label));
                }
            }
        }
        Ok(out)
    }
}

fn encode_example(e: &LabeledText, vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence> {
    match &e.text_b {
        Some(b) => encode_pair(&e.text_a, b, vocab, max_len),
        None => encode_single(&e.text_a, vocab, max_len),
    }
}

pub(crate) fn mrc_statement(
    q: &MrcQuestion,
    choice: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<TokenSequence> {
    let statement = format!("{} {}", q.question, choice);
    encode_pair(&statement, &q.context, vocab, max_len)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 7,
            batch_size: 16,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            seed: 42,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("fine-tune epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "fine-tune learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("fine-tune weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Linear layer over the pooled `[CLS]` state.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ClassifierHead {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let Some((_, c)) = weight.dims2() else {
            return Err(Error::Format(format!("head weight must be a matrix, got {:?}", weight.shape())));
        };
        if c < 2 || bias.shape() != [c] {
            return Err(Error::Format(format!(
                "head weight {:?} and bias {:?} do not describe a classifier with at least 2 classes",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(ClassifierHead { weight, bias })
    }

    pub fn init(hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, Stream::Head, 0);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let data = (0..hidden * classes).map(|_| lit(normal.sample(&mut rng))).collect();
        Self::new(Tensor::new(vec![hidden, classes], data)?, Tensor::zeros(&[classes]))
    }

    pub fn classes(&self) -> usize {
        self.bias.numel()
    }
}
