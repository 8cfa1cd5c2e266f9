use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointKind};
use crate::encoder::{forward, pool, EncoderWeights, Mode, PoolingStrategy};
use crate::error::{Error, Result};
use crate::finetune::{
    mrc_statement, ClassifierHead, ConfusionMatrix, FinetuneConfig,
    MetricsReport, TaskData, TaskKind, TaskSpec, mrc_accuracy,
};
use crate::optim::{AdamW, AdamWConfig};
use crate::rng::{stream, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::text::{TokenSequence, Vocabulary};

#[derive(Clone, Debug)]
pub struct FineTunedModel {
    pub encoder: EncoderWeights,
    pub head: ClassifierHead,
    pub task: TaskSpec,
}

impl FineTunedModel {
    fn head_logits(
        &self,
        tape: &mut Tape<f32>,
        states: Var,
        head: (Var, Var),
    ) -> Result<Var> {
        let z = tape.matmul(states, head.0)?;
        tape.add_row(z, head.1)
    }

    /// Class probabilities for each sequence, eval mode.
    pub fn probabilities(&self, seqs: &[TokenSequence]) -> Result<Vec<Vec<f64>>> {
        let cls = self.encoder.embed_batch(
            &seqs.iter().map(TokenSequence::unpadded).collect::<Vec<_>>(),
            PoolingStrategy::Cls,
        )?;
        let c = self.head.classes();
        let w = self.head.weight.data();
        let b = self.head.bias.data();
        Ok(cls
            .iter()
            .map(|h| {
                let logits: Vec<f64> = (0..c)
                    .map(|k| {
                        let mut z = b[k];
                        for (j, &hj) in h.iter().enumerate() {
                            z += hj * w[j * c + k];
                        }
                        f64::from(z)
                    })
                    .collect();
                softmax(&logits)
            })
            .collect())
    }

    pub fn to_checkpoint(
        &self,
        config: FinetuneConfig,
        vocab_hash: String,
        step: u64,
        epoch: usize,
    ) -> Checkpoint {
        Checkpoint {
            kind: CheckpointKind::Finetune,
            encoder: self.encoder.clone(),
            pretrain: None,
            finetune: Some(config),
            task: Some(self.task.clone()),
            head: Some(self.head.clone()),
            vocab_hash,
            step,
            epoch,
            optimizer: None,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        match (ck.kind, ck.head, ck.task) {
            (CheckpointKind::Finetune, Some(head), Some(task)) => {
                if head.classes() != task.classes() {
                    return Err(Error::Format(format!(
                        "head has {} classes but the task lists {}",
                        head.classes(),
                        task.classes()
                    )));
                }
                Ok(FineTunedModel {
                    encoder: ck.encoder,
                    head,
                    task,
                })
            }
            _ => Err(Error::Config("checkpoint does not contain a fine-tuned classifier".into())),
        }
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub gold: serde_json::Value,
    pub pred: serde_json::Value,
    pub scores: Vec<f64>,
}

/// Entailment probability of every `question + " " + choice` statement.
fn choice_scores(
    model: &FineTunedModel,
    vocab: &Vocabulary,
    q: &crate::finetune::MrcQuestion,
) -> Result<Vec<f64>> {
    let seqs = q
        .choices
        .iter()
        .map(|c| mrc_statement(q, c, vocab, model.encoder.config.max_len))
        .collect::<Result<Vec<_>>>()?;
    Ok(model.probabilities(&seqs)?.iter().map(|p| p[0]).collect())
}

pub fn mrc_predict(
    model: &FineTunedModel,
    vocab: &Vocabulary,
    context: &str,
    question: &str,
    choices: &[String],
) -> Result<usize> {
    if choices.is_empty() {
        return Err(Error::Input("a question needs at least one choice".into()));
    }
    let q = crate::finetune::MrcQuestion {
        id: String::new(),
        context: context.to_owned(),
        question: question.to_owned(),
        choices: choices.to_vec(),
        answer: 0,
        line: 0,
    };
    let scores = choice_scores(model, vocab, &q)?;
    Ok(argmax_first(&scores).expect("non-empty"))
}

/// Metrics and per-item predictions of `model` on `data`.
pub fn evaluate(
    model: &FineTunedModel,
    data: &TaskData,
    vocab: &Vocabulary,
) -> Result<(MetricsReport, Vec<Prediction>)> {
    let spec = &model.task;
    let max_len = model.encoder.config.max_len;
    let mut cm = ConfusionMatrix::new(spec.classes());
    let mut preds = Vec::new();
    if data.kind == TaskKind::Mrc {
        if spec.kind != TaskKind::Mrc {
            return Err(Error::Config("model was not fine-tuned for multiple choice".into()));
        }
        let (mut chosen, mut golds) = (Vec::new(), Vec::new());
        for q in &data.questions {
            let seqs = q
                .choices
                .iter()
                .map(|c| mrc_statement(q, c, vocab, max_len))
                .collect::<Result<Vec<_>>>()?;
            let probs = model.probabilities(&seqs)?;
            for (k, p) in probs.iter().enumerate() {
                let gold = usize::from(k != q.answer);
                cm.add(gold, argmax_first(p).expect("two classes"))?;
            }
            let scores: Vec<f64> = probs.iter().map(|p| p[0]).collect();
            let pick = argmax_first(&scores).ok_or_else(|| Error::Input("question without choices".into()))?;
            chosen.push(pick);
            golds.push(q.answer);
            preds.push(Prediction {
                id: q.id.clone(),
                gold: q.answer.into(),
                pred: pick.into(),
                scores,
            });
        }
        let mut report = MetricsReport::from_confusion(&cm, &spec.labels)?;
        report.questions = Some(golds.len());
        report.mrc_accuracy = Some(mrc_accuracy(&chosen, &golds)?);
        return Ok((report, preds));
    }

    let rows = data.encode(spec, vocab, max_len)?;
    let seqs: Vec<TokenSequence> = rows.iter().map(|r| r.0.clone()).collect();
    let probs = model.probabilities(&seqs)?;
    for ((e, (_, gold)), p) in data.examples.iter().zip(&rows).zip(probs) {
        let pred = argmax_first(&p).expect("at least two classes");
        cm.add(*gold, pred)?;
        preds.push(Prediction {
            id: e.id.clone(),
            gold: spec.labels[*gold].clone().into(),
            pred: spec.labels[pred].clone().into(),
            scores: p,
        });
    }
    Ok((MetricsReport::from_confusion(&cm, &spec.labels)?, preds))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub dev_macro_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_mrc_accuracy: Option<f64>,
}

pub struct FinetuneOutcome {
    pub model: FineTunedModel,
    pub dev_report: MetricsReport,
    pub best_epoch: usize,
    pub step: u64,
    pub history: Vec<EpochSummary>,
}

/// Trains the encoder and a fresh head with cross-entropy, keeping the epoch
/// with the best dev score.
pub fn finetune(
    encoder: EncoderWeights,
    task: TaskSpec,
    train: &TaskData,
    dev: &TaskData,
    vocab: &Vocabulary,
    config: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    config.validate()?;
    if encoder.config.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "encoder vocab_size {} does not match vocabulary of {} tokens",
            encoder.config.vocab_size,
            vocab.len()
        )));
    }
    let rows = train.encode(&task, vocab, encoder.config.max_len)?;
    if rows.is_empty() {
        return Err(Error::Input(format!("{} has no training rows", train.path.display())));
    }
    if dev.is_empty() {
        return Err(Error::Input(format!("{} has no dev rows", dev.path.display())));
    }
    let rows: Vec<(TokenSequence, usize)> = rows.into_iter().map(|(s, y)| (s.unpadded(), y)).collect();

    let head = ClassifierHead::init(encoder.config.hidden, task.classes(), config.seed)?;
    let mut model = FineTunedModel {
        encoder,
        head,
        task,
    };
    let names: Vec<String> = model
        .encoder
        .names()
        .into_iter()
        .chain(["head.weight".into(), "head.bias".into()])
        .collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut params: Vec<&Tensor> = model.encoder.tensors();
    params.extend([&model.head.weight, &model.head.bias]);
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: config.learning_rate,
            weight_decay: config.weight_decay,
            ..AdamWConfig::default()
        },
        &params,
    );

    let mut step = 0u64;
    let mut best: Option<(FineTunedModel, MetricsReport, usize)> = None;
    let mut history = Vec::new();
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut stream(config.seed, Stream::Shuffle, epoch as u64));
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let mut tape = Tape::new();
            let vars = model.encoder.bind(&mut tape, true);
            let hw = tape.param(model.head.weight.clone());
            let hb = tape.param(model.head.bias.clone());
            let mut rng = stream(config.seed, Stream::Dropout, step);
            let mut pooled = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let out = forward(&mut tape, &vars, &model.encoder.config, &rows[i].0, &mut Mode::Train(&mut rng))?;
                pooled.push(pool(&mut tape, &out, PoolingStrategy::Cls)?);
            }
            let h = tape.stack_rows(&pooled)?;
            let logits = model.head_logits(&mut tape, h, (hw, hb))?;
            let logp = tape.log_softmax_rows(logits);
            let labels: Vec<usize> = chunk.iter().map(|&i| rows[i].1).collect();
            let picked = tape.pick_per_row(logp, &labels)?;
            let mean = tape.mean(picked);
            let loss = tape.scale(mean, -1.0);
            let value = f64::from(tape.value(loss).data()[0]);
            if !value.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: format!("non-finite fine-tuning loss {value}"),
                });
            }
            tape.backward(loss)?;
            let mut vs = vars.all();
            vs.extend([hw, hb]);
            let grads: Vec<&[f32]> = vs
                .iter()
                .map(|&v| tape.grad(v).expect("trainable leaves carry gradients"))
                .collect();
            let mut params: Vec<&mut Tensor> = model.encoder.tensors_mut();
            params.extend([&mut model.head.weight, &mut model.head.bias]);
            opt.step(&mut params, &grads, &names)?;
            total += value;
            batches += 1;
        }

        let (report, _) = evaluate(&model, dev, vocab)?;
        history.push(EpochSummary {
            epoch,
            train_loss: total / batches as f64,
            dev_accuracy: report.accuracy,
            dev_macro_f1: report.macro_f1,
            dev_mrc_accuracy: report.mrc_accuracy,
        });
        let better = best
            .as_ref()
            .is_none_or(|(_, b, _)| report.selection_key() > b.selection_key());
        if better {
            best = Some((model.clone(), report, epoch));
        }
    }
    let (model, dev_report, best_epoch) = best.expect("at least one epoch");
    Ok(FinetuneOutcome {
        model,
        dev_report,
        best_epoch,
        step,
        history,
    })
}
