use rand::seq::SliceRandom;

use crate::checkpoint::{Checkpoint, CheckpointKind};
use crate::encoder::{forward, pool, EncoderConfig, EncoderWeights, Mode};
use crate::error::{Error, Result};
use crate::optim::{AdamW, AdamWConfig};
use crate::pretrain::{
    contrastive_loss, mask_for_mlm, mlm_loss, LossRecord, MaskTarget, PretrainConfig, Split,
};
use crate::rng::{stream, Stream};
use crate::tape::{Tape, Var};
use crate::text::nli::ContrastiveTriple;
use crate::text::tokenizer::encode_single;
use crate::text::{TokenSequence, Vocabulary};

/// Validation masks use their own index range so they never collide with the
/// per-step training masks.
const VALIDATION_MASK_BASE: u64 = 1 << 48;

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LossRecord>,
}

/// The first `ceil(fraction·n)` entries of a seeded permutation, in index
/// order. Smaller fractions select subsets of larger ones.
pub fn subsample_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(seed, Stream::Subsample, 0));
    let keep = ((fraction * n as f64).ceil() as usize).clamp(n.min(1), n);
    let mut out = perm[..keep].to_vec();
    out.sort_unstable();
    out
}

/// Seeded (train, validation) partition of `selected`. At least one item
/// always stays in the training part.
pub fn split_indices(selected: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut perm = selected.to_vec();
    perm.shuffle(&mut stream(seed, Stream::Split, 0));
    let n_val = ((fraction * perm.len() as f64).floor() as usize).min(perm.len().saturating_sub(1));
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

fn encode_triples(
    triples: &[ContrastiveTriple],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<[TokenSequence; 3]>> {
    triples
        .iter()
        .map(|t| {
            let enc = |s: &str| encode_single(s, vocab, max_len).map(|q| q.unpadded());
            Ok([enc(&t.sentence1)?, enc(&t.sentence2)?, enc(&t.hard_neg)?])
        })
        .collect()
}

struct Trainer<'a> {
    config: &'a PretrainConfig,
    weights: EncoderWeights,
    optimizer: AdamW,
    names: Vec<String>,
    step: u64,
}

struct BatchLoss {
    contrastive: f64,
    mlm: f64,
}

impl Trainer<'_> {
    /// Forward pass for one batch. With `train` the tape holds trainable
    /// parameters and the returned var is the combined loss.
    fn batch_loss(
        &self,
        tape: &mut Tape<f32>,
        batch: &[&[TokenSequence; 3]],
        train: bool,
        mask_index: u64,
    ) -> Result<(Var, BatchLoss, Vec<Var>)> {
        let cfg = self.config;
        let vars = self.weights.bind(tape, train);
        let mut dropout_rng = stream(cfg.seed, Stream::Dropout, self.step);
        let mut pooled: [Vec<Var>; 3] = Default::default();
        for triple in batch {
            for (k, seq) in triple.iter().enumerate() {
                let mut mode = if train {
                    Mode::Train(&mut dropout_rng)
                } else {
                    Mode::Eval
                };
                let out = forward(tape, &vars, &self.weights.config, seq, &mut mode)?;
                pooled[k].push(pool(tape, &out, cfg.pooling)?);
            }
        }
        let a = tape.stack_rows(&pooled[0])?;
        let p = tape.stack_rows(&pooled[1])?;
        let n = tape.stack_rows(&pooled[2])?;
        let cl = contrastive_loss(tape, a, p, n, cfg.temperature)?;
        let cl_value = f64::from(tape.value(cl).data()[0]);

        let mut loss = cl;
        let mut mlm_value = 0.0;
        if cfg.mlm_weight > 0.0 {
            let mut mask_rng = stream(cfg.seed, Stream::Mask, mask_index);
            let mut masked: Vec<(Var, Vec<MaskTarget>)> = Vec::new();
            for triple in batch {
                for seq in triple.iter() {
                    let (corrupt, targets) = mask_for_mlm(seq, cfg.masking_rate, &mut mask_rng)?;
                    if targets.is_empty() {
                        continue;
                    }
                    let mut mode = if train {
                        Mode::Train(&mut dropout_rng)
                    } else {
                        Mode::Eval
                    };
                    let out = forward(tape, &vars, &self.weights.config, &corrupt, &mut mode)?;
                    masked.push((out.last(), targets));
                }
            }
            let refs: Vec<(Var, &[MaskTarget])> =
                masked.iter().map(|(v, t)| (*v, t.as_slice())).collect();
            let mlm = mlm_loss(tape, &refs, vars.token_emb)?;
            mlm_value = f64::from(tape.value(mlm).data()[0]);
            let weighted = tape.scale(mlm, cfg.mlm_weight as f32);
            loss = tape.add(cl, weighted)?;
        }
        if !cl_value.is_finite() || !mlm_value.is_finite() {
            return Err(Error::Divergence {
                step: self.step,
                detail: format!("non-finite loss (contrastive {cl_value}, mlm {mlm_value})"),
            });
        }
        Ok((
            loss,
            BatchLoss {
                contrastive: cl_value,
                mlm: mlm_value,
            },
            vars.all(),
        ))
    }

    fn train_step(&mut self, batch: &[&[TokenSequence; 3]]) -> Result<BatchLoss> {
        self.step += 1;
        let mut tape = Tape::new();
        let (loss, values, vars) = self.batch_loss(&mut tape, batch, true, self.step)?;
        tape.backward(loss)?;
        let grads: Vec<&[f32]> = vars
            .iter()
            .map(|&v| tape.grad(v).expect("trainable leaves carry gradients"))
            .collect();
        let names: Vec<&str> = self.names.iter().map(String::as_str).collect();
        self.optimizer
            .step(&mut self.weights.tensors_mut(), &grads, &names)
            .map_err(|e| match e {
                Error::Divergence { detail, .. } => Error::Divergence {
                    step: self.step,
                    detail,
                },
                other => other,
            })?;
        Ok(values)
    }

    fn evaluate(&self, data: &[&[TokenSequence; 3]]) -> Result<(f64, f64)> {
        let mut cl = 0.0;
        let mut mlm = 0.0;
        let chunks: Vec<_> = data.chunks(self.config.batch_size).collect();
        for (i, batch) in chunks.iter().enumerate() {
            let mut tape = Tape::new();
            let (_, v, _) = self.batch_loss(&mut tape, batch, false, VALIDATION_MASK_BASE + i as u64)?;
            cl += v.contrastive;
            mlm += v.mlm;
        }
        let n = chunks.len() as f64;
        Ok((cl / n, mlm / n))
    }
}

/// Pretrains a freshly initialised encoder on `triples`.
pub fn train(
    triples: &[ContrastiveTriple],
    vocab: &Vocabulary,
    encoder: EncoderConfig,
    config: &PretrainConfig,
) -> Result<TrainOutcome> {
    let weights = EncoderWeights::init(encoder, config.seed)?;
    run(triples, vocab, weights, None, 0, 0, config)
}

/// Continues a pretraining checkpoint up to `config.epochs`.
pub fn resume(
    triples: &[ContrastiveTriple],
    vocab: &Vocabulary,
    checkpoint: Checkpoint,
    config: &PretrainConfig,
) -> Result<TrainOutcome> {
    if checkpoint.kind != CheckpointKind::Pretrain {
        return Err(Error::Config("only pretraining checkpoints can be resumed".into()));
    }
    if checkpoint.vocab_hash != vocab.hash() {
        return Err(Error::Config("checkpoint was trained with a different vocabulary".into()));
    }
    let (step, epoch) = (checkpoint.step, checkpoint.epoch);
    run(
        triples,
        vocab,
        checkpoint.encoder,
        checkpoint.optimizer,
        step,
        epoch,
        config,
    )
}

fn run(
    triples: &[ContrastiveTriple],
    vocab: &Vocabulary,
    weights: EncoderWeights,
    optimizer: Option<AdamW>,
    step: u64,
    start_epoch: usize,
    config: &PretrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    weights.config.validate()?;
    if triples.is_empty() {
        return Err(Error::Input("no training triples".into()));
    }
    if weights.config.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "encoder vocab_size {} does not match vocabulary of {} tokens",
            weights.config.vocab_size,
            vocab.len()
        )));
    }
    let adam = AdamWConfig {
        lr: config.learning_rate,
        weight_decay: config.weight_decay,
        ..AdamWConfig::default()
    };
    let optimizer = match optimizer {
        Some(mut o) => {
            o.config = adam;
            o
        }
        None => AdamW::new(adam, &weights.tensors()),
    };

    let encoded = encode_triples(triples, vocab, weights.config.max_len)?;
    let selected = subsample_indices(triples.len(), config.data_fraction, config.seed);
    let (train_idx, val_idx) = split_indices(&selected, config.validation_fraction, config.seed);
    let val: Vec<&[TokenSequence; 3]> = val_idx.iter().map(|&i| &encoded[i]).collect();

    let names = weights.names();
    let mut trainer = Trainer {
        config,
        weights,
        optimizer,
        names,
        step,
    };
    let mut log = Vec::new();
    for epoch in start_epoch + 1..=config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut stream(config.seed, Stream::Shuffle, epoch as u64));
        let (mut cl, mut mlm, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&[TokenSequence; 3]> = chunk.iter().map(|&i| &encoded[i]).collect();
            let v = trainer.train_step(&batch)?;
            cl += v.contrastive;
            mlm += v.mlm;
            batches += 1;
        }
        let n = batches as f64;
        log.push(LossRecord::new(
            epoch,
            trainer.step,
            Split::Train,
            cl / n,
            mlm / n,
            config.mlm_weight,
        ));
        if !val.is_empty() {
            let (vc, vm) = trainer.evaluate(&val)?;
            log.push(LossRecord::new(
                epoch,
                trainer.step,
                Split::Validation,
                vc,
                vm,
                config.mlm_weight,
            ));
        }
    }

    let epoch = config.epochs.max(start_epoch);
    let checkpoint = Checkpoint::pretrain(
        trainer.weights,
        *config,
        vocab.hash(),
        trainer.step,
        epoch,
        trainer.optimizer,
    );
    Ok(TrainOutcome { checkpoint, log })
}
