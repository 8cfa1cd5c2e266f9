use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{lit, Real, Tensor};
use crate::text::vocab::{Vocabulary, MASK};
use crate::text::TokenSequence;

/// In-batch contrastive loss over `[N×d]` anchors, positives and hard
/// negatives.
///
/// Row `i` is scored against every positive and every hard negative in the
/// batch; the target is its own positive. Rows are compared by cosine
/// similarity scaled by `1/tau`, and the per-row losses are averaged.
pub fn contrastive_loss<T: Real>(
    tape: &mut Tape<T>,
    anchors: Var,
    positives: Var,
    negatives: Var,
    tau: f64,
) -> Result<Var> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let (n, d) = tape.dims2("contrastive_loss", anchors)?;
    for v in [positives, negatives] {
        if tape.shape(v) != [n, d] {
            return Err(Error::dim("contrastive_loss", &[n, d], tape.shape(v)));
        }
    }
    let a = tape.normalize_rows(anchors)?;
    let p = tape.normalize_rows(positives)?;
    let q = tape.normalize_rows(negatives)?;
    let pt = tape.transpose(p)?;
    let qt = tape.transpose(q)?;
    let sp = tape.matmul(a, pt)?;
    let sn = tape.matmul(a, qt)?;
    let logits = tape.concat_cols(&[sp, sn])?;
    let logits = tape.scale(logits, lit(1.0 / tau));
    let logp = tape.log_softmax_rows(logits);
    let diag: Vec<usize> = (0..n).collect();
    let picked = tape.pick_per_row(logp, &diag)?;
    let m = tape.mean(picked);
    Ok(tape.scale(m, -T::one()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskTarget {
    pub position: usize,
    pub id: usize,
}

/// Replaces each maskable token with `[MASK]` independently with probability
/// `rate`. Special tokens and padding are never selected; `[UNK]` is.
pub fn mask_for_mlm(
    seq: &TokenSequence,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(TokenSequence, Vec<MaskTarget>)> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::Config(format!("masking rate must be in (0, 1), got {rate}")));
    }
    let mut out = seq.clone();
    let mut targets = Vec::new();
    for (i, (&id, &m)) in seq.ids.iter().zip(&seq.attention_mask).enumerate() {
        if m == 0 || Vocabulary::is_special(id) {
            continue;
        }
        if rng.gen::<f64>() < rate {
            out.ids[i] = MASK;
            targets.push(MaskTarget { position: i, id });
        }
    }
    Ok((out, targets))
}

/// Summed cross-entropy of the masked positions of one sequence, predicting
/// with the tied token-embedding matrix. `None` when nothing was masked.
pub fn mlm_loss_sum<T: Real>(
    tape: &mut Tape<T>,
    last: Var,
    targets: &[MaskTarget],
    token_emb: Var,
) -> Result<Option<Var>> {
    if targets.is_empty() {
        return Ok(None);
    }
    let positions: Vec<usize> = targets.iter().map(|t| t.position).collect();
    let ids: Vec<usize> = targets.iter().map(|t| t.id).collect();
    let states = tape.rows(last, &positions)?;
    let et = tape.transpose(token_emb)?;
    let logits = tape.matmul(states, et)?;
    let logp = tape.log_softmax_rows(logits);
    let picked = tape.pick_per_row(logp, &ids)?;
    let s = tape.sum(picked);
    Ok(Some(tape.scale(s, -T::one())))
}

/// Mean cross-entropy over every masked position of every sequence; zero when
/// nothing was masked.
pub fn mlm_loss<T: Real>(
    tape: &mut Tape<T>,
    per_sequence: &[(Var, &[MaskTarget])],
    token_emb: Var,
) -> Result<Var> {
    let mut total: Option<Var> = None;
    let mut count = 0usize;
    for &(last, targets) in per_sequence {
        if let Some(s) = mlm_loss_sum(tape, last, targets, token_emb)? {
            count += targets.len();
            total = Some(match total {
                Some(t) => tape.add(t, s)?,
                None => s,
            });
        }
    }
    Ok(match total {
        Some(t) => tape.scale(t, lit(1.0 / count as f64)),
        None => tape.constant(Tensor::scalar(T::zero())),
    })
}
