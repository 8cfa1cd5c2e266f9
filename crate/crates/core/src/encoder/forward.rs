use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{EncoderConfig, EncoderVars};
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{lit, Real, Tensor};
use crate::text::TokenSequence;

/// Evaluation is deterministic; training draws dropout masks from the given
/// stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// Hidden states of every layer (index 0 is the embedding layer) and the
/// attention probabilities of every block, each `[heads × seq × seq]`.
#[derive(Debug)]
pub struct LayerOutputs<T: Real = f32> {
    pub hidden: Vec<Var>,
    pub attention: Vec<Tensor<T>>,
    pub mask: Vec<u8>,
}

impl<T: Real> LayerOutputs<T> {
    pub fn last(&self) -> Var {
        *self.hidden.last().expect("at least the embedding layer")
    }
}

fn dropout<T: Real>(tape: &mut Tape<T>, x: Var, rate: f64, mode: &mut Mode<'_>) -> Result<Var> {
    let Mode::Train(rng) = mode else {
        return Ok(x);
    };
    if rate <= 0.0 {
        return Ok(x);
    }
    let n = tape.value(x).numel();
    let keep: T = lit(1.0 / (1.0 - rate));
    let mask = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    tape.mul_const(x, mask)
}

pub fn forward<T: Real>(
    tape: &mut Tape<T>,
    vars: &EncoderVars,
    config: &EncoderConfig,
    seq: &TokenSequence,
    mode: &mut Mode<'_>,
) -> Result<LayerOutputs<T>> {
    let n = seq.len();
    if n == 0 {
        return Err(Error::Degenerate("cannot encode an empty sequence".into()));
    }
    if n > config.max_len {
        return Err(Error::Input(format!(
            "sequence length {n} exceeds max_len {}",
            config.max_len
        )));
    }
    if seq.attention_mask.len() != n {
        return Err(Error::dim("forward", &[n], &[seq.attention_mask.len()]));
    }
    let keep: Vec<bool> = seq.attention_mask.iter().map(|&m| m == 1).collect();
    let positions: Vec<usize> = (0..n).collect();
    let (d, heads) = (config.hidden, config.num_heads);
    let dh = config.head_dim();
    let inv_sqrt: T = lit(1.0 / (dh as f64).sqrt());

    let tok = tape.gather(vars.token_emb, &seq.ids)?;
    let pos = tape.gather(vars.pos_emb, &positions)?;
    let x = tape.add(tok, pos)?;
    let x = tape.layer_norm(x, vars.emb_ln_gain, vars.emb_ln_bias)?;
    let mut x = dropout(tape, x, config.dropout, mode)?;

    let mut hidden = vec![x];
    let mut attention = Vec::with_capacity(vars.layers.len());
    for lv in &vars.layers {
        let q = tape.matmul(x, lv.wq)?;
        let q = tape.add_row(q, lv.bq)?;
        let k = tape.matmul(x, lv.wk)?;
        let k = tape.add_row(k, lv.bk)?;
        let v = tape.matmul(x, lv.wv)?;
        let v = tape.add_row(v, lv.bv)?;

        let mut head_out = Vec::with_capacity(heads);
        let mut probs = Vec::with_capacity(heads * n * n);
        for h in 0..heads {
            let qh = tape.cols(q, h * dh, dh)?;
            let kh = tape.cols(k, h * dh, dh)?;
            let vh = tape.cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, inv_sqrt);
            let p = tape.masked_softmax_rows(scores, &keep)?;
            probs.extend_from_slice(tape.value(p).data());
            head_out.push(tape.matmul(p, vh)?);
        }
        attention.push(Tensor::new(vec![heads, n, n], probs)?);

        let o = tape.concat_cols(&head_out)?;
        let a = tape.matmul(o, lv.wo)?;
        let a = tape.add_row(a, lv.bo)?;
        let a = dropout(tape, a, config.dropout, mode)?;
        let r = tape.add(x, a)?;
        x = tape.layer_norm(r, lv.ln1_gain, lv.ln1_bias)?;

        let f = tape.matmul(x, lv.w1)?;
        let f = tape.add_row(f, lv.b1)?;
        let f = tape.gelu(f);
        let f = tape.matmul(f, lv.w2)?;
        let f = tape.add_row(f, lv.b2)?;
        let f = dropout(tape, f, config.dropout, mode)?;
        let r = tape.add(x, f)?;
        x = tape.layer_norm(r, lv.ln2_gain, lv.ln2_bias)?;
        debug_assert_eq!(tape.shape(x), &[n, d]);
        hidden.push(x);
    }

    Ok(LayerOutputs {
        hidden,
        attention,
        mask: seq.attention_mask.clone(),
    })
}
