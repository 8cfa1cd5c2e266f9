//! Transformer encoder: embeddings, post-norm attention blocks and pooling.

mod forward;
mod pooling;
mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::Real;
use crate::text::TokenSequence;

pub use forward::{forward, LayerOutputs, Mode};
pub use pooling::pool;
pub(crate) use weights::expected_shapes;
pub use weights::{EncoderVars, EncoderWeights, LayerVars, LayerWeights};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden: usize,
    pub ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            num_layers: 4,
            num_heads: 4,
            hidden: 64,
            ff: 256,
            vocab_size: 0,
            max_len: 64,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    /// The 2-layer, width-16, 2-head shape used for gradient checks.
    pub fn micro(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 2,
            num_heads: 2,
            hidden: 16,
            ff: 32,
            vocab_size,
            max_len: 16,
            dropout: 0.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("hidden", self.hidden),
            ("ff", self.ff),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("encoder {name} must be positive")));
        }
        if !self.hidden.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingStrategy {
    /// Last-layer state at position 0.
    #[default]
    Cls,
    /// Masked mean of last-layer token states.
    Mean,
    /// Masked mean of the average of the first and last layers.
    FirstLast,
    /// Masked mean of the average of the top two layers.
    Top2,
}

impl PoolingStrategy {
    pub const ALL: [PoolingStrategy; 4] = [
        PoolingStrategy::Cls,
        PoolingStrategy::Mean,
        PoolingStrategy::FirstLast,
        PoolingStrategy::Top2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PoolingStrategy::Cls => "cls",
            PoolingStrategy::Mean => "mean",
            PoolingStrategy::FirstLast => "first_last",
            PoolingStrategy::Top2 => "top2",
        }
    }
}

impl fmt::Display for PoolingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cls" => Ok(PoolingStrategy::Cls),
            "mean" => Ok(PoolingStrategy::Mean),
            "first_last" | "firstlast" => Ok(PoolingStrategy::FirstLast),
            "top2" | "top_2" => Ok(PoolingStrategy::Top2),
            other => Err(Error::Config(format!("unknown pooling strategy `{other}`"))),
        }
    }
}

impl<T: Real> EncoderWeights<T> {
    /// Pooled eval-mode embeddings, one per sequence.
    pub fn embed_batch(
        &self,
        seqs: &[TokenSequence],
        strategy: PoolingStrategy,
    ) -> Result<Vec<Vec<T>>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let mark = tape.len();
        let mut out = Vec::with_capacity(seqs.len());
        for seq in seqs {
            let layers = forward(&mut tape, &vars, &self.config, seq, &mut Mode::Eval)?;
            let h = pool(&mut tape, &layers, strategy)?;
            out.push(tape.value(h).data().to_vec());
            tape.truncate(mark);
        }
        Ok(out)
    }

    pub fn embed(&self, seq: &TokenSequence, strategy: PoolingStrategy) -> Result<Vec<T>> {
        Ok(self
            .embed_batch(std::slice::from_ref(seq), strategy)?
            .pop()
            .expect("one sequence in, one out"))
    }
}
