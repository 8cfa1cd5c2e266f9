use rand_distr::{Distribution, Normal};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::{lit, Real, Tensor};

const INIT_STD: f64 = 0.02;

/// Per-block parameters, in serialization order.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights<T: Real = f32> {
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub ln1_gain: Tensor<T>,
    pub ln1_bias: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
    pub ln2_gain: Tensor<T>,
    pub ln2_bias: Tensor<T>,
}

const LAYER_NAMES: [&str; 16] = [
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_gain", "ln1_bias", "w1", "b1", "w2",
    "b2", "ln2_gain", "ln2_bias",
];

impl<T: Real> LayerWeights<T> {
    fn tensors(&self) -> [&Tensor<T>; 16] {
        [
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln1_gain,
            &self.ln1_bias,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.ln2_gain,
            &self.ln2_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }

    fn from_iter(it: &mut impl Iterator<Item = Tensor<T>>) -> Option<Self> {
        Some(LayerWeights {
            wq: it.next()?,
            bq: it.next()?,
            wk: it.next()?,
            bk: it.next()?,
            wv: it.next()?,
            bv: it.next()?,
            wo: it.next()?,
            bo: it.next()?,
            ln1_gain: it.next()?,
            ln1_bias: it.next()?,
            w1: it.next()?,
            b1: it.next()?,
            w2: it.next()?,
            b2: it.next()?,
            ln2_gain: it.next()?,
            ln2_bias: it.next()?,
        })
    }
}

/// All learnable encoder parameters.
///
/// Serialization order: `token_emb [V×d]`, `pos_emb [max_len×d]`,
/// `emb_ln_gain [d]`, `emb_ln_bias [d]`, then for each layer `wq [d×d]`, `bq`,
/// `wk`, `bk`, `wv`, `bv`, `wo`, `bo`, `ln1_gain`, `ln1_bias`, `w1 [d×ff]`,
/// `b1 [ff]`, `w2 [ff×d]`, `b2 [d]`, `ln2_gain`, `ln2_bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderWeights<T: Real = f32> {
    pub config: EncoderConfig,
    pub token_emb: Tensor<T>,
    pub pos_emb: Tensor<T>,
    pub emb_ln_gain: Tensor<T>,
    pub emb_ln_bias: Tensor<T>,
    pub layers: Vec<LayerWeights<T>>,
}

/// Expected shape of every tensor, in serialization order.
pub(crate) fn expected_shapes(c: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let (d, f) = (c.hidden, c.ff);
    let mut out = vec![
        ("token_emb".to_owned(), vec![c.vocab_size, d]),
        ("pos_emb".to_owned(), vec![c.max_len, d]),
        ("emb_ln_gain".to_owned(), vec![d]),
        ("emb_ln_bias".to_owned(), vec![d]),
    ];
    let layer_shapes = [
        vec![d, d],
        vec![d],
        vec![d, d],
        vec![d],
        vec![d, d],
        vec![d],
        vec![d, d],
        vec![d],
        vec![d],
        vec![d],
        vec![d, f],
        vec![f],
        vec![f, d],
        vec![d],
        vec![d],
        vec![d],
    ];
    for l in 0..c.num_layers {
        for (name, shape) in LAYER_NAMES.iter().zip(&layer_shapes) {
            out.push((format!("layers.{l}.{name}"), shape.clone()));
        }
    }
    out
}

impl<T: Real> EncoderWeights<T> {
    /// Normal(0, 0.02) weights, zero biases, unit layer-norm gains.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, Stream::Init, 0);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let tensors = expected_shapes(&config)
            .into_iter()
            .map(|(name, shape)| {
                let leaf = name.rsplit('.').next().unwrap_or(&name);
                if leaf.ends_with("gain") {
                    Tensor::filled(&shape, T::one())
                } else if shape.len() == 1 {
                    Tensor::zeros(&shape)
                } else {
                    let n = shape.iter().product();
                    let data = (0..n).map(|_| lit(normal.sample(&mut rng))).collect();
                    Tensor::new(shape, data).expect("shape matches")
                }
            })
            .collect();
        Self::from_tensors(config, tensors)
    }

    pub fn from_tensors(config: EncoderConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = expected_shapes(&config);
        if tensors.len() != shapes.len() {
            return Err(Error::Format(format!(
                "expected {} encoder tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let token_emb = it.next().unwrap();
        let pos_emb = it.next().unwrap();
        let emb_ln_gain = it.next().unwrap();
        let emb_ln_bias = it.next().unwrap();
        let layers = (0..config.num_layers)
            .map(|_| LayerWeights::from_iter(&mut it).expect("count checked"))
            .collect();
        Ok(EncoderWeights {
            config,
            token_emb,
            pos_emb,
            emb_ln_gain,
            emb_ln_bias,
            layers,
        })
    }

    pub fn names(&self) -> Vec<String> {
        expected_shapes(&self.config)
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![
            &self.token_emb,
            &self.pos_emb,
            &self.emb_ln_gain,
            &self.emb_ln_bias,
        ];
        for l in &self.layers {
            out.extend(l.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![
            &mut self.token_emb,
            &mut self.pos_emb,
            &mut self.emb_ln_gain,
            &mut self.emb_ln_bias,
        ];
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn cast<U: Real>(&self) -> EncoderWeights<U> {
        let tensors = self.tensors().into_iter().map(|t| t.cast()).collect();
        EncoderWeights::from_tensors(self.config, tensors).expect("same layout")
    }

    /// Places every parameter on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> EncoderVars {
        let mut put = |t: &Tensor<T>| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let token_emb = put(&self.token_emb);
        let pos_emb = put(&self.pos_emb);
        let emb_ln_gain = put(&self.emb_ln_gain);
        let emb_ln_bias = put(&self.emb_ln_bias);
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let v: Vec<Var> = l.tensors().into_iter().map(&mut put).collect();
                LayerVars {
                    wq: v[0],
                    bq: v[1],
                    wk: v[2],
                    bk: v[3],
                    wv: v[4],
                    bv: v[5],
                    wo: v[6],
                    bo: v[7],
                    ln1_gain: v[8],
                    ln1_bias: v[9],
                    w1: v[10],
                    b1: v[11],
                    w2: v[12],
                    b2: v[13],
                    ln2_gain: v[14],
                    ln2_bias: v[15],
                }
            })
            .collect();
        EncoderVars {
            token_emb,
            pos_emb,
            emb_ln_gain,
            emb_ln_bias,
            layers,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
}

/// Tape handles for an [`EncoderWeights`], same order as its tensors.
#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub token_emb: Var,
    pub pos_emb: Var,
    pub emb_ln_gain: Var,
    pub emb_ln_bias: Var,
    pub layers: Vec<LayerVars>,
}

impl EncoderVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.token_emb, self.pos_emb, self.emb_ln_gain, self.emb_ln_bias];
        for l in &self.layers {
            out.extend([
                l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo, l.ln1_gain, l.ln1_bias, l.w1,
                l.b1, l.w2, l.b2, l.ln2_gain, l.ln2_bias,
            ]);
        }
        out
    }
}
