//! Central finite-difference gradient checks in f64.

use contrasent::encoder::{forward, pool, EncoderConfig, EncoderWeights, Mode, PoolingStrategy};
use contrasent::pretrain::{contrastive_loss, mask_for_mlm, mlm_loss, MaskTarget};
use contrasent::tape::{Tape, Var};
use contrasent::tensor::Tensor;
use contrasent::text::TokenSequence;
use contrasent::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-3;
/// Gradient magnitude below which errors are measured absolutely. Central
/// differences carry an O(h²) truncation term that is not proportional to
/// the gradient, so a vanishing component cannot be checked relatively.
pub const FLOOR: f64 = 1e-2;
pub const SEEDS: u64 = 100;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

type Build = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

pub struct Case {
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
}

pub struct OpCheck {
    pub name: &'static str,
    pub setup: fn(&mut ChaCha8Rng) -> Case,
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..=4)
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

fn row_std(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn case(inputs: Vec<Tensor<f64>>, build: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'static) -> Case {
    Case {
        inputs,
        build: Box::new(build),
    }
}

/// Scalar `Σ r ⊙ f(inputs)` with a fixed random `r`.
fn projected(case: &Case, r: &[f64], inputs: &[Tensor<f64>], tape: &mut Tape<f64>) -> Result<(Var, Vec<Var>)> {
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let y = (case.build)(tape, &vars)?;
    let y = tape.mul_const(y, r.to_vec())?;
    Ok((tape.sum(y), vars))
}

/// Largest relative error over every input coordinate.
pub fn check_case(case: &Case, rng: &mut ChaCha8Rng) -> Result<f64> {
    check_case_with(case, rng, H)
}

pub fn check_case_with(case: &Case, rng: &mut ChaCha8Rng, h: f64) -> Result<f64> {
    let numel = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = case.inputs.iter().map(|t| tape.param(t.clone())).collect();
        let y = (case.build)(&mut tape, &vars)?;
        tape.value(y).numel()
    };
    let r: Vec<f64> = (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut tape = Tape::new();
    let (loss, vars) = projected(case, &r, &case.inputs, &mut tape)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map_or_else(|| vec![0.0; tape.value(v).numel()], <[f64]>::to_vec))
        .collect();

    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let (loss, _) = projected(case, &r, inputs, &mut tape)?;
        Ok(tape.value(loss).data()[0])
    };
    let mut worst = 0.0f64;
    for (i, t) in case.inputs.iter().enumerate() {
        for j in 0..t.numel() {
            let mut inputs = case.inputs.clone();
            inputs[i].data_mut()[j] += h;
            let up = eval(&inputs)?;
            inputs[i].data_mut()[j] -= 2.0 * h;
            let down = eval(&inputs)?;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_error(analytic[i][j], numeric));
        }
    }
    Ok(worst)
}

pub fn check_op(op: &OpCheck, seeds: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = (op.setup)(&mut rng);
        worst = worst.max(check_case(&case, &mut rng)?);
    }
    Ok(worst)
}

pub fn ops() -> Vec<OpCheck> {
    vec![
        OpCheck {
            name: "matmul",
            setup: |rng| {
                let (m, k, n) = (dim(rng), dim(rng), dim(rng));
                case(vec![random(rng, &[m, k]), random(rng, &[k, n])], |t, v| t.matmul(v[0], v[1]))
            },
        },
        OpCheck {
            name: "transpose",
            setup: |rng| {
                let s = [dim(rng), dim(rng)];
                case(vec![random(rng, &s)], |t, v| t.transpose(v[0]))
            },
        },
        OpCheck {
            name: "add",
            setup: |rng| {
                let s = [dim(rng), dim(rng)];
                case(vec![random(rng, &s), random(rng, &s)], |t, v| t.add(v[0], v[1]))
            },
        },
        OpCheck {
            name: "add_row",
            setup: |rng| {
                let (m, n) = (dim(rng), dim(rng));
                case(vec![random(rng, &[m, n]), random(rng, &[n])], |t, v| t.add_row(v[0], v[1]))
            },
        },
        OpCheck {
            name: "mul",
            setup: |rng| {
                let s = [dim(rng), dim(rng)];
                case(vec![random(rng, &s), random(rng, &s)], |t, v| t.mul(v[0], v[1]))
            },
        },
        OpCheck {
            name: "mul_const",
            setup: |rng| {
                let s = [dim(rng), dim(rng)];
                let c = random(rng, &s).into_data();
                case(vec![random(rng, &s)], move |t, v| t.mul_const(v[0], c.clone()))
            },
        },
        OpCheck {
            name: "scale",
            setup: |rng| {
                let s = [dim(rng), dim(rng)];
                let k = rng.gen_range(-3.0..3.0);
                case(vec![random(rng, &s)], move |t, v| Ok(t.scale(v[0], k)))
            },
        },
        OpCheck {
            name: "gelu",
            setup: |rng| {
                let s = [dim(rng), dim(rng)];
                case(vec![random(rng, &s)], |t, v| Ok(t.gelu(v[0])))
            },
        },
        OpCheck {
            name: "softmax",
            setup: |rng| {
                let s = [dim(rng), dim(rng) + 1, dim(rng)];
                let axis = rng.gen_range(0..3);
                case(vec![random(rng, &s)], move |t, v| t.softmax(v[0], axis))
            },
        },
        OpCheck {
            name: "masked_softmax_rows",
            setup: |rng| {
                let (m, n) = (dim(rng), dim(rng) + 1);
                let mut keep: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
                keep[rng.gen_range(0..n)] = true;
                case(vec![random(rng, &[m, n])], move |t, v| t.masked_softmax_rows(v[0], &keep))
            },
        },
        OpCheck {
            name: "log_softmax_rows",
            setup: |rng| {
                let s = [dim(rng), dim(rng) + 1];
                case(vec![random(rng, &s)], |t, v| Ok(t.log_softmax_rows(v[0])))
            },
        },
        OpCheck {
            name: "layer_norm",
            setup: |rng| {
                let (m, n) = (dim(rng), dim(rng) + 1);
                // Rows whose spread is comparable to the step make the central
                // difference itself inaccurate, so they are redrawn.
                let x = loop {
                    let x = random(rng, &[m, n]);
                    if (0..m).all(|i| row_std(x.row(i)) > 0.25) {
                        break x;
                    }
                };
                case(
                    vec![x, random(rng, &[n]), random(rng, &[n])],
                    |t, v| t.layer_norm(v[0], v[1], v[2]),
                )
            },
        },
        OpCheck {
            name: "gather",
            setup: |rng| {
                let (vocab, d, n) = (dim(rng) + 1, dim(rng), dim(rng) + 1);
                let ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..vocab)).collect();
                case(vec![random(rng, &[vocab, d])], move |t, v| t.gather(v[0], &ids))
            },
        },
        OpCheck {
            name: "rows",
            setup: |rng| {
                let (m, d, n) = (dim(rng), dim(rng), dim(rng));
                let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
                case(vec![random(rng, &[m, d])], move |t, v| t.rows(v[0], &idx))
            },
        },
        OpCheck {
            name: "cols",
            setup: |rng| {
                let (m, n) = (dim(rng), dim(rng) + 1);
                let start = rng.gen_range(0..n);
                let width = rng.gen_range(1..=n - start);
                case(vec![random(rng, &[m, n])], move |t, v| t.cols(v[0], start, width))
            },
        },
        OpCheck {
            name: "concat_cols",
            setup: |rng| {
                let m = dim(rng);
                let parts: Vec<Tensor<f64>> = (0..rng.gen_range(1..=3)).map(|_| {
                    let w = dim(rng);
                    random(rng, &[m, w])
                }).collect();
                case(parts, |t, v| t.concat_cols(v))
            },
        },
        OpCheck {
            name: "stack_rows",
            setup: |rng| {
                let d = dim(rng);
                let parts: Vec<Tensor<f64>> = (0..dim(rng)).map(|_| random(rng, &[d])).collect();
                case(parts, |t, v| t.stack_rows(v))
            },
        },
        OpCheck {
            name: "weighted_sum_rows",
            setup: |rng| {
                let (m, d) = (dim(rng), dim(rng));
                let w = random(rng, &[m]).into_data();
                case(vec![random(rng, &[m, d])], move |t, v| t.weighted_sum_rows(v[0], w.clone()))
            },
        },
        OpCheck {
            name: "cosine",
            setup: |rng| {
                let d = dim(rng) + 1;
                case(vec![random(rng, &[d]), random(rng, &[d])], |t, v| t.cosine(v[0], v[1]))
            },
        },
        OpCheck {
            name: "normalize_rows",
            setup: |rng| {
                let s = [dim(rng), dim(rng) + 1];
                case(vec![random(rng, &s)], |t, v| t.normalize_rows(v[0]))
            },
        },
        OpCheck {
            name: "pick_per_row",
            setup: |rng| {
                let (m, n) = (dim(rng), dim(rng));
                let cols: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
                case(vec![random(rng, &[m, n])], move |t, v| t.pick_per_row(v[0], &cols))
            },
        },
        OpCheck {
            name: "sum",
            setup: |rng| {
                let s = [dim(rng), dim(rng)];
                case(vec![random(rng, &s)], |t, v| Ok(t.sum(v[0])))
            },
        },
        OpCheck {
            name: "mean",
            setup: |rng| {
                let s = [dim(rng), dim(rng)];
                case(vec![random(rng, &s)], |t, v| Ok(t.mean(v[0])))
            },
        },
        OpCheck {
            name: "reshape",
            setup: |rng| {
                let (m, n) = (dim(rng), dim(rng));
                case(vec![random(rng, &[m, n])], move |t, v| t.reshape(v[0], vec![n * m]))
            },
        },
        OpCheck {
            name: "contrastive_loss",
            setup: |rng| {
                let (n, d) = (dim(rng), dim(rng) + 1);
                let tau = *[0.05, 0.1, 0.5, 1.0].choose(rng).unwrap();
                case(
                    vec![random(rng, &[n, d]), random(rng, &[n, d]), random(rng, &[n, d])],
                    move |t, v| contrastive_loss(t, v[0], v[1], v[2], tau),
                )
            },
        },
        OpCheck {
            name: "mlm_loss",
            setup: |rng| {
                let (vocab, d) = (dim(rng) + 2, dim(rng));
                let seqs: Vec<(usize, Vec<MaskTarget>)> = (0..dim(rng))
                    .map(|_| {
                        let len = dim(rng) + 1;
                        let k = rng.gen_range(0..=len.min(3));
                        let mut pos: Vec<usize> = (0..len).collect();
                        pos.shuffle(rng);
                        let targets = pos[..k]
                            .iter()
                            .map(|&p| MaskTarget {
                                position: p,
                                id: rng.gen_range(0..vocab),
                            })
                            .collect();
                        (len, targets)
                    })
                    .collect();
                let mut inputs = vec![random(rng, &[vocab, d])];
                inputs.extend(seqs.iter().map(|(len, _)| random(rng, &[*len, d])));
                case(inputs, move |t, v| {
                    let per: Vec<(Var, &[MaskTarget])> =
                        seqs.iter().zip(&v[1..]).map(|((_, m), &s)| (s, m.as_slice())).collect();
                    mlm_loss(t, &per, v[0])
                })
            },
        },
    ]
}

/// One random batch for the micro-encoder check.
pub struct EncoderCase {
    pub weights: EncoderWeights<f64>,
    pub triples: Vec<[TokenSequence; 3]>,
    pub masked: Vec<(TokenSequence, Vec<MaskTarget>)>,
    pub pooling: PoolingStrategy,
    pub tau: f64,
    pub mlm_weight: f64,
}

pub const MICRO_VOCAB: usize = 14;

fn random_sentence(rng: &mut ChaCha8Rng) -> TokenSequence {
    let n = rng.gen_range(1..=4);
    let mut ids = vec![1];
    ids.extend((0..n).map(|_| rng.gen_range(3..MICRO_VOCAB)));
    ids.push(2);
    let mut seq = TokenSequence::from_ids(ids);
    if rng.gen_bool(0.3) {
        seq = seq.pad_to(seq.len() + 2);
    }
    seq
}

impl EncoderCase {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = EncoderConfig::micro(MICRO_VOCAB);
        // Spread the parameters well past the init scale so gradients are
        // large enough to be compared relatively.
        let mut weights = EncoderWeights::<f64>::init(config, seed).unwrap();
        for t in weights.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x += rng.gen_range(-0.4..0.4));
        }
        let triples: Vec<[TokenSequence; 3]> = (0..2)
            .map(|_| [random_sentence(&mut rng), random_sentence(&mut rng), random_sentence(&mut rng)])
            .collect();
        let mut masked = Vec::new();
        for seq in triples.iter().flatten() {
            let (corrupt, targets) = mask_for_mlm(seq, 0.4, &mut rng).unwrap();
            if !targets.is_empty() {
                masked.push((corrupt, targets));
            }
        }
        EncoderCase {
            weights,
            triples,
            masked,
            pooling: *PoolingStrategy::ALL.choose(&mut rng).unwrap(),
            tau: *[0.05, 0.5, 1.0].choose(&mut rng).unwrap(),
            mlm_weight: *[0.0, 0.1, 1.0].choose(&mut rng).unwrap(),
        }
    }

    fn loss(&self, weights: &EncoderWeights<f64>, tape: &mut Tape<f64>) -> Result<(Var, Vec<Var>)> {
        let vars = weights.bind(tape, true);
        let mut pooled: [Vec<Var>; 3] = Default::default();
        for t in &self.triples {
            for (k, seq) in t.iter().enumerate() {
                let out = forward(tape, &vars, &weights.config, seq, &mut Mode::Eval)?;
                pooled[k].push(pool(tape, &out, self.pooling)?);
            }
        }
        let a = tape.stack_rows(&pooled[0])?;
        let p = tape.stack_rows(&pooled[1])?;
        let n = tape.stack_rows(&pooled[2])?;
        let mut loss = contrastive_loss(tape, a, p, n, self.tau)?;
        if self.mlm_weight > 0.0 {
            let mut lasts = Vec::new();
            for (seq, _) in &self.masked {
                lasts.push(forward(tape, &vars, &weights.config, seq, &mut Mode::Eval)?.last());
            }
            let per: Vec<(Var, &[MaskTarget])> =
                lasts.iter().zip(&self.masked).map(|(&l, (_, m))| (l, m.as_slice())).collect();
            let mlm = mlm_loss(tape, &per, vars.token_emb)?;
            let mlm = tape.scale(mlm, self.mlm_weight);
            loss = tape.add(loss, mlm)?;
        }
        Ok((loss, vars.all()))
    }

    fn value(&self, weights: &EncoderWeights<f64>) -> Result<f64> {
        let mut tape = Tape::new();
        let (loss, _) = self.loss(weights, &mut tape)?;
        Ok(tape.value(loss).data()[0])
    }

    /// Worst relative error over `coords` random parameter coordinates.
    pub fn check(&self, coords: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
        let mut tape = Tape::new();
        let (loss, vars) = self.loss(&self.weights, &mut tape)?;
        tape.backward(loss)?;
        let grads: Vec<Vec<f64>> = vars
            .iter()
            .map(|&v| tape.grad(v).map_or_else(|| vec![0.0; tape.value(v).numel()], <[f64]>::to_vec))
            .collect();
        let sizes: Vec<usize> = grads.iter().map(Vec::len).collect();
        let total: usize = sizes.iter().sum();
        let mut worst = 0.0f64;
        for _ in 0..coords {
            let mut flat = rng.gen_range(0..total);
            let mut t = 0;
            while flat >= sizes[t] {
                flat -= sizes[t];
                t += 1;
            }
            let mut w = self.weights.clone();
            w.tensors_mut()[t].data_mut()[flat] += H;
            let up = self.value(&w)?;
            w.tensors_mut()[t].data_mut()[flat] -= 2.0 * H;
            let down = self.value(&w)?;
            worst = worst.max(rel_error(grads[t][flat], (up - down) / (2.0 * H)));
        }
        Ok(worst)
    }
}

pub const ENCODER_COORDS: usize = 24;

pub fn check_encoder(seeds: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let case = EncoderCase::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        worst = worst.max(case.check(ENCODER_COORDS, &mut rng)?);
    }
    Ok(worst)
}
