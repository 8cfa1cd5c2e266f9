//! Property checks, runnable from libtest or from the acceptance binary.

use contrasent::analysis::{accuracy_at_topk, alignment, uniformity, RetrievalCase};
use contrasent::encoder::{forward, pool, EncoderConfig, EncoderWeights, LayerOutputs, Mode, PoolingStrategy};
use contrasent::finetune::{argmax_first, macro_f1, ConfusionMatrix};
use contrasent::pretrain::{contrastive_loss, subsample_indices, LossRecord, Split};
use contrasent::rng::{stream, Stream};
use contrasent::tape::{Tape, Var};
use contrasent::tensor::{cosine_similarity, Tensor};
use contrasent::text::{encode_pair, prepare_contrastive, NliExample, NliLabel, TokenSequence, Vocabulary};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle;

pub struct Property {
    pub name: &'static str,
    /// Part of the invariance suite checked as one acceptance criterion.
    pub invariance: bool,
    pub run: fn() -> Result<(), String>,
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

/// Haar-ish random orthogonal matrix by Gram-Schmidt on a Gaussian-like
/// draw.
fn orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 {
            q.push(v.iter().map(|a| a / n).collect());
        }
    }
    q
}

fn rotate(q: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    q.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn close(a: f64, b: f64, tol: f64) -> Result<(), TestCaseError> {
    prop_assert!((a - b).abs() <= tol, "{a} vs {b} (tolerance {tol})");
    Ok(())
}

fn micro(seed: u64) -> EncoderWeights<f64> {
    let mut w = EncoderWeights::<f64>::init(EncoderConfig::micro(12), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in w.tensors_mut() {
        t.data_mut().iter_mut().for_each(|x| *x += rng.gen_range(-0.3..0.3));
    }
    w
}

fn sentence(rng: &mut ChaCha8Rng, max: usize) -> TokenSequence {
    let n = rng.gen_range(0..=max);
    let mut ids = vec![1];
    ids.extend((0..n).map(|_| rng.gen_range(3..12)));
    ids.push(2);
    TokenSequence::from_ids(ids)
}

fn loss_value(a: &[Vec<f64>], p: &[Vec<f64>], n: &[Vec<f64>], tau: f64) -> f64 {
    let mut tape = Tape::<f64>::new();
    let mut put = |m: &[Vec<f64>]| tape.constant(Tensor::from_rows(m).unwrap());
    let (a, p, n) = (put(a), put(p), put(n));
    let l = contrastive_loss(&mut tape, a, p, n, tau).unwrap();
    tape.value(l).data()[0]
}

// ----- numeric core -----

fn softmax_and_layer_norm() -> Result<(), String> {
    check(256, (1usize..6, 1usize..8, any::<u64>(), 0.1f64..50.0), |(r, c, seed, spread)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-spread..spread)).collect();
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![r, c], data).unwrap());
        let s = tape.softmax(x, 1).unwrap();
        for row in tape.value(s).data().chunks(c) {
            close(row.iter().sum(), 1.0, 1e-6)?;
        }
        let g = tape.constant(Tensor::filled(&[c], 1.0));
        let b = tape.constant(Tensor::zeros(&[c]));
        let y = tape.layer_norm(x, g, b).unwrap();
        for row in tape.value(y).data().chunks(c) {
            close(row.iter().sum::<f64>() / c as f64, 0.0, 1e-5)?;
        }
        Ok(())
    })
}

fn cosine_scale_invariance() -> Result<(), String> {
    let v = || vec(-10.0f64..10.0, 1..16);
    check(512, (v(), v(), 1e-3f64..1e3, 1e-3f64..1e3), |(u, w, alpha, beta)| {
        let d = u.len().min(w.len());
        let (u, w) = (&u[..d], &w[..d]);
        prop_assume!(u.iter().any(|&x| x != 0.0) && w.iter().any(|&x| x != 0.0));
        let base = cosine_similarity(u, w).unwrap();
        let su: Vec<f64> = u.iter().map(|x| x * alpha).collect();
        let sw: Vec<f64> = w.iter().map(|x| x * beta).collect();
        close(cosine_similarity(&su, &sw).unwrap(), base, 1e-6)
    })
}

fn forward_is_bitwise_deterministic() -> Result<(), String> {
    check(48, any::<u64>(), |seed| {
        let w = micro(seed % 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = sentence(&mut rng, 6);
        let run = || {
            let mut tape = Tape::new();
            let vars = w.bind(&mut tape, false);
            let out = forward(&mut tape, &vars, &w.config, &seq, &mut Mode::Eval).unwrap();
            let bits: Vec<u64> = tape.value(out.last()).data().iter().map(|x| x.to_bits()).collect();
            bits
        };
        prop_assert_eq!(run(), run());
        Ok(())
    })
}

// ----- text pipeline -----

fn nli_fixture(seed: u64) -> Vec<NliExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let premises = rng.gen_range(1..8);
    let mut h = 0;
    for p in 0..premises {
        for _ in 0..rng.gen_range(0..6) {
            let label = *[NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral]
                .choose(&mut rng)
                .unwrap();
            h += 1;
            rows.push(NliExample::new(&format!("premise {p}"), &format!("hyp {h} {label:?}"), label));
        }
    }
    rows.shuffle(&mut rng);
    rows
}

fn triples_match_enumeration() -> Result<(), String> {
    check(512, any::<u64>(), |seed| {
        let rows = nli_fixture(seed);
        let (triples, stats) = prepare_contrastive(&rows);
        let expect = oracle::enumerate_triples(&rows);
        prop_assert_eq!(&triples, &expect);
        prop_assert_eq!(stats.total.triples, expect.len());
        prop_assert!(triples.iter().all(|t| !t.sentence2.contains("Neutral") && !t.hard_neg.contains("Neutral")));
        Ok(())
    })
}

fn triples_follow_hypothesis_order() -> Result<(), String> {
    check(256, any::<u64>(), |seed| {
        let rows = nli_fixture(seed);
        let (before, _) = prepare_contrastive(&rows);
        // Reverse the entailments of every premise while keeping everything
        // else in place: the pairing must follow.
        let mut rows2 = rows.clone();
        let ent: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].label == NliLabel::Entailment).collect();
        let mut by_premise: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
        for &i in &ent {
            by_premise.entry(rows[i].premise.clone()).or_default().push(i);
        }
        for idx in by_premise.values() {
            for (k, &i) in idx.iter().enumerate() {
                rows2[i] = rows[idx[idx.len() - 1 - k]].clone();
            }
        }
        let (after, _) = prepare_contrastive(&rows2);
        prop_assert_eq!(&after, &oracle::enumerate_triples(&rows2));
        let order = |t: &[contrasent::text::ContrastiveTriple]| {
            let mut v: Vec<String> = Vec::new();
            for x in t {
                if !v.contains(&x.sentence1) {
                    v.push(x.sentence1.clone());
                }
            }
            v
        };
        prop_assert_eq!(order(&before), order(&after));
        prop_assert_eq!(before.len(), after.len());
        Ok(())
    })
}

fn encode_pair_bounds() -> Result<(), String> {
    let words = || vec(prop::sample::select(vec!["a", "b", "c", "zz", "q", "!", "x"]), 0..20);
    check(512, (words(), words(), 4usize..24), |(a, b, max_len)| {
        let vocab = Vocabulary::build(&["a b c zz q"], 1).unwrap();
        let seq = encode_pair(&a.join(" "), &b.join(" "), &vocab, max_len).unwrap();
        prop_assert!(seq.len() <= max_len);
        let non_pad = seq.ids.iter().filter(|&&i| i != 0).count();
        prop_assert_eq!(seq.real_len(), non_pad);
        Ok(())
    })
}

// ----- encoder -----

fn attention_rows_sum_to_one() -> Result<(), String> {
    check(64, (any::<u64>(), 0usize..4), |(seed, pad)| {
        let w = micro(seed % 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = sentence(&mut rng, 8);
        let seq = seq.pad_to(seq.len() + pad);
        let mut tape = Tape::new();
        let vars = w.bind(&mut tape, false);
        let out = forward(&mut tape, &vars, &w.config, &seq, &mut Mode::Eval).unwrap();
        let n = seq.len();
        for att in &out.attention {
            for row in att.data().chunks(n) {
                let live: f64 = row.iter().zip(&seq.attention_mask).filter(|(_, &m)| m == 1).map(|(p, _)| p).sum();
                close(live, 1.0, 1e-5)?;
            }
        }
        Ok(())
    })
}

fn padding_invariance() -> Result<(), String> {
    check(64, (any::<u64>(), 1usize..5), |(seed, pad)| {
        let w = micro(seed % 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = sentence(&mut rng, 8);
        let padded = seq.pad_to(seq.len() + pad);
        for s in PoolingStrategy::ALL {
            let a = w.embed(&seq, s).unwrap();
            let b = w.embed(&padded, s).unwrap();
            for (x, y) in a.iter().zip(&b) {
                close(*x, *y, 1e-5)?;
            }
        }
        Ok(())
    })
}

fn pooling_layer_dependence() -> Result<(), String> {
    check(128, (any::<u64>(), 2usize..5, 1usize..5, 1usize..4), |(seed, layers, n, d)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::<f64>::new();
        let make = |tape: &mut Tape<f64>, m: &[Vec<Vec<f64>>]| -> Vec<Var> {
            m.iter().map(|l| tape.constant(Tensor::from_rows(l).unwrap())).collect()
        };
        let states: Vec<Vec<Vec<f64>>> = (0..=layers).map(|_| matrix(n, d, &mut rng)).collect();
        let mut mask = vec![1u8; n];
        for m in mask.iter_mut().skip(1) {
            *m = u8::from(rng.gen_bool(0.7));
        }
        let outputs = |hidden: Vec<Var>| LayerOutputs {
            hidden,
            attention: Vec::new(),
            mask: mask.clone(),
        };
        let base = outputs(make(&mut tape, &states));
        // CLS ignores every layer but the last.
        let mut other = states.clone();
        for l in other.iter_mut().take(layers) {
            *l = matrix(n, d, &mut rng);
        }
        let changed = outputs(make(&mut tape, &other));
        let c1 = pool(&mut tape, &base, PoolingStrategy::Cls).unwrap();
        let c2 = pool(&mut tape, &changed, PoolingStrategy::Cls).unwrap();
        prop_assert_eq!(tape.value(c1).data(), tape.value(c2).data());
        // FirstLast is symmetric in layer 1 and layer L.
        let mut swapped = states.clone();
        swapped.swap(1, layers);
        let swapped = outputs(make(&mut tape, &swapped));
        let f1 = pool(&mut tape, &base, PoolingStrategy::FirstLast).unwrap();
        let f2 = pool(&mut tape, &swapped, PoolingStrategy::FirstLast).unwrap();
        for (x, y) in tape.value(f1).data().iter().zip(tape.value(f2).data()) {
            close(*x, *y, 1e-12)?;
        }
        Ok(())
    })
}

fn dropout_is_keyed_by_seed_and_step() -> Result<(), String> {
    check(32, (any::<u64>(), 0u64..1000), |(seed, step)| {
        let mut cfg = EncoderConfig::micro(12);
        cfg.dropout = 0.3;
        let w = EncoderWeights::<f64>::init(cfg, seed % 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = sentence(&mut rng, 6);
        let run = |step: u64| {
            let mut tape = Tape::new();
            let vars = w.bind(&mut tape, false);
            let mut r = stream(seed, Stream::Dropout, step);
            let out = forward(&mut tape, &vars, &w.config, &seq, &mut Mode::Train(&mut r)).unwrap();
            tape.value(out.last()).data().to_vec()
        };
        prop_assert_eq!(run(step), run(step));
        prop_assert_ne!(run(step), run(step + 1));
        Ok(())
    })
}

// ----- pretraining -----

fn loss_row_scale_invariance() -> Result<(), String> {
    check(256, (any::<u64>(), 1usize..8, 1usize..16, 1e-2f64..1e2), |(seed, n, d, s)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, p, q) = (matrix(n, d, &mut rng), matrix(n, d, &mut rng), matrix(n, d, &mut rng));
        let tau = *[0.05, 0.5, 1.0].choose(&mut rng).unwrap();
        let base = loss_value(&a, &p, &q, tau);
        let which = rng.gen_range(0..3);
        let row = rng.gen_range(0..n);
        let mut m = [a, p, q];
        m[which][row].iter_mut().for_each(|x| *x *= s);
        close(loss_value(&m[0], &m[1], &m[2], tau), base, 1e-5)
    })
}

fn loss_bounds() -> Result<(), String> {
    check(256, (any::<u64>(), 1usize..8, 2usize..16, 0.01f64..2.0), |(seed, n, d, tau)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = loss_value(&matrix(n, d, &mut rng), &matrix(n, d, &mut rng), &matrix(n, d, &mut rng), tau);
        prop_assert!(l >= 0.0);
        // Perfect positive and opposite negative: only the negative term is
        // left in the denominator.
        let e: Vec<f64> = (0..d).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect();
        let neg = vec![e.iter().map(|x| -x).collect::<Vec<f64>>()];
        let e = vec![e];
        let best = loss_value(&e, &e, &neg, tau);
        close(best, (1.0 + (-2.0 / tau).exp()).ln(), 1e-9)?;
        prop_assert!(best <= loss_value(&e, &e, &e, tau));
        Ok(())
    })
}

/// Index of the largest term of each row of softmax([A·Pᵀ | A·Nᵀ] / τ),
/// computed on the tape.
fn softmax_argmax(a: &[Vec<f64>], p: &[Vec<f64>], n: &[Vec<f64>], tau: f64) -> Vec<usize> {
    let mut tape = Tape::<f64>::new();
    let mut put = |m: &[Vec<f64>]| tape.constant(Tensor::from_rows(m).unwrap());
    let (a, p, n) = (put(a), put(p), put(n));
    let a = tape.normalize_rows(a).unwrap();
    let p = tape.normalize_rows(p).unwrap();
    let n = tape.normalize_rows(n).unwrap();
    let pt = tape.transpose(p).unwrap();
    let nt = tape.transpose(n).unwrap();
    let sp = tape.matmul(a, pt).unwrap();
    let sn = tape.matmul(a, nt).unwrap();
    let z = tape.concat_cols(&[sp, sn]).unwrap();
    let z = tape.scale(z, 1.0 / tau);
    let s = tape.softmax(z, 1).unwrap();
    let cols = tape.shape(s)[1];
    tape.value(s)
        .data()
        .chunks(cols)
        .map(|r| argmax_first(r).unwrap())
        .collect()
}

fn temperature_argmax_invariance() -> Result<(), String> {
    check(256, (any::<u64>(), 1usize..8, 2usize..16), |(seed, n, d)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, p, q) = (matrix(n, d, &mut rng), matrix(n, d, &mut rng), matrix(n, d, &mut rng));
        let reference = softmax_argmax(&a, &p, &q, 1.0);
        for tau in [0.01, 0.05, 0.1, 0.5, 2.0, 10.0] {
            prop_assert_eq!(&softmax_argmax(&a, &p, &q, tau), &reference, "tau {}", tau);
        }
        Ok(())
    })
}

fn combined_loss_additivity() -> Result<(), String> {
    check(512, (0.0f64..20.0, 0.0f64..20.0, 0.0f64..1.0), |(cl, mlm, w)| {
        let r = LossRecord::new(1, 1, Split::Train, cl, mlm, w);
        close(r.combined, cl + w * mlm, 1e-6)
    })
}

fn nested_subsampling() -> Result<(), String> {
    check(256, (1usize..500, any::<u64>()), |(n, seed)| {
        let mut prev: Vec<usize> = Vec::new();
        for f in [0.25, 0.5, 0.75, 1.0] {
            let cur = subsample_indices(n, f, seed);
            prop_assert!(prev.iter().all(|i| cur.contains(i)), "f={} not nested", f);
            prop_assert_eq!(cur.len(), ((f * n as f64).ceil() as usize).max(1));
            prev = cur;
        }
        prop_assert_eq!(prev, (0..n).collect::<Vec<_>>());
        Ok(())
    })
}

// ----- fine-tuning -----

fn label_fixture(seed: u64) -> (usize, Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.gen_range(2..6);
    let n = rng.gen_range(1..60);
    let gold = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let pred = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    (classes, gold, pred)
}

fn confusion_metrics_match_examples() -> Result<(), String> {
    check(512, any::<u64>(), |seed| {
        let (c, gold, pred) = label_fixture(seed);
        let cm = ConfusionMatrix::from_predictions(c, &gold, &pred).unwrap();
        close(contrasent::finetune::accuracy(&cm).unwrap(), oracle::accuracy(&gold, &pred), 1e-12)?;
        close(macro_f1(&cm).unwrap().0, oracle::macro_f1(c, &gold, &pred), 1e-12)
    })
}

fn macro_f1_relabeling() -> Result<(), String> {
    check(512, any::<u64>(), |seed| {
        let (c, gold, pred) = label_fixture(seed);
        let mut perm: Vec<usize> = (0..c).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let relabel = |v: &[usize]| v.iter().map(|&x| perm[x]).collect::<Vec<_>>();
        let (m1, per1) = macro_f1(&ConfusionMatrix::from_predictions(c, &gold, &pred).unwrap()).unwrap();
        let (m2, per2) =
            macro_f1(&ConfusionMatrix::from_predictions(c, &relabel(&gold), &relabel(&pred)).unwrap()).unwrap();
        close(m1, m2, 1e-12)?;
        for k in 0..c {
            close(per1[k].f1, per2[perm[k]].f1, 1e-12)?;
        }
        Ok(())
    })
}

fn choice_argmax_monotone_invariance() -> Result<(), String> {
    check(512, (vec(-5.0f64..5.0, 1..8), 0.1f64..3.0, -2.0f64..2.0), |(z, a, b)| {
        let base = argmax_first(&z);
        let transforms: [&dyn Fn(f64) -> f64; 3] = [
            &|x| a * x + b,
            &|x| (a * x).exp(),
            &|x| 1.0 / (1.0 + (-x).exp()),
        ];
        for f in transforms {
            let t: Vec<f64> = z.iter().map(|&x| f(x)).collect();
            prop_assert_eq!(argmax_first(&t), base);
        }
        Ok(())
    })
}

// ----- analysis -----

fn retrieval_fixture(seed: u64) -> Vec<RetrievalCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..8);
    (0..rng.gen_range(1..12))
        .map(|_| {
            let m = rng.gen_range(1..15);
            RetrievalCase {
                claim: matrix(1, d, &mut rng).remove(0),
                candidates: matrix(m, d, &mut rng),
                gold: rng.gen_range(0..m),
            }
        })
        .collect()
}

fn topk_monotone() -> Result<(), String> {
    check(256, any::<u64>(), |seed| {
        let cases = retrieval_fixture(seed);
        let mut prev = 0.0;
        for k in 1..=16 {
            let acc = accuracy_at_topk(&cases, k).unwrap();
            prop_assert!(acc >= prev, "K={} gave {} after {}", k, acc, prev);
            prev = acc;
        }
        prop_assert_eq!(prev, 1.0);
        Ok(())
    })
}

fn alignment_symmetry_and_rotation() -> Result<(), String> {
    check(256, (any::<u64>(), 1usize..20, 2usize..10), |(seed, n, d)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (matrix(n, d, &mut rng), matrix(n, d, &mut rng));
        let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = x.iter().zip(&y).collect();
        let flipped: Vec<(&Vec<f64>, &Vec<f64>)> = y.iter().zip(&x).collect();
        let base = alignment(&pairs).unwrap();
        close(alignment(&flipped).unwrap(), base, 1e-12)?;
        let q = orthogonal(d, &mut rng);
        let rx: Vec<Vec<f64>> = x.iter().map(|v| rotate(&q, v)).collect();
        let ry: Vec<Vec<f64>> = y.iter().map(|v| rotate(&q, v)).collect();
        let rotated: Vec<(&Vec<f64>, &Vec<f64>)> = rx.iter().zip(&ry).collect();
        close(alignment(&rotated).unwrap(), base, 1e-5)
    })
}

fn uniformity_rotation_and_permutation() -> Result<(), String> {
    check(256, (any::<u64>(), 2usize..25, 2usize..10), |(seed, n, d)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = matrix(n, d, &mut rng);
        let base = uniformity(&x).unwrap();
        let q = orthogonal(d, &mut rng);
        let rx: Vec<Vec<f64>> = x.iter().map(|v| rotate(&q, v)).collect();
        close(uniformity(&rx).unwrap(), base, 1e-5)?;
        let mut px = x.clone();
        px.shuffle(&mut rng);
        close(uniformity(&px).unwrap(), base, 1e-5)
    })
}

pub fn all() -> Vec<Property> {
    let p = |name, invariance, run| Property { name, invariance, run };
    vec![
        p("softmax_and_layer_norm", false, softmax_and_layer_norm as fn() -> _),
        p("cosine_scale_invariance", true, cosine_scale_invariance),
        p("forward_is_bitwise_deterministic", false, forward_is_bitwise_deterministic),
        p("triples_match_enumeration", false, triples_match_enumeration),
        p("triples_follow_hypothesis_order", false, triples_follow_hypothesis_order),
        p("encode_pair_bounds", false, encode_pair_bounds),
        p("attention_rows_sum_to_one", false, attention_rows_sum_to_one),
        p("padding_invariance", true, padding_invariance),
        p("pooling_layer_dependence", false, pooling_layer_dependence),
        p("dropout_is_keyed_by_seed_and_step", false, dropout_is_keyed_by_seed_and_step),
        p("loss_row_scale_invariance", true, loss_row_scale_invariance),
        p("loss_bounds", false, loss_bounds),
        p("temperature_argmax_invariance", true, temperature_argmax_invariance),
        p("combined_loss_additivity", false, combined_loss_additivity),
        p("nested_subsampling", false, nested_subsampling),
        p("confusion_metrics_match_examples", false, confusion_metrics_match_examples),
        p("macro_f1_relabeling", false, macro_f1_relabeling),
        p("choice_argmax_monotone_invariance", false, choice_argmax_monotone_invariance),
        p("topk_monotone", true, topk_monotone),
        p("alignment_symmetry_and_rotation", true, alignment_symmetry_and_rotation),
        p("uniformity_rotation_and_permutation", true, uniformity_rotation_and_permutation),
    ]
}
