//! One check per acceptance criterion. Each returns a short summary on
//! success and the reason on failure.

use std::time::{Duration, Instant};

use contrasent::analysis::{self, accuracy_at_topk, RetrievalCase};
use contrasent::finetune::{self, finetune, mrc_accuracy, ConfusionMatrix, FinetuneConfig, TaskKind, TaskSpec};
use contrasent::pretrain::contrastive_loss;
use contrasent::sweep::{read_sweep_csv, SweepAxis};
use contrasent::tape::Tape;
use contrasent::tensor::Tensor;
use contrasent::text::{prepare_contrastive, NliExample, NliLabel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bin::{self, Workspace, TINY};
use super::pipeline::{eval_contrastive, Pretrained, CHOICES};
use super::{grad, oracle, props};

pub type Outcome = Result<String, String>;

fn require(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

pub const GRADIENT_BUDGET: Duration = Duration::from_secs(60);

pub fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0, "none");
    let ops = grad::ops();
    for op in &ops {
        let e = grad::check_op(op, grad::SEEDS).map_err(err)?;
        if e > worst.0 {
            worst = (e, op.name);
        }
    }
    let encoder = grad::check_encoder(grad::SEEDS).map_err(err)?;
    if encoder > worst.0 {
        worst = (encoder, "micro encoder");
    }
    let elapsed = start.elapsed();
    require(
        worst.0 < grad::TOLERANCE && elapsed < GRADIENT_BUDGET,
        format!(
            "{} ops and the micro encoder over {} seeds, worst relative error {:.2e} ({}), {:.1} s",
            ops.len(),
            grad::SEEDS,
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn tape_loss(a: &[Vec<f64>], p: &[Vec<f64>], n: &[Vec<f64>], tau: f64) -> Result<f64, String> {
    let mut tape = Tape::<f64>::new();
    let mut put = |m: &[Vec<f64>]| Tensor::from_rows(m).map(|t| tape.constant(t));
    let (a, p, n) = (put(a).map_err(err)?, put(p).map_err(err)?, put(n).map_err(err)?);
    let l = contrastive_loss(&mut tape, a, p, n, tau).map_err(err)?;
    Ok(tape.value(l).data()[0])
}

pub const LOSS_INSTANCES: usize = 1000;

pub fn loss_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let taus = [0.001, 0.05, 1.0];
    let mut worst = 0.0f64;
    for i in 0..LOSS_INSTANCES {
        let n = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=16);
        let tau = taus[i % taus.len()];
        let (a, p, q) = (matrix(n, d, &mut rng), matrix(n, d, &mut rng), matrix(n, d, &mut rng));
        let diff = (tape_loss(&a, &p, &q, tau)? - oracle::contrastive_loss(&a, &p, &q, tau)).abs();
        worst = worst.max(diff);
    }
    let v = matrix(1, 7, &mut rng);
    let anchor = tape_loss(&v, &v, &v, 0.05)?;
    let anchor_err = (anchor - std::f64::consts::LN_2).abs();
    require(
        worst <= 1e-6 && anchor_err <= 1e-9,
        format!(
            "{LOSS_INSTANCES} instances, max |diff| {worst:.2e}; symmetric single-row loss {anchor:.12} (|diff from ln 2| {anchor_err:.1e})"
        ),
    )
}

/// Premise count of the one-entailment, one-contradiction fixture.
pub const SHAPED_PREMISES: usize = 6094;

pub fn shaped_fixture(rng: &mut ChaCha8Rng) -> Vec<NliExample> {
    let mut rows = Vec::new();
    for p in 0..SHAPED_PREMISES {
        let premise = format!("premise {p}");
        rows.push(NliExample::new(&premise, &format!("entailed {p}"), NliLabel::Entailment));
        rows.push(NliExample::new(&premise, &format!("contradicted {p}"), NliLabel::Contradiction));
        if rng.gen_bool(0.5) {
            rows.push(NliExample::new(&premise, &format!("neutral {p}"), NliLabel::Neutral));
        }
    }
    rows.shuffle(rng);
    rows
}

pub fn multi_fixture(rng: &mut ChaCha8Rng) -> Vec<NliExample> {
    let labels = [NliLabel::Entailment, NliLabel::Contradiction, NliLabel::Neutral];
    let mut rows = Vec::new();
    let mut h = 0;
    for p in 0..rng.gen_range(1..40) {
        for _ in 0..rng.gen_range(0..8) {
            h += 1;
            let label = labels[rng.gen_range(0..3)];
            rows.push(NliExample::new(&format!("premise {p}"), &format!("hypothesis {h}"), label));
        }
    }
    rows.shuffle(rng);
    rows
}

pub const TRIPLE_FIXTURES: usize = 500;

pub fn triple_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shaped = shaped_fixture(&mut rng);
    let (triples, stats) = prepare_contrastive(&shaped);
    if triples.len() != SHAPED_PREMISES || stats.total.premises != SHAPED_PREMISES {
        return Err(format!(
            "{SHAPED_PREMISES} premises gave {} triples ({} premises counted)",
            triples.len(),
            stats.total.premises
        ));
    }
    let mut total = 0;
    for i in 0..TRIPLE_FIXTURES {
        let rows = multi_fixture(&mut rng);
        let (got, stats) = prepare_contrastive(&rows);
        let expect = oracle::enumerate_triples(&rows);
        if got != expect || stats.total.triples != expect.len() {
            return Err(format!(
                "fixture {i}: {} triples, enumeration gives {}",
                got.len(),
                expect.len()
            ));
        }
        total += got.len();
    }
    Ok(format!(
        "{SHAPED_PREMISES} premises -> {SHAPED_PREMISES} triples; {TRIPLE_FIXTURES} multi-hypothesis fixtures ({total} triples) match the enumeration"
    ))
}

pub const METRIC_FIXTURES: usize = 200;
const METRIC_TOLERANCE: f64 = 1e-9;

pub fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: Vec<(&str, f64)> = ["accuracy", "macro-F1", "MRC accuracy", "accuracy@K", "alignment", "uniformity"]
        .into_iter()
        .map(|m| (m, 0.0))
        .collect();
    let mut note = |k: usize, a: f64, b: f64| worst[k].1 = f64::max(worst[k].1, (a - b).abs());
    for _ in 0..METRIC_FIXTURES {
        let classes = rng.gen_range(2..7);
        let n = rng.gen_range(1..80);
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let pred: Vec<usize> = (0..n)
            .map(|i| if rng.gen_bool(0.5) { gold[i] } else { rng.gen_range(0..classes) })
            .collect();
        let cm = ConfusionMatrix::from_predictions(classes, &gold, &pred).map_err(err)?;
        note(0, finetune::accuracy(&cm).map_err(err)?, oracle::accuracy(&gold, &pred));
        note(1, finetune::macro_f1(&cm).map_err(err)?.0, oracle::macro_f1(classes, &gold, &pred));
        note(2, mrc_accuracy(&pred, &gold).map_err(err)?, oracle::accuracy(&gold, &pred));

        let d = rng.gen_range(1..12);
        let queries = rng.gen_range(1..20);
        let claims = matrix(queries, d, &mut rng);
        let pools: Vec<Vec<Vec<f64>>> = (0..queries)
            .map(|_| {
                let m = rng.gen_range(1..25);
                matrix(m, d, &mut rng)
            })
            .collect();
        let golds: Vec<usize> = pools.iter().map(|p| rng.gen_range(0..p.len())).collect();
        let cases: Vec<RetrievalCase> = (0..queries)
            .map(|i| RetrievalCase {
                claim: claims[i].clone(),
                candidates: pools[i].clone(),
                gold: golds[i],
            })
            .collect();
        for k in [1, 3, 5, 10, 30] {
            note(3, accuracy_at_topk(&cases, k).map_err(err)?, oracle::accuracy_at_k(&claims, &pools, &golds, k));
        }

        let m = rng.gen_range(2..40);
        let (x, y) = (matrix(m, d, &mut rng), matrix(m, d, &mut rng));
        let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = x.iter().zip(&y).collect();
        note(4, analysis::alignment(&pairs).map_err(err)?, oracle::alignment(&x, &y));
        note(5, analysis::uniformity(&x).map_err(err)?, oracle::uniformity(&x));
    }
    let summary = worst
        .iter()
        .map(|(m, w)| format!("{m} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    require(
        worst.iter().all(|(_, w)| *w <= METRIC_TOLERANCE),
        format!("{METRIC_FIXTURES} fixtures per metric, max |diff|: {summary}"),
    )
}

pub const PRETRAIN_BUDGET: Duration = Duration::from_secs(300);

pub fn training_efficacy(run: &Pretrained) -> Outcome {
    let start = Instant::now();
    let c = &run.corpus;
    let cfg = &run.config;
    let loss = |w| eval_contrastive(w, &c.vocab, &c.triples, cfg.pooling, cfg.batch_size, cfg.temperature);
    let (before, after) = (loss(&run.initial), loss(&run.trained));
    let analyze = |w| analysis::analyze_pairs(w, &c.vocab, &c.held_out, cfg.pooling).map_err(err);
    let (init, trained) = (analyze(&run.initial)?, analyze(&run.trained)?);
    let cases = analysis::retrieval_cases(&run.trained, &c.vocab, &c.claims, &c.contexts, cfg.pooling).map_err(err)?;
    let top1 = accuracy_at_topk(&cases, 1).map_err(err)?;
    let elapsed = run.elapsed + start.elapsed();
    let checks = [
        after <= 0.5 * before,
        trained.alignment_e < trained.alignment_c,
        trained.uniformity < init.uniformity,
        top1 >= 0.9,
        elapsed < PRETRAIN_BUDGET,
    ];
    require(
        checks.iter().all(|&c| c),
        format!(
            "loss {before:.3} -> {after:.3} ({:.0}%), alignment E {:.3} vs C {:.3}, uniformity {:.3} -> {:.3}, acc@1 {top1:.2} over {} claims of {} candidates, {:.1} s",
            100.0 * after / before,
            trained.alignment_e,
            trained.alignment_c,
            init.uniformity,
            trained.uniformity,
            cases.len(),
            cases.first().map_or(0, |k| k.candidates.len()),
            elapsed.as_secs_f64()
        ),
    )
}

pub fn sweeps(dir: &std::path::Path) -> Outcome {
    let ws = Workspace::new(dir)?;
    let mut summary = Vec::new();
    for axis in SweepAxis::ALL {
        let out = ws.out(&format!("sweep_{axis}"));
        let mut args: Vec<String> = vec!["--out".into(), out.clone()];
        args.extend(TINY.iter().map(|s| s.to_string()));
        if axis == SweepAxis::MaskRate {
            args.extend(["--set".into(), "mlm_weight=0.1".into()]);
        }
        args.extend(
            [
                "sweep", "--axis", axis.name(), "--task", "pair", "--triples", &ws.triples(),
                "--vocab", &ws.vocab(), "--train", &ws.gen("pair_train.jsonl"), "--dev", &ws.gen("pair_dev.jsonl"),
            ]
            .map(String::from),
        );
        bin::expect(0, &args).map_err(|e| format!("{axis}: {e}"))?;
        let rows = read_sweep_csv(&std::path::Path::new(&out).join("sweep.csv")).map_err(err)?;
        let grid = axis.default_grid();
        let values: Vec<&str> = rows.iter().map(|r| r.value.as_str()).collect();
        let grid_names: Vec<String> = grid.iter().map(|v| v.to_string()).collect();
        if values != grid_names || rows.iter().any(|r| r.status != "ok" || r.dev_accuracy.is_none()) {
            return Err(format!("{axis}: rows {values:?} for grid {grid_names:?}, or a leg without dev accuracy"));
        }
        summary.push(format!("{axis} {}", rows.len()));
    }
    Ok(format!("rows with dev accuracy: {}", summary.join(", ")))
}

/// Runs every command twice into the same directory and compares the bytes
/// it wrote.
pub fn determinism(dir: &std::path::Path) -> Outcome {
    let ws = Workspace::new(dir)?;
    let o = |name: &str| ws.out(name);
    let gen = |f: &str| ws.gen(f);
    let tiny: Vec<String> = TINY.iter().map(|s| s.to_string()).collect();
    let train_flags = ["--set", "dropout=0.1", "--set", "mlm_weight=0.1", "--set", "epochs=2"];
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("gen-synthetic", vec!["gen-synthetic".into(), "--premises".into(), "30".into()]),
        ("prepare", vec!["prepare".into(), "--nli".into(), gen("nli.jsonl"), "--held-out".into(), gen("held_out.jsonl")]),
        ("build-vocab", vec!["build-vocab".into(), "--input".into(), ws.triples()]),
        ("pretrain", vec!["pretrain".into(), "--triples".into(), ws.triples(), "--vocab".into(), ws.vocab()]),
        (
            "finetune",
            vec![
                "finetune".into(), "--checkpoint".into(), bin::path(&dir.join("pretrain_ref"), "checkpoint.bin"),
                "--vocab".into(), ws.vocab(), "--task".into(), "pair".into(),
                "--train".into(), gen("pair_train.jsonl"), "--dev".into(), gen("pair_dev.jsonl"),
            ],
        ),
        (
            "evaluate",
            vec![
                "evaluate".into(), "--model".into(), bin::path(&dir.join("finetune_ref"), "model.bin"),
                "--vocab".into(), ws.vocab(), "--data".into(), gen("pair_dev.jsonl"),
            ],
        ),
        (
            "analyze",
            vec![
                "analyze".into(), "--checkpoint".into(), bin::path(&dir.join("pretrain_ref"), "checkpoint.bin"),
                "--vocab".into(), ws.vocab(), "--pairs".into(), gen("held_out.jsonl"), "--embeddings".into(),
                "--attention-a".into(), "a first segment".into(), "--attention-b".into(), "a second one".into(),
            ],
        ),
        (
            "retrieve",
            vec![
                "retrieve".into(), "--checkpoint".into(), bin::path(&dir.join("pretrain_ref"), "checkpoint.bin"),
                "--vocab".into(), ws.vocab(), "--claims".into(), gen("claims.jsonl"), "--contexts".into(), gen("contexts.jsonl"),
            ],
        ),
        (
            "sweep",
            vec![
                "sweep".into(), "--axis".into(), "pooling".into(), "--task".into(), "pair".into(),
                "--triples".into(), ws.triples(), "--vocab".into(), ws.vocab(),
                "--train".into(), gen("pair_train.jsonl"), "--dev".into(), gen("pair_dev.jsonl"),
            ],
        ),
    ];
    let mut files = 0;
    for (name, args) in &commands {
        let out = o(&format!("{name}_ref"));
        let mut snapshots = Vec::new();
        for _ in 0..2 {
            let _ = std::fs::remove_dir_all(&out);
            let mut full: Vec<String> = vec!["--out".into(), out.clone()];
            full.extend(tiny.iter().cloned());
            full.extend(train_flags.map(String::from));
            full.extend(args.iter().cloned());
            bin::expect(0, &full).map_err(|e| format!("{name}: {e}"))?;
            snapshots.push(bin::snapshot(std::path::Path::new(&out)));
        }
        if snapshots[0].is_empty() || snapshots[0] != snapshots[1] {
            let differing: Vec<_> = snapshots[0]
                .iter()
                .filter(|(k, v)| snapshots[1].get(*k) != Some(v))
                .map(|(k, _)| k.display().to_string())
                .collect();
            return Err(format!("{name}: outputs differ between runs: {differing:?}"));
        }
        files += snapshots[0].len();
    }
    Ok(format!("{} commands run twice, {files} output files byte-identical", commands.len()))
}

pub const PAIR_TARGET: f64 = 0.95;
pub const MRC_MARGIN: f64 = 0.2;

pub fn finetuning(run: &Pretrained) -> Outcome {
    let c = &run.corpus;
    let config = FinetuneConfig::default();
    let pair_task = TaskSpec::infer(TaskKind::Pair, &c.pair_train).map_err(err)?;
    let pair = finetune(run.trained.clone(), pair_task, &c.pair_train, &c.pair_dev, &c.vocab, &config).map_err(err)?;
    let reached = pair.history.iter().find(|h| h.dev_accuracy >= PAIR_TARGET).map(|h| h.epoch);
    let pair_best = pair.history.iter().map(|h| h.dev_accuracy).fold(0.0, f64::max);

    let mrc = finetune(run.trained.clone(), TaskSpec::mrc(), &c.mrc_train, &c.mrc_dev, &c.vocab, &config).map_err(err)?;
    let mrc_best = mrc.history.iter().filter_map(|h| h.dev_mrc_accuracy).fold(0.0, f64::max);
    let baseline = 1.0 / CHOICES as f64;
    require(
        reached.is_some_and(|e| e <= config.epochs) && mrc_best - baseline >= MRC_MARGIN,
        format!(
            "pair dev accuracy {pair_best:.3} (>= {PAIR_TARGET} at epoch {}), MRC dev accuracy {mrc_best:.3} vs baseline {baseline:.2} over {} epochs",
            reached.map_or("never".into(), |e| e.to_string()),
            config.epochs
        ),
    )
}

pub fn invariance() -> Outcome {
    let mut names = Vec::new();
    for p in props::all().into_iter().filter(|p| p.invariance) {
        (p.run)().map_err(|e| format!("{}: {e}", p.name))?;
        names.push(p.name);
    }
    Ok(format!("{} properties hold: {}", names.len(), names.join(", ")))
}
