use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use contrasent::analysis::{self, AnalysisReport, ClaimRow, ContextRow, EmbeddingSet, RetrievalReport};
use contrasent::checkpoint::Checkpoint;
use contrasent::config::RunConfig;
use contrasent::finetune::{self, FineTunedModel, TaskData, TaskKind, TaskSpec};
use contrasent::jsonl;
use contrasent::pretrain::{self, LossRecord, Split};
use contrasent::sweep::{self, SweepData};
use contrasent::synthetic::Lexicon;
use contrasent::text::{self, ContrastiveTriple, LeakageViolation, NliExample, Vocabulary};

use super::*;

struct Run {
    cfg: RunConfig,
    out: PathBuf,
}

impl Run {
    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn finish(&self) -> Result<()> {
        self.cfg.archive(&self.out)?;
        Ok(())
    }
}

/// The flag value, else the configured path. The choice is written back so
/// the archived configuration names the inputs actually used.
fn input(flag: Option<PathBuf>, slot: &mut Option<PathBuf>, key: &str) -> Result<PathBuf> {
    match flag.or_else(|| slot.clone()) {
        Some(p) => {
            *slot = Some(p.clone());
            Ok(p)
        }
        None => bail!("no --{key} given and `{key}` is not set in the configuration"),
    }
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("reading vocabulary {}", path.display()))
}

fn load_checkpoint(path: &Path, vocab: &Vocabulary) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    if ck.vocab_hash != vocab.hash() {
        bail!(
            "{} was trained with a different vocabulary (hash {}, expected {})",
            path.display(),
            ck.vocab_hash,
            vocab.hash()
        );
    }
    Ok(ck)
}

fn load_triples(path: &Path) -> Result<Vec<ContrastiveTriple>> {
    jsonl::read(path).with_context(|| format!("reading triples {}", path.display()))
}

fn task_spec(cfg: &RunConfig, kind: TaskKind, train: &TaskData) -> Result<TaskSpec> {
    Ok(if cfg.labels.is_empty() {
        TaskSpec::infer(kind, train)?
    } else {
        TaskSpec::new(kind, cfg.labels.clone())?
    })
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;
    let mut run = Run { cfg, out: cli.out };
    match cli.command {
        Command::Prepare(a) => prepare(&mut run, a),
        Command::BuildVocab(a) => build_vocab(&mut run, a),
        Command::Pretrain(a) => pretrain_cmd(&mut run, a),
        Command::Finetune(a) => finetune_cmd(&mut run, a),
        Command::Evaluate(a) => evaluate(&mut run, a),
        Command::Analyze(a) => analyze(&mut run, a),
        Command::Retrieve(a) => retrieve(&mut run, a),
        Command::Sweep(a) => sweep_cmd(&mut run, a),
        Command::GenSynthetic(a) => gen_synthetic(&mut run, a),
    }
}

#[derive(Serialize)]
struct LeakageReport {
    held_out_files: Vec<PathBuf>,
    held_out_sentences: usize,
    violations: Vec<LeakageViolation>,
}

fn prepare(run: &mut Run, a: PrepareArgs) -> Result<ExitCode> {
    let nli = input(a.nli, &mut run.cfg.nli, "nli")?;
    let examples = text::read_nli(&nli)?;
    let (triples, stats) = text::prepare_contrastive(&examples);
    let mut held = Vec::new();
    for p in &a.held_out {
        held.extend(jsonl::collect_texts(p)?);
    }
    let violations = text::leakage_guard(&triples, &held);

    run.cfg.triples = Some(run.file("triples.jsonl"));
    jsonl::write(&run.file("triples.jsonl"), &triples)?;
    jsonl::write_json(&run.file("stats.json"), &stats)?;
    jsonl::write_json(
        &run.file("leakage.json"),
        &LeakageReport {
            held_out_files: a.held_out,
            held_out_sentences: held.len(),
            violations: violations.clone(),
        },
    )?;
    run.finish()?;

    println!(
        "{} premises -> {} triples ({} neutral rows excluded)",
        stats.total.premises, stats.total.triples, stats.total.neutral_excluded
    );
    if violations.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for v in &violations {
        eprintln!(
            "leakage: triple {} field {:?}: {}",
            v.triple_index, v.field, v.sentence
        );
    }
    eprintln!("{} held-out sentences found in the training triples", violations.len());
    Ok(ExitCode::from(EXIT_VIOLATION))
}

fn build_vocab(run: &mut Run, a: BuildVocabArgs) -> Result<ExitCode> {
    let inputs = if a.input.is_empty() {
        vec![input(None, &mut run.cfg.triples, "triples")?]
    } else {
        a.input
    };
    let mut texts = Vec::new();
    for p in &inputs {
        texts.extend(jsonl::collect_texts(p)?);
    }
    let vocab = Vocabulary::build(&texts, run.cfg.min_count)?;
    vocab.save(&run.file("vocab.txt"))?;
    run.cfg.vocab = Some(run.file("vocab.txt"));
    run.finish()?;
    println!("{} tokens from {} sentences", vocab.len(), texts.len());
    Ok(ExitCode::SUCCESS)
}

fn print_losses(log: &[LossRecord]) {
    for split in [Split::Train, Split::Validation] {
        if let Some(r) = log.iter().rev().find(|r| r.split == split) {
            println!(
                "epoch {} {:<10} contrastive {:.6} mlm {:.6} combined {:.6}",
                r.epoch,
                format!("{split:?}").to_lowercase(),
                r.contrastive,
                r.mlm,
                r.combined
            );
        }
    }
}

fn pretrain_cmd(run: &mut Run, a: PretrainArgs) -> Result<ExitCode> {
    let triples_path = input(a.triples, &mut run.cfg.triples, "triples")?;
    let vocab_path = input(a.vocab, &mut run.cfg.vocab, "vocab")?;
    let triples = load_triples(&triples_path)?;
    let vocab = load_vocab(&vocab_path)?;
    let config = run.cfg.pretrain();
    let outcome = match a.resume {
        Some(p) => {
            let ck = load_checkpoint(&p, &vocab)?;
            pretrain::resume(&triples, &vocab, ck, &config)?
        }
        None => pretrain::train(&triples, &vocab, run.cfg.encoder(vocab.len()), &config)?,
    };
    outcome.checkpoint.save(&run.file("checkpoint.bin"))?;
    pretrain::write_loss_csv(&run.file("loss.csv"), &outcome.log)?;
    run.cfg.checkpoint = Some(run.file("checkpoint.bin"));
    run.finish()?;
    print_losses(&outcome.log);
    Ok(ExitCode::SUCCESS)
}

fn finetune_cmd(run: &mut Run, a: FinetuneArgs) -> Result<ExitCode> {
    let kind = a.task.unwrap_or(run.cfg.task);
    run.cfg.task = kind;
    let ck_path = input(a.checkpoint, &mut run.cfg.checkpoint, "checkpoint")?;
    let vocab = load_vocab(&input(a.vocab, &mut run.cfg.vocab, "vocab")?)?;
    let train = TaskData::load(kind, &input(a.train, &mut run.cfg.train, "train")?)?;
    let dev = TaskData::load(kind, &input(a.dev, &mut run.cfg.dev, "dev")?)?;
    let ck = load_checkpoint(&ck_path, &vocab)?;
    let spec = task_spec(&run.cfg, kind, &train)?;
    let config = run.cfg.finetune();
    let outcome = finetune::finetune(ck.encoder, spec, &train, &dev, &vocab, &config)?;

    outcome
        .model
        .to_checkpoint(config, vocab.hash(), outcome.step, outcome.best_epoch)
        .save(&run.file("model.bin"))?;
    jsonl::write_json(&run.file("metrics.json"), &outcome.dev_report)?;
    jsonl::write_json(&run.file("history.json"), &outcome.history)?;
    run.finish()?;
    let (score, f1) = outcome.dev_report.selection_key();
    println!(
        "best epoch {}: dev accuracy {score:.4}, macro-F1 {f1:.4}",
        outcome.best_epoch
    );
    Ok(ExitCode::SUCCESS)
}

fn evaluate(run: &mut Run, a: EvaluateArgs) -> Result<ExitCode> {
    let vocab = load_vocab(&input(a.vocab, &mut run.cfg.vocab, "vocab")?)?;
    let model = FineTunedModel::from_checkpoint(load_checkpoint(&a.model, &vocab)?)?;
    run.cfg.task = model.task.kind;
    let data = TaskData::load(model.task.kind, &input(a.data, &mut run.cfg.dev, "data")?)?;
    let (report, preds) = finetune::evaluate(&model, &data, &vocab)?;
    jsonl::write(&run.file("predictions.jsonl"), &preds)?;
    jsonl::write_json(&run.file("metrics.json"), &report)?;
    run.finish()?;
    let (score, f1) = report.selection_key();
    println!("{} examples: accuracy {score:.4}, macro-F1 {f1:.4}", report.examples);
    Ok(ExitCode::SUCCESS)
}

fn analyze(run: &mut Run, a: AnalyzeArgs) -> Result<ExitCode> {
    let pooling = a.pooling.unwrap_or(run.cfg.pooling);
    run.cfg.pooling = pooling;
    let ck_path = input(a.checkpoint, &mut run.cfg.checkpoint, "checkpoint")?;
    let vocab = load_vocab(&input(a.vocab, &mut run.cfg.vocab, "vocab")?)?;
    let encoder = load_checkpoint(&ck_path, &vocab)?.encoder;
    let pairs: Vec<NliExample> = text::read_nli(&a.pairs)?;
    let report: AnalysisReport = analysis::analyze_pairs(&encoder, &vocab, &pairs, pooling)?;
    jsonl::write_json(&run.file("analysis.json"), &report)?;
    if let (Some(x), Some(y)) = (&a.attention_a, &a.attention_b) {
        let att = analysis::export_attention(&encoder, &vocab, x, y)?;
        jsonl::write_json(&run.file("attention.json"), &att)?;
    }
    if a.embeddings {
        let mut seen = std::collections::BTreeSet::new();
        let mut texts = Vec::new();
        for ex in &pairs {
            for s in [&ex.premise, &ex.hypothesis] {
                if seen.insert(s.clone()) {
                    texts.push(s.clone());
                }
            }
        }
        let ids = (0..texts.len()).map(|i| i.to_string()).collect();
        EmbeddingSet::encode(&encoder, &vocab, ids, texts, pooling)?
            .save(&run.file("embeddings.bin"))?;
    }
    run.finish()?;
    println!(
        "alignment-E {:.6} alignment-C {:.6} uniformity {:.6}",
        report.alignment_e, report.alignment_c, report.uniformity
    );
    Ok(ExitCode::SUCCESS)
}

fn retrieve(run: &mut Run, a: RetrieveArgs) -> Result<ExitCode> {
    let pooling = a.pooling.unwrap_or(run.cfg.pooling);
    run.cfg.pooling = pooling;
    let ck_path = input(a.checkpoint, &mut run.cfg.checkpoint, "checkpoint")?;
    let vocab = load_vocab(&input(a.vocab, &mut run.cfg.vocab, "vocab")?)?;
    let encoder = load_checkpoint(&ck_path, &vocab)?.encoder;
    let claims: Vec<ClaimRow> = jsonl::read(&a.claims)?;
    let contexts: Vec<ContextRow> = jsonl::read(&a.contexts)?;
    let cases = analysis::retrieval_cases(&encoder, &vocab, &claims, &contexts, pooling)?;
    let report = RetrievalReport::compute(&cases)?;
    jsonl::write_json(&run.file("retrieval.json"), &report)?;
    run.finish()?;
    println!(
        "{} claims: acc@1 {:.4} acc@3 {:.4} acc@5 {:.4} acc@10 {:.4}",
        report.cases,
        report.accuracy_at_1,
        report.accuracy_at_3,
        report.accuracy_at_5,
        report.accuracy_at_10
    );
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(run: &mut Run, a: SweepArgs) -> Result<ExitCode> {
    let kind = a.task.unwrap_or(run.cfg.task);
    run.cfg.task = kind;
    let triples = load_triples(&input(a.triples, &mut run.cfg.triples, "triples")?)?;
    let vocab = load_vocab(&input(a.vocab, &mut run.cfg.vocab, "vocab")?)?;
    let train = TaskData::load(kind, &input(a.train, &mut run.cfg.train, "train")?)?;
    let dev = TaskData::load(kind, &input(a.dev, &mut run.cfg.dev, "dev")?)?;
    let values: Vec<String> = if a.values.is_empty() {
        a.axis.default_grid().iter().map(|v| v.to_string()).collect()
    } else {
        a.values
    };
    let data = SweepData {
        triples: &triples,
        vocab: &vocab,
        train: &train,
        dev: &dev,
    };
    let rows = sweep::sweep(&run.cfg, a.axis, &values, &data)?;
    sweep::write_sweep_csv(&run.file("sweep.csv"), &rows)?;
    run.finish()?;
    let mut failed = 0;
    for r in &rows {
        match r.dev_accuracy {
            Some(acc) => println!(
                "{}={}: dev accuracy {acc:.4}, macro-F1 {:.4}",
                r.axis,
                r.value,
                r.dev_macro_f1.unwrap_or(f64::NAN)
            ),
            None => {
                failed += 1;
                eprintln!("{}={}: failed: {}", r.axis, r.value, r.error);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} of {} legs failed", rows.len());
        return Ok(ExitCode::from(EXIT_VIOLATION));
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_synthetic(run: &mut Run, a: GenSyntheticArgs) -> Result<ExitCode> {
    if a.topics < 2 || a.words_per_topic == 0 || a.choices < 2 || a.pool < 2 {
        bail!("need at least 2 topics, 1 word per topic, 2 choices and a pool of 2");
    }
    let mut lex = Lexicon::new(a.topics, a.words_per_topic, run.cfg.seed);
    let nli = lex.nli(a.premises, "synthetic");
    let held_out = lex.nli(a.held_out, "synthetic");
    let (claims, contexts) = lex.retrieval(a.claims, a.pool);
    jsonl::write(&run.file("nli.jsonl"), &nli)?;
    jsonl::write(&run.file("held_out.jsonl"), &held_out)?;
    jsonl::write(&run.file("claims.jsonl"), &claims)?;
    jsonl::write(&run.file("contexts.jsonl"), &contexts)?;

    let split = |kind, rows: Vec<_>, n: usize| {
        let (train, dev) = rows.split_at(n);
        (
            TaskData::classification(kind, train.to_vec()),
            TaskData::classification(kind, dev.to_vec()),
        )
    };
    let total = a.task_train + a.task_dev;
    let (train, dev) = split(TaskKind::Pair, lex.marker_pairs(total), a.task_train);
    train.save(&run.file("pair_train.jsonl"))?;
    dev.save(&run.file("pair_dev.jsonl"))?;
    let (train, dev) = split(TaskKind::Single, lex.marker_singles(total), a.task_train);
    train.save(&run.file("single_train.jsonl"))?;
    dev.save(&run.file("single_dev.jsonl"))?;
    let mut questions = lex.mrc(total, a.choices);
    let dev_q = questions.split_off(a.task_train);
    TaskData::multiple_choice(questions).save(&run.file("mrc_train.jsonl"))?;
    TaskData::multiple_choice(dev_q).save(&run.file("mrc_dev.jsonl"))?;

    run.cfg.nli = Some(run.file("nli.jsonl"));
    run.finish()?;
    println!(
        "{} NLI rows, {} held-out rows, {} claims over {} contexts",
        nli.len(),
        held_out.len(),
        claims.len(),
        contexts.len()
    );
    Ok(ExitCode::SUCCESS)
}
