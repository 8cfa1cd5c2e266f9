//! NLI corpora → contrastive triples.
//!
//! For every premise, entailment hypotheses become positives and contradiction
//! hypotheses become hard negatives. The k-th entailment is paired with the
//! k-th contradiction in input order and leftovers are dropped, so a premise
//! yields `min(#entailment, #contradiction)` triples. Neutral pairs never
//! contribute. A pair whose positive and negative texts are identical is
//! skipped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::text::tokenizer::normalize_whitespace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Contradiction,
    Neutral,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NliExample {
    pub premise: String,
    pub hypothesis: String,
    pub label: NliLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl NliExample {
    pub fn new(premise: &str, hypothesis: &str, label: NliLabel) -> Self {
        NliExample {
            premise: premise.to_owned(),
            hypothesis: hypothesis.to_owned(),
            label,
            source: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastiveTriple {
    pub sentence1: String,
    pub sentence2: String,
    pub hard_neg: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub source: String,
    pub premises: usize,
    pub entailment: usize,
    pub contradiction: usize,
    pub neutral_excluded: usize,
    pub triples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sources: Vec<SourceStats>,
    pub total: SourceStats,
}

pub const DEFAULT_SOURCE: &str = "default";

/// Reads NLI JSON-lines, rejecting empty premise/hypothesis fields.
pub fn read_nli(path: &Path) -> Result<Vec<NliExample>> {
    let rows: Vec<(usize, NliExample)> = jsonl::read_numbered(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, ex) in rows {
        if ex.premise.trim().is_empty() || ex.hypothesis.trim().is_empty() {
            return Err(Error::Data {
                path: path.to_path_buf(),
                line,
                message: "premise and hypothesis must be non-empty".into(),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

#[derive(Default)]
struct Group {
    source: String,
    premise: String,
    entail: Vec<String>,
    contra: Vec<String>,
}

pub fn prepare_contrastive(examples: &[NliExample]) -> (Vec<ContrastiveTriple>, DatasetStats) {
    let mut groups: Vec<Group> = Vec::new();
    let mut by_key: HashMap<(String, String), usize> = HashMap::new();
    let mut neutral: BTreeMap<String, usize> = BTreeMap::new();
    let mut source_order: Vec<String> = Vec::new();

    for ex in examples {
        let source = ex.source.clone().unwrap_or_else(|| DEFAULT_SOURCE.to_owned());
        if !source_order.contains(&source) {
            source_order.push(source.clone());
        }
        if ex.label == NliLabel::Neutral {
            *neutral.entry(source).or_default() += 1;
            continue;
        }
        let premise = normalize_whitespace(&ex.premise);
        let gi = *by_key
            .entry((source.clone(), premise.clone()))
            .or_insert_with(|| {
                groups.push(Group {
                    source,
                    premise,
                    ..Group::default()
                });
                groups.len() - 1
            });
        let hyp = normalize_whitespace(&ex.hypothesis);
        match ex.label {
            NliLabel::Entailment => groups[gi].entail.push(hyp),
            NliLabel::Contradiction => groups[gi].contra.push(hyp),
            NliLabel::Neutral => unreachable!(),
        }
    }

    let mut per_source: BTreeMap<String, SourceStats> = BTreeMap::new();
    let mut triples = Vec::new();
    for g in &groups {
        let st = per_source.entry(g.source.clone()).or_default();
        st.premises += 1;
        st.entailment += g.entail.len();
        st.contradiction += g.contra.len();
        for (pos, neg) in g.entail.iter().zip(&g.contra) {
            if pos == neg {
                continue;
            }
            triples.push(ContrastiveTriple {
                sentence1: g.premise.clone(),
                sentence2: pos.clone(),
                hard_neg: neg.clone(),
            });
            st.triples += 1;
        }
    }

    let mut stats = DatasetStats {
        total: SourceStats {
            source: "total".into(),
            ..SourceStats::default()
        },
        ..DatasetStats::default()
    };
    for source in source_order {
        let mut st = per_source.remove(&source).unwrap_or_default();
        st.source = source.clone();
        st.neutral_excluded = neutral.get(&source).copied().unwrap_or(0);
        stats.total.premises += st.premises;
        stats.total.entailment += st.entailment;
        stats.total.contradiction += st.contradiction;
        stats.total.neutral_excluded += st.neutral_excluded;
        stats.total.triples += st.triples;
        stats.sources.push(st);
    }
    (triples, stats)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleField {
    Sentence1,
    Sentence2,
    HardNeg,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageViolation {
    pub triple_index: usize,
    pub field: TripleField,
    pub sentence: String,
}

/// Every (triple, field) whose sentence occurs in `held_out`. Comparison is on
/// whitespace-normalized text.
pub fn leakage_guard<S: AsRef<str>>(
    triples: &[ContrastiveTriple],
    held_out: &[S],
) -> Vec<LeakageViolation> {
    let held: HashSet<String> = held_out
        .iter()
        .map(|s| normalize_whitespace(s.as_ref()))
        .collect();
    let mut out = Vec::new();
    for (i, t) in triples.iter().enumerate() {
        for (field, s) in [
            (TripleField::Sentence1, &t.sentence1),
            (TripleField::Sentence2, &t.sentence2),
            (TripleField::HardNeg, &t.hard_neg),
        ] {
            if held.contains(&normalize_whitespace(s)) {
                out.push(LeakageViolation {
                    triple_index: i,
                    field,
                    sentence: s.clone(),
                });
            }
        }
    }
    out
}
