//! Classification and multiple-choice metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed `[gold][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) {
            return Err(Error::dim("confusion_matrix", &[c, c], &[counts.first().map_or(0, Vec::len)]));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn from_predictions(classes: usize, gold: &[usize], pred: &[usize]) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::Contract(format!(
                "{} gold labels but {} predictions",
                gold.len(),
                pred.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&g, &p) in gold.iter().zip(pred) {
            cm.add(g, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, gold: usize, pred: usize) -> Result<()> {
        let c = self.classes();
        if gold >= c || pred >= c {
            return Err(Error::Contract(format!(
                "class pair ({gold}, {pred}) outside a {c}-class matrix"
            )));
        }
        self.counts[gold][pred] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold][pred]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("accuracy of an empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Unweighted mean of per-class F1 over every class. Precision or recall
/// with a zero denominator count as 0, and so does F1 when both are 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<(f64, Vec<ClassScores>)> {
    if cm.total() == 0 {
        return Err(Error::UndefinedMetric("macro-F1 of an empty confusion matrix".into()));
    }
    let c = cm.classes();
    let per: Vec<ClassScores> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let predicted: u64 = (0..c).map(|g| cm.get(g, k)).sum();
            let support: u64 = (0..c).map(|p| cm.get(k, p)).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let macro_f1 = per.iter().map(|s| s.f1).sum::<f64>() / c as f64;
    Ok((macro_f1, per))
}

/// Fraction of questions whose chosen index equals the gold index.
pub fn mrc_accuracy(predictions: &[usize], golds: &[usize]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} questions",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::UndefinedMetric("no questions to score".into()));
    }
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / golds.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: String,
    #[serde(flatten)]
    pub scores: ClassScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub examples: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassReport>,
    pub confusion: Vec<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrc_accuracy: Option<f64>,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix, labels: &[String]) -> Result<Self> {
        let accuracy = accuracy(cm)?;
        let (macro_f1, per) = macro_f1(cm)?;
        Ok(MetricsReport {
            examples: cm.total(),
            accuracy,
            macro_f1,
            per_class: labels
                .iter()
                .zip(per)
                .map(|(l, s)| ClassReport {
                    label: l.clone(),
                    scores: s,
                })
                .collect(),
            confusion: cm.counts().to_vec(),
            questions: None,
            mrc_accuracy: None,
        })
    }

    /// Model-selection key: question accuracy for multiple choice, otherwise
    /// accuracy, with macro-F1 breaking ties.
    pub fn selection_key(&self) -> (f64, f64) {
        (self.mrc_accuracy.unwrap_or(self.accuracy), self.macro_f1)
    }
}
