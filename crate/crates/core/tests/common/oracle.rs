//! Straightforward scalar re-derivations used as references.

use std::collections::HashMap;

use contrasent::text::{ContrastiveTriple, NliExample, NliLabel};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

fn unit(a: &[f64]) -> Vec<f64> {
    let n = dot(a, a).sqrt();
    a.iter().map(|x| x / n).collect()
}

/// Per-row cross-entropy of the positive among all positives and hard
/// negatives, averaged.
pub fn contrastive_loss(a: &[Vec<f64>], p: &[Vec<f64>], n: &[Vec<f64>], tau: f64) -> f64 {
    let rows = a.len();
    let mut total = 0.0;
    for i in 0..rows {
        let mut logits = Vec::with_capacity(2 * rows);
        for j in 0..rows {
            logits.push(cosine(&a[i], &p[j]) / tau);
        }
        for j in 0..rows {
            logits.push(cosine(&a[i], &n[j]) / tau);
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - logits[i];
    }
    total / rows as f64
}

pub fn accuracy(gold: &[usize], pred: &[usize]) -> f64 {
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    hits as f64 / gold.len() as f64
}

pub fn macro_f1(classes: usize, gold: &[usize], pred: &[usize]) -> f64 {
    let mut sum = 0.0;
    for c in 0..classes {
        let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
        for (&g, &p) in gold.iter().zip(pred) {
            if p == c && g == c {
                tp += 1.0;
            } else if p == c {
                fp += 1.0;
            } else if g == c {
                fneg += 1.0;
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        sum += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    sum / classes as f64
}

/// Sorts candidates by descending cosine, then by index, and looks for the
/// gold among the first `k`.
pub fn accuracy_at_k(claims: &[Vec<f64>], pools: &[Vec<Vec<f64>>], gold: &[usize], k: usize) -> f64 {
    let mut hits = 0;
    for i in 0..claims.len() {
        let mut order: Vec<(f64, usize)> = pools[i]
            .iter()
            .enumerate()
            .map(|(j, c)| (cosine(&claims[i], c), j))
            .collect();
        order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
        if order.iter().take(k).any(|&(_, j)| j == gold[i]) {
            hits += 1;
        }
    }
    hits as f64 / claims.len() as f64
}

pub fn alignment(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (a, b) = (unit(a), unit(b));
        total += a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
    }
    total / x.len() as f64
}

pub fn uniformity(x: &[Vec<f64>]) -> f64 {
    let u: Vec<Vec<f64>> = x.iter().map(|r| unit(r)).collect();
    let (mut sum, mut count) = (0.0, 0.0);
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            let d2: f64 = u[i].iter().zip(&u[j]).map(|(a, b)| (a - b).powi(2)).sum();
            sum += (-2.0 * d2).exp();
            count += 1.0;
        }
    }
    (sum / count).ln()
}

/// Every (premise, k-th entailment, k-th contradiction) in first-appearance
/// order of the premises.
pub fn enumerate_triples(rows: &[NliExample]) -> Vec<ContrastiveTriple> {
    let mut order: Vec<String> = Vec::new();
    let mut ent: HashMap<String, Vec<String>> = HashMap::new();
    let mut con: HashMap<String, Vec<String>> = HashMap::new();
    for r in rows {
        let target = match r.label {
            NliLabel::Entailment => &mut ent,
            NliLabel::Contradiction => &mut con,
            NliLabel::Neutral => continue,
        };
        if !order.contains(&r.premise) {
            order.push(r.premise.clone());
        }
        target.entry(r.premise.clone()).or_default().push(r.hypothesis.clone());
    }
    let mut out = Vec::new();
    for p in order {
        let e = ent.get(&p).cloned().unwrap_or_default();
        let c = con.get(&p).cloned().unwrap_or_default();
        for k in 0..e.len().min(c.len()) {
            out.push(ContrastiveTriple {
                sentence1: p.clone(),
                sentence2: e[k].clone(),
                hard_neg: c[k].clone(),
            });
        }
    }
    out
}
