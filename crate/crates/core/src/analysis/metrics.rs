use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A query embedding, its candidate pool and the index of the gold candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCase {
    pub claim: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
    pub gold: usize,
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    crate::tensor::cosine_similarity(a, b)
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = crate::tensor::norm(v);
    if n == 0.0 {
        return Err(Error::Degenerate("zero embedding".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl RetrievalCase {
    /// 0-based position of the gold candidate when candidates are sorted by
    /// descending cosine similarity, lower index first on ties.
    pub fn gold_rank(&self) -> Result<usize> {
        if self.gold >= self.candidates.len() {
            return Err(Error::Input(format!(
                "gold index {} outside a pool of {}",
                self.gold,
                self.candidates.len()
            )));
        }
        let sims = self
            .candidates
            .iter()
            .map(|c| cosine(&self.claim, c))
            .collect::<Result<Vec<_>>>()?;
        let g = sims[self.gold];
        Ok(sims
            .iter()
            .enumerate()
            .filter(|&(j, &s)| s > g || (s == g && j < self.gold))
            .count())
    }
}

/// Share of cases whose gold candidate is among the `k` most similar. `k`
/// larger than a pool counts as the whole pool.
pub fn accuracy_at_topk(cases: &[RetrievalCase], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if cases.is_empty() {
        return Err(Error::UndefinedMetric("accuracy@K over zero cases".into()));
    }
    let mut hits = 0usize;
    for c in cases {
        if c.gold_rank()? < k.min(c.candidates.len()) {
            hits += 1;
        }
    }
    Ok(hits as f64 / cases.len() as f64)
}

/// Mean squared distance between the unit-normalised members of each pair.
pub fn alignment<A: AsRef<[f64]>, B: AsRef<[f64]>>(pairs: &[(A, B)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("alignment over zero pairs".into()));
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        let (a, b) = (a.as_ref(), b.as_ref());
        if a.len() != b.len() {
            return Err(Error::dim("alignment", &[a.len()], &[b.len()]));
        }
        total += sq_dist(&unit(a)?, &unit(b)?);
    }
    Ok(total / pairs.len() as f64)
}

/// `log mean exp(-2‖x - y‖²)` over distinct unordered pairs of unit-normalised
/// rows.
pub fn uniformity<R: AsRef<[f64]>>(rows: &[R]) -> Result<f64> {
    if rows.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "uniformity needs at least 2 embeddings, got {}",
            rows.len()
        )));
    }
    let units = rows
        .iter()
        .map(|r| unit(r.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let d = units[0].len();
    if let Some(bad) = units.iter().find(|u| u.len() != d) {
        return Err(Error::dim("uniformity", &[d], &[bad.len()]));
    }
    // Sum in pair order; the largest term is subtracted first so tightly
    // clustered sets do not underflow.
    let exps: Vec<f64> = (0..units.len())
        .flat_map(|i| (i + 1..units.len()).map(move |j| (i, j)))
        .map(|(i, j)| -2.0 * sq_dist(&units[i], &units[j]))
        .collect();
    let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = exps.iter().map(|e| (e - m).exp()).sum();
    Ok(m + (s / exps.len() as f64).ln())
}
