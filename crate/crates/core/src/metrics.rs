//! Classification and interpretability scores.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Scores paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Metric(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Metric("labels must be 0 or 1".into()));
        }
        Ok(Self { scores, labels })
    }
}

/// Area under the ROC curve via the Mann–Whitney rank sum: the probability
/// that a random positive outranks a random negative, ties counting one half.
pub fn auc(set: &ScoredSet) -> Result<f64> {
    let n = set.scores.len();
    let pos = set.labels.iter().filter(|&&l| l == 1).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("AUC needs at least one positive and one negative".into()));
    }
    if set.scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("AUC scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.scores[a].partial_cmp(&set.scores[b]).unwrap_or(Ordering::Equal));
    // average ranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let group_pos = order[i..=j].iter().filter(|&&k| set.labels[k] == 1).count();
        rank_sum_pos += avg_rank * group_pos as f64;
        i = j + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}

/// Fraction of samples whose thresholded probability matches the label.
pub fn accuracy(probabilities: &[f64], labels: &[u8], threshold: f64) -> f64 {
    if probabilities.is_empty() {
        return 0.0;
    }
    let hits = probabilities
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p >= threshold) == y)
        .count();
    hits as f64 / probabilities.len() as f64
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Sign vector over `{−1, +1}` describing which class each feature points to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterpLabel {
    signs: Vec<i8>,
}

impl InterpLabel {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::contract("interpretability signs must be -1 or +1"));
        }
        Ok(Self { signs })
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

/// Ground-truth signs: all `+1` for the positive class, all `−1` otherwise.
pub fn ground_truth_interp(y: u8, n: usize) -> InterpLabel {
    InterpLabel {
        signs: vec![if y == 1 { 1 } else { -1 }; n],
    }
}

/// Element-wise sign of the scores; an exact zero counts as `+1`.
pub fn predicted_interp(rss: &[f64]) -> InterpLabel {
    InterpLabel {
        signs: rss.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect(),
    }
}

/// How two sign vectors are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JaccardMode {
    /// Jaccard index of the `(position, sign)` token sets: `m / (2N − m)`.
    #[default]
    Token,
    /// Plain agreement rate `m / N`.
    MatchRate,
}

fn matching(a: &InterpLabel, b: &InterpLabel) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "interpretability labels differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::contract("empty interpretability labels"));
    }
    Ok(a.signs.iter().zip(&b.signs).filter(|(x, y)| x == y).count())
}

/// Jaccard index of two sign vectors under the token encoding.
pub fn jaccard_signed(a: &InterpLabel, b: &InterpLabel) -> Result<f64> {
    jaccard_with(a, b, JaccardMode::Token)
}

pub fn jaccard_with(a: &InterpLabel, b: &InterpLabel, mode: JaccardMode) -> Result<f64> {
    let m = matching(a, b)? as f64;
    let n = a.len() as f64;
    Ok(match mode {
        JaccardMode::Token => m / (2.0 * n - m),
        JaccardMode::MatchRate => m / n,
    })
}

/// Mean agreement between per-sample predicted and ground-truth signs.
/// Each item is `(label, rss values)`; the result lies in `[0, 1]`.
pub fn interpretability_accuracy<'a, I>(samples: I, mode: JaccardMode) -> Result<f64>
where
    I: IntoIterator<Item = (u8, &'a [f64])>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for (y, rss) in samples {
        let truth = ground_truth_interp(y, rss.len());
        total += jaccard_with(&truth, &predicted_interp(rss), mode)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::contract("interpretability accuracy of an empty set"));
    }
    Ok(total / count as f64)
}
