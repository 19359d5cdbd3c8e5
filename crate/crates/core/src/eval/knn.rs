use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rayon::prelude::*;

use super::RepresentationTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 − cos(a, b)`.
    Cosine,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            _ => Err(Error::Config(format!("unknown metric `{s}`"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        Metric::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - dot / (na * nb)
            }
        }
    }
}

/// The `k` nearest training rows of `q` as `(distance, index)`, closest
/// first; equal distances are ordered by index.
fn neighbours(train: &RepresentationTable, q: &[f64], k: usize, metric: Metric) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = (0..train.len())
        .map(|i| (distance(train.row(i), q, metric), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d
}

/// Majority vote over `nn`; ties go to the class with the smallest summed
/// distance, then to the smallest label.
pub fn vote(nn: &[(f64, usize)], labels: &[usize]) -> usize {
    let mut tally: Vec<(usize, usize, f64)> = Vec::new();
    for &(d, i) in nn {
        let y = labels[i];
        match tally.iter_mut().find(|t| t.0 == y) {
            Some(t) => {
                t.1 += 1;
                t.2 += d;
            }
            None => tally.push((y, 1, d)),
        }
    }
    tally
        .into_iter()
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|t| t.0)
        .expect("at least one neighbour")
}

fn check(train: &RepresentationTable, test: &RepresentationTable, k: usize) -> Result<()> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data("kNN needs non-empty train and test tables".into()));
    }
    if train.dim() != test.dim() {
        return Err(Error::Dimension(format!(
            "train representations are {}-d, test are {}-d",
            train.dim(),
            test.dim()
        )));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Precondition(format!("k = {k} outside 1..={}", train.len())));
    }
    Ok(())
}

/// Predicted label for every test row.
pub fn knn_predict(
    train: &RepresentationTable,
    test: &RepresentationTable,
    k: usize,
    metric: Metric,
) -> Result<Vec<usize>> {
    check(train, test, k)?;
    Ok((0..test.len())
        .into_par_iter()
        .map(|i| vote(&neighbours(train, test.row(i), k, metric), &train.labels))
        .collect())
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Test accuracy of a `k`-nearest-neighbour majority vote.
pub fn knn_classify(train: &RepresentationTable, test: &RepresentationTable, k: usize, metric: Metric) -> Result<f64> {
    Ok(accuracy(&knn_predict(train, test, k, metric)?, &test.labels))
}

/// `(best_k, best_accuracy, accuracy per k)`.
pub type KnnSweep = (usize, f64, Vec<(usize, f64)>);

/// Best accuracy over `ks`, with the smallest `k` that achieves it.
///
/// Also returns the accuracy for every `k` in the range.
pub fn knn_sweep(
    train: &RepresentationTable,
    test: &RepresentationTable,
    ks: RangeInclusive<usize>,
    metric: Metric,
) -> Result<KnnSweep> {
    let (lo, hi) = (*ks.start(), *ks.end());
    if lo > hi {
        return Err(Error::Precondition("empty k range".into()));
    }
    check(train, test, lo)?;
    let hi = hi.min(train.len());
    // Neighbour lists for the largest k serve every smaller k.
    let lists: Vec<Vec<(f64, usize)>> = (0..test.len())
        .into_par_iter()
        .map(|i| neighbours(train, test.row(i), hi, metric))
        .collect();
    let mut per_k = Vec::new();
    for k in lo..=hi {
        let pred: Vec<usize> = lists.iter().map(|nn| vote(&nn[..k], &train.labels)).collect();
        per_k.push((k, accuracy(&pred, &test.labels)));
    }
    let (best_k, best) = per_k
        .iter()
        .copied()
        .fold((lo, f64::NEG_INFINITY), |acc, (k, a)| if a > acc.1 { (k, a) } else { acc });
    Ok((best_k, best, per_k))
}
