//! Classification metrics and the cross-dataset evaluation grid.
//!
//! Every classifier is scored on every dataset's test split, giving a
//! (trained-on x tested-on) grid of precision/recall/F1/AUC cells.
//! Undefined ratios (0/0) are reported as absent rather than 0 so they
//! cannot silently deflate averages. AUC is the Mann-Whitney rank
//! statistic: the probability that a random positive message outranks a
//! random negative one, ties credited 0.5.

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Class, LabeledDataset, Message};
use crate::error::Error;
use crate::vocab::{class_corpus_name, SimilarityMatrix};
use crate::Result;

/// Counts from thresholding scores against truths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Predicted positive iff `p_pos >= threshold`.
pub fn confusion(items: &[(f64, Class)], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for &(p_pos, truth) in items {
        let predicted_positive = p_pos >= threshold;
        match (predicted_positive, truth) {
            (true, Class::Positive) => c.tp += 1,
            (true, Class::Negative) => c.fp += 1,
            (false, Class::Negative) => c.tn += 1,
            (false, Class::Positive) => c.fn_ += 1,
        }
    }
    c
}

/// Pairs scores with truths by message id; the two sets must coincide.
pub fn align_scores(
    scores: &std::collections::BTreeMap<String, f64>,
    truths: &std::collections::BTreeMap<String, Class>,
) -> Result<Vec<(f64, Class)>> {
    let missing: Vec<&str> = truths
        .keys()
        .filter(|id| !scores.contains_key(*id))
        .map(|s| s.as_str())
        .collect();
    let extra: Vec<&str> = scores
        .keys()
        .filter(|id| !truths.contains_key(*id))
        .map(|s| s.as_str())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::IdMismatch {
            message: format!(
                "{} ids without scores (e.g. {:?}), {} scores without truths (e.g. {:?})",
                missing.len(),
                missing.first(),
                extra.len(),
                extra.first()
            ),
        });
    }
    Ok(truths
        .iter()
        .map(|(id, class)| (scores[id], *class))
        .collect())
}

/// Precision, recall and F1; `None` marks an undefined 0/0 ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn precision_recall_f1(c: &Confusion) -> Prf {
    let precision = if c.tp + c.fp > 0 {
        Some(c.tp as f64 / (c.tp + c.fp) as f64)
    } else {
        None
    };
    let recall = if c.tp + c.fn_ > 0 {
        Some(c.tp as f64 / (c.tp + c.fn_) as f64)
    } else {
        None
    };
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

/// Rank-based AUC over (p_pos, truth) pairs in O(N log N).
///
/// Equals the all-pairs count of positives ranked above negatives with
/// 0.5 per tie, divided by `n_pos * n_neg`.
pub fn auc(items: &[(f64, Class)]) -> Result<f64> {
    let n_pos = items.iter().filter(|(_, c)| c.is_positive()).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassAuc);
    }

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[a]
            .0
            .partial_cmp(&items[b].0)
            .expect("scores must not be NaN")
    });

    // Average ranks across tie groups, 1-based.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && items[order[j]].0 == items[order[i]].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1 ..= j
        for &idx in &order[i..j] {
            if items[idx].1.is_positive() {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// A source of probability pairs for any dataset's messages.
pub trait ScoreSource: Sync {
    fn name(&self) -> &str;

    /// `(p_neg, p_pos)` per message, aligned with `messages`.
    fn score(&self, dataset: &str, messages: &[&Message]) -> Result<Vec<(f64, f64)>>;
}

/// One (trained-on, tested-on) evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct EvalCell {
    pub trained_on: String,
    pub tested_on: String,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auc: f64,
}

/// Complete (classifier x dataset) grid over test splits.
#[derive(Debug, Clone, Serialize)]
pub struct EvalGrid {
    pub classifiers: Vec<String>,
    pub datasets: Vec<String>,
    /// Row-major: `cells[classifier_idx * datasets.len() + dataset_idx]`.
    pub cells: Vec<EvalCell>,
}

impl EvalGrid {
    pub fn cell(&self, classifier: usize, dataset: usize) -> &EvalCell {
        &self.cells[classifier * self.datasets.len() + dataset]
    }

    /// Flags the per-column maxima of one metric, mirroring the bold
    /// convention of printed grids. Ties mark every tied cell.
    pub fn column_best<F>(&self, metric: F) -> Vec<Vec<bool>>
    where
        F: Fn(&EvalCell) -> Option<f64>,
    {
        let rows = self.classifiers.len();
        let cols = self.datasets.len();
        let mut best = vec![vec![false; cols]; rows];
        for col in 0..cols {
            let max = (0..rows)
                .filter_map(|row| metric(self.cell(row, col)))
                .fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.max(v)))
                });
            if let Some(max) = max {
                for (row, row_best) in best.iter_mut().enumerate() {
                    if metric(self.cell(row, col)) == Some(max) {
                        row_best[col] = true;
                    }
                }
            }
        }
        best
    }
}

/// Evaluates every score source on every dataset's test split at the
/// 0.5 decision threshold.
pub fn cross_grid(
    sources: &[&dyn ScoreSource],
    datasets: &[LabeledDataset],
) -> Result<EvalGrid> {
    let tests: Vec<Vec<&Message>> = datasets
        .iter()
        .map(|ds| ds.test())
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, usize)> = (0..sources.len())
        .flat_map(|s| (0..datasets.len()).map(move |d| (s, d)))
        .collect();

    let cells: Vec<EvalCell> = pairs
        .par_iter()
        .map(|&(s, d)| {
            let messages = &tests[d];
            let scored = sources[s].score(&datasets[d].name, messages)?;
            let items: Vec<(f64, Class)> = scored
                .iter()
                .zip(messages.iter())
                .map(|(&(_, p_pos), m)| (p_pos, m.binary_class))
                .collect();
            let c = confusion(&items, 0.5);
            let prf = precision_recall_f1(&c);
            Ok(EvalCell {
                trained_on: sources[s].name().to_string(),
                tested_on: datasets[d].name.clone(),
                confusion: c,
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                auc: auc(&items)?,
            })
        })
        .collect::<Result<_>>()?;

    Ok(EvalGrid {
        classifiers: sources.iter().map(|s| s.name().to_string()).collect(),
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        cells,
    })
}

/// One grid cell joined with the vocabulary similarity of its
/// (train, test) dataset pair.
#[derive(Debug, Clone, Serialize)]
pub struct SimilarityAucPoint {
    pub trained_on: String,
    pub tested_on: String,
    pub sim_pos: f64,
    pub sim_neg: f64,
    pub auc: f64,
}

/// Joins the grid with the similarity matrix: one point per cell, with
/// the positive-positive and negative-negative class-corpus similarities.
pub fn similarity_auc_export(
    grid: &EvalGrid,
    sims: &SimilarityMatrix,
) -> Result<Vec<SimilarityAucPoint>> {
    grid.cells
        .iter()
        .map(|cell| {
            let lookup = |a: &str, b: &str| {
                sims.get(a, b).ok_or_else(|| Error::NameMismatch {
                    message: format!("no similarity entry for ({a}, {b})"),
                })
            };
            let sim_pos = lookup(
                &class_corpus_name(&cell.trained_on, Class::Positive),
                &class_corpus_name(&cell.tested_on, Class::Positive),
            )?;
            let sim_neg = lookup(
                &class_corpus_name(&cell.trained_on, Class::Negative),
                &class_corpus_name(&cell.tested_on, Class::Negative),
            )?;
            Ok(SimilarityAucPoint {
                trained_on: cell.trained_on.clone(),
                tested_on: cell.tested_on.clone(),
                sim_pos,
                sim_neg,
                auc: cell.auc,
            })
        })
        .collect()
}
