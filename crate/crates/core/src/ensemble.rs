//! Combining per-classifier probability pairs into one verdict.
//!
//! Seven strategies: a trained linear combiner (LL), democratic voting
//! (DV), sum voting (SV), maximum-confidence wins (MW), two thresholding
//! variants (T0.5, T0.95), and a dataset-merger baseline (DM) that trains
//! one classifier on all datasets pooled.
//!
//! Every tie breaks to the negative class: the negative class is ordinary
//! speech, and a coin-flip positive would restrict it.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Class, LabeledDataset, Message, SplitTag};
use crate::error::Error;
use crate::evaluate::{confusion, precision_recall_f1, Confusion, ScoreSource};
use crate::linear::TrainConfig;
use crate::rng::{derive_seed, SplitMix64};
use crate::Result;

/// `(p_neg, p_pos)` from one base classifier.
pub type ProbPair = (f64, f64);

/// Dropout applied to combiner inputs while training.
pub const COMBINER_DROPOUT_RATE: f64 = 0.5;

/// Argmax of one pair; an exact tie is negative.
fn pair_vote(pair: ProbPair) -> Class {
    if pair.1 > pair.0 {
        Class::Positive
    } else {
        Class::Negative
    }
}

/// Majority vote over per-classifier argmaxes; vote ties are negative.
pub fn democratic_vote(input: &[ProbPair]) -> Class {
    let positive = input.iter().filter(|p| pair_vote(**p).is_positive()).count();
    let negative = input.len() - positive;
    if positive > negative {
        Class::Positive
    } else {
        Class::Negative
    }
}

/// Each classifier votes with its probabilities; the larger sum wins and
/// an exact tie is negative.
pub fn sum_vote(input: &[ProbPair]) -> Class {
    let sum_neg: f64 = input.iter().map(|p| p.0).sum();
    let sum_pos: f64 = input.iter().map(|p| p.1).sum();
    if sum_pos > sum_neg {
        Class::Positive
    } else {
        Class::Negative
    }
}

/// The single most confident classifier decides; confidence ties keep
/// the lowest classifier index.
pub fn max_wins(input: &[ProbPair]) -> Class {
    let mut best_idx = 0usize;
    let mut best_conf = f64::NEG_INFINITY;
    for (i, pair) in input.iter().enumerate() {
        let conf = pair.0.max(pair.1);
        if conf > best_conf {
            best_conf = conf;
            best_idx = i;
        }
    }
    match input.get(best_idx) {
        Some(&pair) => pair_vote(pair),
        None => Class::Negative,
    }
}

/// What a thresholding ensemble does when no classifier clears `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    Negative,
    MaxWins,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub tau: f64,
    pub fallback: Fallback,
}

/// Positive as soon as any classifier reports `p_pos >= tau`; otherwise
/// the fallback decides.
pub fn threshold_vote(input: &[ProbPair], policy: &ThresholdPolicy) -> Class {
    if input.iter().any(|p| p.1 >= policy.tau) {
        return Class::Positive;
    }
    match policy.fallback {
        Fallback::Negative => Class::Negative,
        Fallback::MaxWins => max_wins(input),
    }
}

/// Trained linear combiner over the concatenated probability pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinerModel {
    k: usize,
    /// `[2][2k]`, inputs ordered `p_neg_0, p_pos_0, p_neg_1, ...`
    weights: Vec<Vec<f64>>,
    bias: [f64; 2],
    /// Training-time input dropout; kept for provenance.
    pub dropout_rate: f64,
}

impl CombinerModel {
    pub fn new(k: usize) -> Self {
        CombinerModel {
            k,
            weights: vec![vec![0.0; 2 * k]; 2],
            bias: [0.0, 0.0],
            dropout_rate: COMBINER_DROPOUT_RATE,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn set_weight(&mut self, row: usize, input: usize, value: f64) {
        self.weights[row][input] = value;
    }

    pub fn set_bias(&mut self, bias: [f64; 2]) {
        self.bias = bias;
    }

    fn logits(&self, x: &[f64]) -> [f64; 2] {
        let mut z = self.bias;
        for (j, &v) in x.iter().enumerate() {
            z[0] += self.weights[0][j] * v;
            z[1] += self.weights[1][j] * v;
        }
        z
    }

    /// Softmax output over the concatenated pairs.
    pub fn predict(&self, input: &[ProbPair]) -> ProbPair {
        softmax2(self.logits(&concat_pairs(input)))
    }

    pub fn verdict(&self, input: &[ProbPair]) -> Class {
        pair_vote(self.predict(input))
    }
}

fn softmax2(z: [f64; 2]) -> ProbPair {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    (e0 / (e0 + e1), e1 / (e0 + e1))
}

fn concat_pairs(input: &[ProbPair]) -> Vec<f64> {
    let mut x = Vec::with_capacity(2 * input.len());
    for &(p_neg, p_pos) in input {
        x.push(p_neg);
        x.push(p_pos);
    }
    x
}

fn class_index(class: Class) -> usize {
    match class {
        Class::Negative => 0,
        Class::Positive => 1,
    }
}

/// Mean cross-entropy over dense input rows plus `l2/2 * ||W||^2`.
pub fn combiner_loss(model: &CombinerModel, xs: &[Vec<f64>], ys: &[Class], l2: f64) -> f64 {
    let ce: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let p = softmax2(model.logits(x));
            let py = match y {
                Class::Negative => p.0,
                Class::Positive => p.1,
            };
            -py.max(f64::MIN_POSITIVE).ln()
        })
        .sum();
    ce / xs.len() as f64
        + 0.5 * l2
            * model
                .weights
                .iter()
                .flat_map(|row| row.iter())
                .map(|w| w * w)
                .sum::<f64>()
}

/// Full gradient of [`combiner_loss`]: per-row weight grads and bias grad.
pub fn combiner_grad(
    model: &CombinerModel,
    xs: &[Vec<f64>],
    ys: &[Class],
    l2: f64,
) -> (Vec<Vec<f64>>, [f64; 2]) {
    let dim = 2 * model.k;
    let mut gw = vec![vec![0.0; dim]; 2];
    let mut gb = [0.0, 0.0];
    for (x, y) in xs.iter().zip(ys) {
        let p = softmax2(model.logits(x));
        let mut gz = [p.0, p.1];
        gz[class_index(*y)] -= 1.0;
        for row in 0..2 {
            gb[row] += gz[row];
            for (j, &v) in x.iter().enumerate() {
                gw[row][j] += gz[row] * v;
            }
        }
    }
    let n = xs.len() as f64;
    for row in 0..2 {
        gb[row] /= n;
        for (j, g) in gw[row].iter_mut().enumerate() {
            *g = *g / n + l2 * model.weights[row][j];
        }
    }
    (gw, gb)
}

/// Trains the linear combiner by mini-batch SGD with inverted dropout on
/// the inputs; uses the classifier defaults from `cfg` and returns the
/// final-epoch parameters.
pub fn train_combiner(
    inputs: &[Vec<ProbPair>],
    truths: &[Class],
    cfg: &TrainConfig,
) -> Result<CombinerModel> {
    if inputs.len() != truths.len() || inputs.is_empty() {
        return Err(Error::InvalidInput(
            "combiner needs matching, non-empty inputs and truths".into(),
        ));
    }
    let k = inputs[0].len();
    if k == 0 || inputs.iter().any(|i| i.len() != k) {
        return Err(Error::InvalidInput(
            "every combiner input must hold the same positive number of pairs".into(),
        ));
    }
    if !truths.iter().any(|c| c.is_positive()) || !truths.iter().any(|c| !c.is_positive()) {
        return Err(Error::SingleClassTraining {
            name: "combiner".into(),
        });
    }

    let xs: Vec<Vec<f64>> = inputs.iter().map(|i| concat_pairs(i)).collect();
    let mut model = CombinerModel::new(k);
    let keep = 1.0 - COMBINER_DROPOUT_RATE;
    let mut lr = cfg.learning_rate;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..xs.len()).collect();
        SplitMix64::new(derive_seed(cfg.seed, &format!("epoch/{epoch}"))).shuffle(&mut order);
        let mut dropout = SplitMix64::new(derive_seed(cfg.seed, &format!("dropout/{epoch}")));

        for chunk in order.chunks(cfg.batch_size) {
            let mut batch_xs = Vec::with_capacity(chunk.len());
            let mut batch_ys = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let masked: Vec<f64> = xs[i]
                    .iter()
                    .map(|&v| if dropout.next_bool(keep) { v / keep } else { 0.0 })
                    .collect();
                batch_xs.push(masked);
                batch_ys.push(truths[i]);
            }
            let (gw, gb) = combiner_grad(&model, &batch_xs, &batch_ys, cfg.l2);
            for row in 0..2 {
                for (j, g) in gw[row].iter().enumerate() {
                    model.weights[row][j] -= lr * g;
                }
                model.bias[row] -= lr * gb[row];
            }
        }
        lr *= cfg.lr_decay_per_epoch;
    }
    Ok(model)
}

/// Pools datasets into one: ids are namespaced `<dataset>/<id>` and each
/// part of the split concatenates with its counterpart, so no message
/// changes sides and merged training never sees any test data.
pub fn merge_datasets(datasets: &[LabeledDataset], name: &str) -> Result<LabeledDataset> {
    if datasets.len() < 2 {
        return Err(Error::InvalidInput(
            "merging needs at least two datasets".into(),
        ));
    }
    let mut messages = Vec::new();
    let mut tags: Vec<SplitTag> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for ds in datasets {
        let ds_tags = ds.tags()?;
        for (m, tag) in ds.messages.iter().zip(ds_tags) {
            let id = format!("{}/{}", ds.name, m.id);
            if !seen.insert(id.clone()) {
                return Err(Error::MergeIdCollision { id });
            }
            let mut merged = m.clone();
            merged.id = id;
            messages.push(merged);
            tags.push(*tag);
        }
    }
    Ok(LabeledDataset::with_assignment(name, messages, tags))
}

/// The seven ensemble strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "LL")]
    LinearLayer,
    #[serde(rename = "DV")]
    DemocraticVote,
    #[serde(rename = "SV")]
    SumVote,
    #[serde(rename = "MW")]
    MaxWins,
    #[serde(rename = "T0.5")]
    ThresholdHalf,
    #[serde(rename = "T0.95")]
    ThresholdHigh,
    #[serde(rename = "DM")]
    DatasetMerger,
}

impl Strategy {
    /// All strategies in report-row order.
    pub const ALL: [Strategy; 7] = [
        Strategy::LinearLayer,
        Strategy::DemocraticVote,
        Strategy::SumVote,
        Strategy::MaxWins,
        Strategy::ThresholdHalf,
        Strategy::ThresholdHigh,
        Strategy::DatasetMerger,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::LinearLayer => "LL",
            Strategy::DemocraticVote => "DV",
            Strategy::SumVote => "SV",
            Strategy::MaxWins => "MW",
            Strategy::ThresholdHalf => "T0.5",
            Strategy::ThresholdHigh => "T0.95",
            Strategy::DatasetMerger => "DM",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One (strategy, dataset) evaluation over a test split.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleCell {
    pub strategy: String,
    pub dataset: String,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub strategies: Vec<String>,
    pub datasets: Vec<String>,
    /// Row-major over (strategy, dataset).
    pub cells: Vec<EnsembleCell>,
}

impl EnsembleReport {
    pub fn cell(&self, strategy: usize, dataset: usize) -> &EnsembleCell {
        &self.cells[strategy * self.datasets.len() + dataset]
    }
}

/// Everything the strategy evaluation needs.
pub struct EnsembleEvalInputs<'a> {
    pub datasets: &'a [LabeledDataset],
    /// The K base classifiers, in fixed order.
    pub base: &'a [&'a dyn ScoreSource],
    /// Classifier trained on the merged dataset, required for DM.
    pub merged: Option<&'a dyn ScoreSource>,
    /// Trained linear combiner, required for LL.
    pub combiner: Option<&'a CombinerModel>,
}

/// Scores every requested strategy on every dataset's test split.
pub fn evaluate_strategies(
    strategies: &[Strategy],
    inputs: &EnsembleEvalInputs<'_>,
) -> Result<EnsembleReport> {
    let mut cells = Vec::with_capacity(strategies.len() * inputs.datasets.len());
    // Gather base scores once per dataset.
    let mut per_dataset: Vec<(Vec<&Message>, Vec<Vec<ProbPair>>)> = Vec::new();
    for ds in inputs.datasets {
        let test = ds.test()?;
        let mut by_classifier = Vec::with_capacity(inputs.base.len());
        for source in inputs.base {
            by_classifier.push(source.score(&ds.name, &test)?);
        }
        // Transpose to per-message pair lists.
        let pairs: Vec<Vec<ProbPair>> = (0..test.len())
            .map(|m| by_classifier.iter().map(|col| col[m]).collect())
            .collect();
        per_dataset.push((test, pairs));
    }

    for strategy in strategies {
        for (ds, (test, pairs)) in inputs.datasets.iter().zip(&per_dataset) {
            let verdicts: Vec<Class> = match strategy {
                Strategy::DemocraticVote => pairs.iter().map(|p| democratic_vote(p)).collect(),
                Strategy::SumVote => pairs.iter().map(|p| sum_vote(p)).collect(),
                Strategy::MaxWins => pairs.iter().map(|p| max_wins(p)).collect(),
                Strategy::ThresholdHalf => {
                    let policy = ThresholdPolicy {
                        tau: 0.5,
                        fallback: Fallback::Negative,
                    };
                    pairs.iter().map(|p| threshold_vote(p, &policy)).collect()
                }
                Strategy::ThresholdHigh => {
                    let policy = ThresholdPolicy {
                        tau: 0.95,
                        fallback: Fallback::MaxWins,
                    };
                    pairs.iter().map(|p| threshold_vote(p, &policy)).collect()
                }
                Strategy::LinearLayer => {
                    let combiner = inputs.combiner.ok_or_else(|| {
                        Error::InvalidInput("LL requested without a trained combiner".into())
                    })?;
                    pairs.iter().map(|p| combiner.verdict(p)).collect()
                }
                Strategy::DatasetMerger => {
                    let merged = inputs.merged.ok_or_else(|| {
                        Error::InvalidInput("DM requested without a merged classifier".into())
                    })?;
                    merged
                        .score(&ds.name, test)?
                        .into_iter()
                        .map(pair_vote)
                        .collect()
                }
            };
            let items: Vec<(f64, Class)> = verdicts
                .iter()
                .zip(test.iter())
                .map(|(v, m)| {
                    (
                        if v.is_positive() { 1.0 } else { 0.0 },
                        m.binary_class,
                    )
                })
                .collect();
            let c = confusion(&items, 0.5);
            let prf = precision_recall_f1(&c);
            cells.push(EnsembleCell {
                strategy: strategy.to_string(),
                dataset: ds.name.clone(),
                confusion: c,
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
            });
        }
    }

    Ok(EnsembleReport {
        strategies: strategies.iter().map(|s| s.to_string()).collect(),
        datasets: inputs.datasets.iter().map(|d| d.name.clone()).collect(),
        cells,
    })
}

/// Training rows for the combiner: every dataset's validation split,
/// scored by every base classifier.
pub fn collect_combiner_training_data(
    datasets: &[LabeledDataset],
    base: &[&dyn ScoreSource],
) -> Result<(Vec<Vec<ProbPair>>, Vec<Class>)> {
    let mut inputs = Vec::new();
    let mut truths = Vec::new();
    for ds in datasets {
        let val = ds.val()?;
        let mut by_classifier = Vec::with_capacity(base.len());
        for source in base {
            by_classifier.push(source.score(&ds.name, &val)?);
        }
        for (m, msg) in val.iter().enumerate() {
            inputs.push(by_classifier.iter().map(|col| col[m]).collect());
            truths.push(msg.binary_class);
        }
    }
    Ok((inputs, truths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn pp(p_pos: f64) -> ProbPair {
        (1.0 - p_pos, p_pos)
    }

    #[test]
    fn democratic_majority_wins() {
        let input: Vec<ProbPair> = (0..8)
            .map(|i| if i < 5 { pp(0.9) } else { pp(0.1) })
            .collect();
        assert_eq!(democratic_vote(&input), Class::Positive);
    }

    #[test]
    fn democratic_even_tie_is_negative() {
        let input: Vec<ProbPair> = (0..8)
            .map(|i| if i < 4 { pp(0.9) } else { pp(0.1) })
            .collect();
        assert_eq!(democratic_vote(&input), Class::Negative);
    }

    #[test]
    fn democratic_all_uncertain_is_negative() {
        let input = vec![pp(0.5); 8];
        assert_eq!(democratic_vote(&input), Class::Negative);
    }

    #[test]
    fn sum_vote_strong_minority_loses() {
        let input = vec![pp(0.9), pp(0.2), pp(0.2)];
        assert_eq!(sum_vote(&input), Class::Negative);
    }

    #[test]
    fn sum_vote_weak_majority_overrules_one_strong_vote() {
        let input = vec![pp(0.95), pp(0.4), pp(0.4), pp(0.4)];
        // 0.95 negative-confidence vote against three 0.6 positives.
        let flipped: Vec<ProbPair> = input.iter().map(|&(n, p)| (p, n)).collect();
        assert_eq!(sum_vote(&flipped), Class::Negative);
        // As given: sum_pos 2.15 > sum_neg 1.85.
        assert_eq!(sum_vote(&input), Class::Positive);
    }

    #[test]
    fn sum_vote_single_classifier_is_its_argmax() {
        assert_eq!(sum_vote(&[pp(0.7)]), Class::Positive);
        assert_eq!(sum_vote(&[pp(0.3)]), Class::Negative);
        assert_eq!(sum_vote(&[pp(0.5)]), Class::Negative);
    }

    #[test]
    fn sum_vote_equals_democratic_for_single_decided_classifier() {
        let mut rng = SplitMix64::new(8);
        for _ in 0..200 {
            let p = rng.next_f64();
            if p == 0.5 {
                continue;
            }
            let input = [pp(p)];
            assert_eq!(sum_vote(&input), democratic_vote(&input));
        }
    }

    #[test]
    fn max_wins_takes_most_confident() {
        assert_eq!(max_wins(&[pp(0.55), pp(0.01)]), Class::Negative);
    }

    #[test]
    fn max_wins_degenerate_uncertainty_is_negative() {
        assert_eq!(max_wins(&[pp(0.5); 8]), Class::Negative);
    }

    #[test]
    fn max_wins_confidence_tie_keeps_lowest_index() {
        assert_eq!(max_wins(&[pp(0.9), pp(0.1)]), Class::Positive);
        assert_eq!(max_wins(&[pp(0.1), pp(0.9)]), Class::Negative);
    }

    #[test]
    fn threshold_any_rule() {
        let policy = ThresholdPolicy {
            tau: 0.5,
            fallback: Fallback::Negative,
        };
        let mut input = vec![pp(0.2); 7];
        input.push(pp(0.51));
        assert_eq!(threshold_vote(&input, &policy), Class::Positive);
    }

    #[test]
    fn threshold_high_falls_back_to_max_wins() {
        let policy = ThresholdPolicy {
            tau: 0.95,
            fallback: Fallback::MaxWins,
        };
        // Highest p_pos is 0.9, below tau, so MW decides.
        let input = vec![pp(0.9), pp(0.2)];
        assert_eq!(threshold_vote(&input, &policy), max_wins(&input));
        assert_eq!(threshold_vote(&input, &policy), Class::Positive);
        // Same shape but the most confident classifier votes negative.
        let input = vec![pp(0.9), pp(0.05)];
        assert_eq!(threshold_vote(&input, &policy), max_wins(&input));
        assert_eq!(threshold_vote(&input, &policy), Class::Negative);
    }

    #[test]
    fn threshold_one_only_fires_on_certainty() {
        let policy = ThresholdPolicy {
            tau: 1.0,
            fallback: Fallback::Negative,
        };
        assert_eq!(threshold_vote(&[pp(0.999)], &policy), Class::Negative);
        assert_eq!(threshold_vote(&[pp(1.0)], &policy), Class::Positive);
    }

    #[test]
    fn threshold_zero_labels_everything_positive() {
        let policy = ThresholdPolicy {
            tau: 0.0,
            fallback: Fallback::Negative,
        };
        let mut rng = SplitMix64::new(2);
        for _ in 0..100 {
            let input: Vec<ProbPair> = (0..1 + rng.next_below(8))
                .map(|_| pp(rng.next_f64()))
                .collect();
            assert_eq!(threshold_vote(&input, &policy), Class::Positive);
        }
    }

    #[test]
    fn threshold_above_one_equals_fallback() {
        let mut rng = SplitMix64::new(3);
        for fallback in [Fallback::Negative, Fallback::MaxWins] {
            let policy = ThresholdPolicy { tau: 1.5, fallback };
            for _ in 0..200 {
                let input: Vec<ProbPair> = (0..1 + rng.next_below(8))
                    .map(|_| pp(rng.next_f64()))
                    .collect();
                let expected = match fallback {
                    Fallback::Negative => Class::Negative,
                    Fallback::MaxWins => max_wins(&input),
                };
                assert_eq!(threshold_vote(&input, &policy), expected);
            }
        }
    }

    #[test]
    fn threshold_is_monotone_in_any_single_score() {
        let mut rng = SplitMix64::new(4);
        for fallback in [Fallback::Negative, Fallback::MaxWins] {
            let policy = ThresholdPolicy { tau: 0.7, fallback };
            for _ in 0..500 {
                let mut input: Vec<ProbPair> = (0..1 + rng.next_below(8))
                    .map(|_| pp(rng.next_f64()))
                    .collect();
                if threshold_vote(&input, &policy) != Class::Positive {
                    continue;
                }
                let i = rng.next_below(input.len() as u64) as usize;
                let raised = (input[i].1 + rng.next_f64() * (1.0 - input[i].1)).min(1.0);
                input[i] = (1.0 - raised, raised);
                assert_eq!(threshold_vote(&input, &policy), Class::Positive);
            }
        }
    }

    #[test]
    fn voting_rules_ignore_classifier_order() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..300 {
            let input: Vec<ProbPair> = (0..2 + rng.next_below(7))
                .map(|_| pp(rng.next_f64()))
                .collect();
            let mut shuffled = input.clone();
            rng.shuffle(&mut shuffled);
            assert_eq!(democratic_vote(&input), democratic_vote(&shuffled));
            assert_eq!(sum_vote(&input), sum_vote(&shuffled));
            let unique_max = {
                let confs: Vec<f64> = input.iter().map(|p| p.0.max(p.1)).collect();
                let max = confs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                confs.iter().filter(|&&c| c == max).count() == 1
            };
            if unique_max {
                assert_eq!(max_wins(&input), max_wins(&shuffled));
            }
        }
    }

    #[test]
    fn identity_wired_combiner_mirrors_first_classifier() {
        let mut model = CombinerModel::new(3);
        model.set_weight(0, 0, 50.0); // row neg <- c0.p_neg
        model.set_weight(1, 1, 50.0); // row pos <- c0.p_pos
        let mut rng = SplitMix64::new(6);
        for _ in 0..200 {
            let input: Vec<ProbPair> = (0..3).map(|_| pp(rng.next_f64())).collect();
            assert_eq!(model.verdict(&input), pair_vote(input[0]));
        }
    }

    #[test]
    fn zero_combiner_outputs_half_half() {
        let model = CombinerModel::new(4);
        let p = model.predict(&[pp(0.9), pp(0.1), pp(0.3), pp(0.7)]);
        assert_eq!(p, (0.5, 0.5));
    }

    #[test]
    fn combiner_gradient_matches_finite_differences() {
        let mut rng = SplitMix64::new(7);
        let k = 4;
        let mut model = CombinerModel::new(k);
        for row in 0..2 {
            for j in 0..2 * k {
                model.set_weight(row, j, rng.next_gaussian());
            }
        }
        model.set_bias([rng.next_gaussian(), rng.next_gaussian()]);

        let xs: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..2 * k).map(|_| rng.next_f64()).collect())
            .collect();
        let ys: Vec<Class> = (0..10)
            .map(|_| {
                if rng.next_bool(0.5) {
                    Class::Positive
                } else {
                    Class::Negative
                }
            })
            .collect();

        let l2 = 1e-4;
        let (gw, gb) = combiner_grad(&model, &xs, &ys, l2);
        let eps = 1e-6;
        for row in 0..2 {
            for j in 0..2 * k {
                let mut plus = model.clone();
                plus.weights[row][j] += eps;
                let mut minus = model.clone();
                minus.weights[row][j] -= eps;
                let numeric = (combiner_loss(&plus, &xs, &ys, l2)
                    - combiner_loss(&minus, &xs, &ys, l2))
                    / (2.0 * eps);
                let rel = (gw[row][j] - numeric).abs() / gw[row][j].abs().max(1e-3);
                assert!(rel < 1e-5, "w[{row}][{j}]: {} vs {numeric}", gw[row][j]);
            }
            let mut plus = model.clone();
            plus.bias[row] += eps;
            let mut minus = model.clone();
            minus.bias[row] -= eps;
            let numeric = (combiner_loss(&plus, &xs, &ys, l2)
                - combiner_loss(&minus, &xs, &ys, l2))
                / (2.0 * eps);
            let rel = (gb[row] - numeric).abs() / gb[row].abs().max(1e-3);
            assert!(rel < 1e-5, "b[{row}]: {} vs {numeric}", gb[row]);
        }
    }

    #[test]
    fn combiner_rejects_single_class_data() {
        let inputs = vec![vec![pp(0.4); 3]; 10];
        let truths = vec![Class::Negative; 10];
        assert!(matches!(
            train_combiner(&inputs, &truths, &TrainConfig::default()),
            Err(Error::SingleClassTraining { .. })
        ));
    }

    #[test]
    fn combiner_learns_to_trust_the_reliable_classifier() {
        // Classifier 0 is always right, classifier 1 is always wrong.
        let mut rng = SplitMix64::new(9);
        let mut inputs = Vec::new();
        let mut truths = Vec::new();
        for _ in 0..400 {
            let truth = if rng.next_bool(0.5) {
                Class::Positive
            } else {
                Class::Negative
            };
            let conf = 0.7 + rng.next_f64() * 0.25;
            let right = if truth.is_positive() { pp(conf) } else { pp(1.0 - conf) };
            let wrong = if truth.is_positive() { pp(1.0 - conf) } else { pp(conf) };
            inputs.push(vec![right, wrong]);
            truths.push(truth);
        }
        let cfg = TrainConfig {
            seed: 10,
            ..Default::default()
        };
        let model = train_combiner(&inputs, &truths, &cfg).unwrap();
        let correct = inputs
            .iter()
            .zip(&truths)
            .filter(|(i, t)| model.verdict(i) == **t)
            .count();
        assert!(
            correct as f64 / inputs.len() as f64 > 0.95,
            "only {correct}/400 correct"
        );
    }

    fn tiny_dataset(name: &str, n: usize, seed: u64) -> LabeledDataset {
        let mut rng = SplitMix64::new(seed);
        let messages: Vec<Message> = (0..n)
            .map(|i| {
                let positive = rng.next_bool(0.4);
                Message {
                    id: format!("m{i}"),
                    text: format!("text {i}"),
                    source_labels: Default::default(),
                    binary_class: if positive { Class::Positive } else { Class::Negative },
                }
            })
            .collect();
        LabeledDataset::from_messages(name, messages)
            .split(seed)
            .unwrap()
    }

    #[test]
    fn merge_concatenates_split_parts() {
        let a = tiny_dataset("A", 40, 1);
        let b = tiny_dataset("B", 25, 2);
        let merged = merge_datasets(&[a.clone(), b.clone()], "merged").unwrap();
        assert_eq!(merged.len(), 65);
        assert_eq!(
            merged.train().unwrap().len(),
            a.train().unwrap().len() + b.train().unwrap().len()
        );
        assert_eq!(
            merged.test().unwrap().len(),
            a.test().unwrap().len() + b.test().unwrap().len()
        );
        // Train split is exactly the union of the namespaced source trains.
        let merged_train: HashSet<String> = merged
            .train()
            .unwrap()
            .iter()
            .map(|m| m.id.clone())
            .collect();
        for m in a.train().unwrap() {
            assert!(merged_train.contains(&format!("A/{}", m.id)));
        }
        for m in b.train().unwrap() {
            assert!(merged_train.contains(&format!("B/{}", m.id)));
        }
    }

    #[test]
    fn merge_rejects_duplicate_namespaced_ids() {
        let a = tiny_dataset("A", 20, 1);
        let b = tiny_dataset("A", 20, 2); // same name, same ids
        assert!(matches!(
            merge_datasets(&[a, b], "merged"),
            Err(Error::MergeIdCollision { .. })
        ));
    }

    #[test]
    fn merge_needs_two_datasets() {
        let a = tiny_dataset("A", 20, 1);
        assert!(merge_datasets(std::slice::from_ref(&a), "merged").is_err());
    }

    #[test]
    fn combiner_verdicts_match_per_message_recomputation() {
        // Batch path (evaluate_strategies) against one-at-a-time calls.
        let mut rng = SplitMix64::new(12);
        let inputs: Vec<Vec<ProbPair>> = (0..500)
            .map(|_| (0..4).map(|_| pp(rng.next_f64())).collect())
            .collect();
        let policy = ThresholdPolicy {
            tau: 0.95,
            fallback: Fallback::MaxWins,
        };
        for input in &inputs {
            // Re-derive every verdict independently with naive loops.
            let votes_pos = input.iter().filter(|(n, p)| p > n).count();
            let dv = if votes_pos * 2 > input.len() {
                Class::Positive
            } else {
                Class::Negative
            };
            assert_eq!(democratic_vote(input), dv);

            let (mut sn, mut sp) = (0.0, 0.0);
            for &(n, p) in input {
                sn += n;
                sp += p;
            }
            let sv = if sp > sn { Class::Positive } else { Class::Negative };
            assert_eq!(sum_vote(input), sv);

            let mut best = 0;
            for i in 1..input.len() {
                let c = input[i].0.max(input[i].1);
                let b = input[best].0.max(input[best].1);
                if c > b {
                    best = i;
                }
            }
            let mw = if input[best].1 > input[best].0 {
                Class::Positive
            } else {
                Class::Negative
            };
            assert_eq!(max_wins(input), mw);

            let tv = if input.iter().any(|&(_, p)| p >= 0.95) {
                Class::Positive
            } else {
                mw
            };
            assert_eq!(threshold_vote(input, &policy), tv);
        }
    }
}
