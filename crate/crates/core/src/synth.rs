//! Seeded synthetic corpora for self-contained experiments.
//!
//! Each generated dataset shares one neutral vocabulary with every other
//! dataset but owns a disjoint "signal" vocabulary that only its positive
//! messages use. Neutral words are additionally biased per dataset toward
//! one class, and the bias assignment is reshuffled independently per
//! dataset, so a word can lean positive in one corpus and negative in
//! another. That deliberately plants neutral-looking words as strong
//! class markers, the failure mode that makes classifiers trained on one
//! corpus stumble on the next.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::report::write_atomic;
use crate::rng::{derive_seed, SplitMix64};
use crate::Result;

/// Label carried by positive synthetic messages.
pub const SYNTH_POSITIVE_LABEL: &str = "flagged";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_datasets: usize,
    pub messages_per_dataset: usize,
    /// Size of the shared neutral vocabulary.
    pub vocab_size: usize,
    pub positive_rate: f64,
    /// Probability that a positive message carries a signal word.
    pub class_signal_strength: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn from_json(json: &str) -> Result<Self> {
        let spec: SyntheticSpec = serde_json::from_str(json)
            .map_err(|e| Error::InvalidConfig(format!("synthetic spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_datasets == 0 {
            return Err(Error::InvalidConfig("n_datasets must be >= 1".into()));
        }
        if self.messages_per_dataset < 5 {
            return Err(Error::InvalidConfig(
                "messages_per_dataset must be >= 5".into(),
            ));
        }
        if self.vocab_size < 20 {
            return Err(Error::InvalidConfig("vocab_size must be >= 20".into()));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(Error::InvalidConfig(
                "positive_rate must be inside (0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.class_signal_strength) {
            return Err(Error::InvalidConfig(
                "class_signal_strength must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One record of a generated dataset, in the ingestion file shape.
#[derive(Debug, Clone, Serialize)]
pub struct SynthRecord {
    pub id: String,
    pub text: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub name: String,
    pub records: Vec<SynthRecord>,
}

/// Probability that a neutral word is drawn from the class-leaning half.
const NEUTRAL_BIAS: f64 = 0.8;

/// Fraction of the neutral pool each dataset actually uses. Partial
/// overlap keeps inverse document frequencies informative: a word used
/// by every class-corpus would weigh exactly zero.
const NEUTRAL_SHARE: f64 = 0.55;

/// Generates all datasets deterministically from the spec seed.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<SynthDataset>> {
    spec.validate()?;
    let neutral: Vec<String> = (0..spec.vocab_size).map(|w| format!("w{w:04}")).collect();
    let n_signal = (spec.vocab_size / 20).max(4);
    let subset_size = ((spec.vocab_size as f64 * NEUTRAL_SHARE).ceil() as usize).max(10);

    let datasets = (0..spec.n_datasets)
        .map(|d| {
            let name = format!("S{}", d + 1);
            let mut rng = SplitMix64::new(derive_seed(spec.seed, &format!("synth/{d}")));

            let signal: Vec<String> = (0..n_signal).map(|s| format!("sig{d}x{s}")).collect();
            // Each dataset draws its own slice of the shared pool and
            // biases it toward one class per word.
            let mut leaning: Vec<usize> = (0..spec.vocab_size).collect();
            rng.shuffle(&mut leaning);
            leaning.truncate(subset_size);
            let (pos_leaning, neg_leaning) = leaning.split_at(subset_size / 2);

            let records = (0..spec.messages_per_dataset)
                .map(|m| {
                    let positive = rng.next_bool(spec.positive_rate);
                    let length = 6 + rng.next_below(10) as usize;
                    let (own, other) = if positive {
                        (pos_leaning, neg_leaning)
                    } else {
                        (neg_leaning, pos_leaning)
                    };
                    let mut words: Vec<&str> = (0..length)
                        .map(|_| {
                            let half = if rng.next_bool(NEUTRAL_BIAS) { own } else { other };
                            neutral[half[rng.next_below(half.len() as u64) as usize]].as_str()
                        })
                        .collect();
                    if positive && rng.next_bool(spec.class_signal_strength) {
                        words.push(signal[rng.next_below(n_signal as u64) as usize].as_str());
                    }
                    SynthRecord {
                        id: format!("{name}-{m:06}"),
                        text: words.join(" "),
                        labels: if positive {
                            vec![SYNTH_POSITIVE_LABEL.to_string()]
                        } else {
                            Vec::new()
                        },
                    }
                })
                .collect();

            SynthDataset { name, records }
        })
        .collect();

    Ok(datasets)
}

/// Writes `<name>.jsonl` per dataset into `dir`; returns the paths.
pub fn write_datasets(datasets: &[SynthDataset], dir: &Path) -> Result<Vec<PathBuf>> {
    datasets
        .iter()
        .map(|ds| {
            let mut body = String::new();
            for record in &ds.records {
                body.push_str(&serde_json::to_string(record).expect("record serializes"));
                body.push('\n');
            }
            let path = dir.join(format!("{}.jsonl", ds.name));
            write_atomic(&path, body.as_bytes())?;
            Ok(path)
        })
        .collect()
}
