//! Dataset ingestion, label merging, and deterministic splits.
//!
//! A dataset is a UTF-8 file with one JSON object per line:
//!
//! ```text
//! {"id": "m1", "text": "hello", "labels": ["toxic"], "split": "train"}
//! ```
//!
//! `split` is optional; when every record carries it the dataset ships with
//! a predefined partition and [`LabeledDataset::split`] only validates it.
//! Otherwise the partition is drawn with a seeded Fisher-Yates shuffle:
//! 20% test, then 20% of the remainder val, rest train (sizes rounded
//! half-up, remainder to train), so the same `(messages, seed)` pair gives
//! the same partition on every platform.

mod tokenize;

pub use tokenize::tokenize;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::SplitMix64;
use crate::Result;

/// Binary class of a message after label merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Negative,
    Positive,
}

impl Class {
    pub fn is_positive(self) -> bool {
        matches!(self, Class::Positive)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Class::Negative => "negative",
            Class::Positive => "positive",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How source labels map onto the binary scheme.
///
/// `any`: positive iff the message carries at least one of
/// `positive_labels`. `all`: positive iff it carries every one of them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeRule {
    pub positive_labels: BTreeSet<String>,
    pub mode: MergeMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    Any,
    All,
}

impl MergeRule {
    pub fn any<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MergeRule {
            positive_labels: labels.into_iter().map(Into::into).collect(),
            mode: MergeMode::Any,
        }
    }

    pub fn apply(&self, source_labels: &BTreeSet<String>) -> Class {
        let positive = match self.mode {
            MergeMode::Any => self
                .positive_labels
                .iter()
                .any(|l| source_labels.contains(l)),
            MergeMode::All => self
                .positive_labels
                .iter()
                .all(|l| source_labels.contains(l)),
        };
        if positive {
            Class::Positive
        } else {
            Class::Negative
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::InvalidConfig(format!("merge rule: {e}")))
    }
}

/// One text item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub text: String,
    pub source_labels: BTreeSet<String>,
    pub binary_class: Class,
}

/// Which partition a message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

/// A named corpus with binary classes and (once assigned) a partition.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub name: String,
    pub messages: Vec<Message>,
    /// Per-record split tags from the input file, if every record had one.
    predefined: Option<Vec<SplitTag>>,
    /// Assigned partition, aligned with `messages`.
    assignment: Option<Vec<SplitTag>>,
    pub split_seed: Option<u64>,
}

/// On-disk record shape.
#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    labels: Vec<String>,
    #[serde(default)]
    split: Option<SplitTag>,
}

/// Reads a line-delimited JSON dataset from `path`.
pub fn ingest(path: impl AsRef<Path>, merge: &MergeRule, name: &str) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    ingest_reader(BufReader::new(file), merge, name)
}

/// Reader-based ingestion; blank lines are skipped, record order is kept.
pub fn ingest_reader<R: BufRead>(
    reader: R,
    merge: &MergeRule,
    name: &str,
) -> Result<LabeledDataset> {
    let mut messages = Vec::new();
    let mut tags: Vec<SplitTag> = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut tagged = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if raw.id.is_empty() {
            return Err(Error::MalformedRecord {
                line: line_no,
                message: "empty id".into(),
            });
        }
        if !seen_ids.insert(raw.id.clone()) {
            return Err(Error::DuplicateId { id: raw.id });
        }
        if let Some(tag) = raw.split {
            tagged += 1;
            tags.push(tag);
        }
        let source_labels: BTreeSet<String> = raw.labels.into_iter().collect();
        let binary_class = merge.apply(&source_labels);
        messages.push(Message {
            id: raw.id,
            text: raw.text,
            source_labels,
            binary_class,
        });
    }

    let predefined = if tagged == 0 {
        None
    } else if tagged == messages.len() {
        Some(tags)
    } else {
        return Err(Error::PartialPredefinedSplit { name: name.into() });
    };

    Ok(LabeledDataset {
        name: name.to_string(),
        messages,
        predefined,
        assignment: None,
        split_seed: None,
    })
}

/// Rounds half away from zero, which for non-negative sizes is half-up.
fn round_half_up(x: f64) -> usize {
    x.round() as usize
}

impl LabeledDataset {
    /// Builds a dataset directly from messages (used by the synthesizer
    /// and by dataset merging).
    pub fn from_messages(name: &str, messages: Vec<Message>) -> Self {
        LabeledDataset {
            name: name.to_string(),
            messages,
            predefined: None,
            assignment: None,
            split_seed: None,
        }
    }

    /// Builds an already-partitioned dataset; `tags` aligns with `messages`.
    pub(crate) fn with_assignment(
        name: &str,
        messages: Vec<Message>,
        tags: Vec<SplitTag>,
    ) -> Self {
        debug_assert_eq!(messages.len(), tags.len());
        LabeledDataset {
            name: name.to_string(),
            messages,
            predefined: None,
            assignment: Some(tags),
            split_seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn has_predefined_split(&self) -> bool {
        self.predefined.is_some()
    }

    pub fn is_split(&self) -> bool {
        self.assignment.is_some()
    }

    /// Assigns the train/val/test partition.
    ///
    /// With a predefined split this validates it and ignores the seed.
    /// Otherwise message indices are shuffled with a seeded Fisher-Yates
    /// pass and cut into 20% test, 20% of the rest val, remainder train.
    pub fn split(mut self, seed: u64) -> Result<Self> {
        if let Some(tags) = self.predefined.clone() {
            let train = tags.iter().filter(|t| **t == SplitTag::Train).count();
            let test = tags.iter().filter(|t| **t == SplitTag::Test).count();
            if train == 0 || test == 0 {
                return Err(Error::InvalidPredefinedSplit {
                    name: self.name.clone(),
                    message: format!("train part has {train} messages, test part has {test}"),
                });
            }
            self.assignment = Some(tags);
            self.split_seed = None;
            return Ok(self);
        }

        let n = self.messages.len();
        if n < 5 {
            return Err(Error::TooSmallToSplit {
                name: self.name.clone(),
                n,
            });
        }
        let test_n = round_half_up(0.20 * n as f64);
        let val_n = round_half_up(0.20 * (n - test_n) as f64);

        let mut order: Vec<usize> = (0..n).collect();
        SplitMix64::new(seed).shuffle(&mut order);

        let mut tags = vec![SplitTag::Train; n];
        for &i in &order[..test_n] {
            tags[i] = SplitTag::Test;
        }
        for &i in &order[test_n..test_n + val_n] {
            tags[i] = SplitTag::Val;
        }
        self.assignment = Some(tags);
        self.split_seed = Some(seed);
        Ok(self)
    }

    fn assignment(&self) -> Result<&[SplitTag]> {
        self.assignment.as_deref().ok_or(Error::NotSplit {
            name: self.name.clone(),
        })
    }

    /// Messages in one part, in record order.
    pub fn part(&self, tag: SplitTag) -> Result<Vec<&Message>> {
        let tags = self.assignment()?;
        Ok(self
            .messages
            .iter()
            .zip(tags)
            .filter(|(_, t)| **t == tag)
            .map(|(m, _)| m)
            .collect())
    }

    pub fn train(&self) -> Result<Vec<&Message>> {
        self.part(SplitTag::Train)
    }

    pub fn val(&self) -> Result<Vec<&Message>> {
        self.part(SplitTag::Val)
    }

    pub fn test(&self) -> Result<Vec<&Message>> {
        self.part(SplitTag::Test)
    }

    /// The split tag of every message, aligned with `messages`.
    pub fn tags(&self) -> Result<&[SplitTag]> {
        self.assignment()
    }

    /// Messages of one binary class, in record order.
    pub fn class_messages(&self, class: Class) -> Vec<&Message> {
        self.messages
            .iter()
            .filter(|m| m.binary_class == class)
            .collect()
    }
}

/// Per-class corpus statistics: messages, unique words, total words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassStats {
    pub class: Class,
    pub messages: usize,
    pub unique_words: usize,
    pub total_words: usize,
}

/// Counts messages, pooled unique words, and total words per class.
pub fn class_stats(ds: &LabeledDataset) -> Vec<ClassStats> {
    let token_streams: Vec<(Class, Vec<String>)> = ds
        .messages
        .par_iter()
        .map(|m| (m.binary_class, tokenize(&m.text)))
        .collect();

    [Class::Negative, Class::Positive]
        .into_iter()
        .map(|class| {
            let mut unique: HashSet<&str> = HashSet::new();
            let mut total = 0usize;
            let mut count = 0usize;
            for (c, tokens) in &token_streams {
                if *c != class {
                    continue;
                }
                count += 1;
                for t in tokens {
                    unique.insert(t.as_str());
                    total += 1;
                }
            }
            ClassStats {
                class,
                messages: count,
                unique_words: unique.len(),
                total_words: total,
            }
        })
        .collect()
}

/// Token streams for every message of one class, pooled in record order.
pub fn class_token_counts(ds: &LabeledDataset, class: Class) -> HashMap<String, u64> {
    let streams: Vec<Vec<String>> = ds
        .messages
        .par_iter()
        .filter(|m| m.binary_class == class)
        .map(|m| tokenize(&m.text))
        .collect();
    let mut counts = HashMap::new();
    for stream in streams {
        for t in stream {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts
}
