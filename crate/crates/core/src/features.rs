//! Sparse message features for the linear classifier.
//!
//! A message maps to a fixed feature space of `2^18` hashed unigram
//! buckets followed by a 60-slot character block. Token counts pool into
//! buckets by 64-bit FNV-1a (collisions accepted) and are log-scaled to
//! `1 + ln n`, mirroring the TFIDF treatment of raw counts. The character
//! block marks which of 60 common characters appear anywhere in the
//! lowercased message; it keeps some signal under misspellings that the
//! hashed unigrams miss entirely.

use serde::{Deserialize, Serialize};

use crate::rng::fnv1a64;

/// Number of hashed unigram buckets.
pub const HASH_BUCKETS: usize = 1 << 18;

/// Slots in the character-presence block.
pub const CHAR_SLOTS: usize = 60;

/// Total feature dimension.
pub const FEATURE_DIM: usize = HASH_BUCKETS + CHAR_SLOTS;

/// Identifier of the token hash recorded in model files.
pub const HASH_FUNCTION_ID: &str = "fnv1a64";

/// The 60 tracked characters, in slot order: a-z, 0-9, then 24 symbols.
pub const CHAR_TABLE: [char; CHAR_SLOTS] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r',
    's', 't', 'u', 'v', 'w', 'x', 'y', 'z', '0', '1', '2', '3', '4', '5', '6', '7', '8', '9',
    '!', '"', '#', '$', '%', '&', '\'', '(', ')', '*', '+', ',', '-', '.', '/', ':', ';', '?',
    '@', '[', ']', '_', '~', ' ',
];

fn char_slot(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(c as usize - 'a' as usize),
        '0'..='9' => Some(26 + c as usize - '0' as usize),
        _ => CHAR_TABLE[36..].iter().position(|&s| s == c).map(|i| 36 + i),
    }
}

/// Hash bucket of one token.
pub fn token_bucket(token: &str) -> u32 {
    (fnv1a64(token.as_bytes()) % HASH_BUCKETS as u64) as u32
}

/// Sparse feature vector, entries sorted by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Value at a feature index; 0 when absent.
    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |(i, _)| *i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }
}

/// Builds the feature vector of one message from its token stream and
/// raw text. Deterministic; an empty message gives the zero vector.
pub fn featurize(tokens: &[String], raw_text: &str) -> FeatureVector {
    let mut bucket_counts: std::collections::HashMap<u32, u64> = std::collections::HashMap::new();
    for token in tokens {
        *bucket_counts.entry(token_bucket(token)).or_insert(0) += 1;
    }

    let mut entries: Vec<(u32, f64)> = bucket_counts
        .into_iter()
        .map(|(bucket, n)| (bucket, 1.0 + (n as f64).ln()))
        .collect();

    let mut present = [false; CHAR_SLOTS];
    for c in raw_text.to_lowercase().chars() {
        if let Some(slot) = char_slot(c) {
            present[slot] = true;
        }
    }
    for (slot, _) in present.iter().enumerate().filter(|(_, p)| **p) {
        entries.push(((HASH_BUCKETS + slot) as u32, 1.0));
    }

    entries.sort_unstable_by_key(|(i, _)| *i);
    FeatureVector { entries }
}
