//! TFIDF term vectors per class-corpus and cosine similarity between them.
//!
//! Each dataset contributes two corpora: its positive messages and its
//! negative messages, named `<dataset>+` and `<dataset>-`. The inverse
//! document frequency counts over these class-corpora, not over messages:
//! with 8 datasets there are 16 documents. Weights use natural logs
//! throughout:
//!
//! ```text
//! tfidf(w, d) = (1 + ln n_wd) * ln(D / D_w)        for n_wd >= 1
//! ```
//!
//! and 0 for words absent from the corpus. Counts pool the whole dataset
//! (all splits), since vocabulary similarity is a property of the corpus,
//! not of a training subset.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Class, LabeledDataset};
use crate::error::Error;
use crate::Result;

/// Name of the positive or negative half of a dataset, e.g. `A+`.
pub fn class_corpus_name(dataset: &str, class: Class) -> String {
    match class {
        Class::Negative => format!("{dataset}-"),
        Class::Positive => format!("{dataset}+"),
    }
}

/// Word counts for every class-corpus, plus document frequencies.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    names: Vec<String>,
    counts: Vec<BTreeMap<String, u64>>,
    doc_freq: HashMap<String, u32>,
}

impl CorpusIndex {
    /// Builds the index over `2 * datasets.len()` class-corpora, negative
    /// half first for each dataset, matching the input order.
    pub fn build(datasets: &[LabeledDataset]) -> CorpusIndex {
        let per_dataset: Vec<(BTreeMap<String, u64>, BTreeMap<String, u64>)> = datasets
            .par_iter()
            .map(|ds| {
                let neg = crate::corpus::class_token_counts(ds, Class::Negative);
                let pos = crate::corpus::class_token_counts(ds, Class::Positive);
                (neg.into_iter().collect(), pos.into_iter().collect())
            })
            .collect();

        let mut names = Vec::with_capacity(datasets.len() * 2);
        let mut counts = Vec::with_capacity(datasets.len() * 2);
        for (ds, (neg, pos)) in datasets.iter().zip(per_dataset) {
            names.push(class_corpus_name(&ds.name, Class::Negative));
            counts.push(neg);
            names.push(class_corpus_name(&ds.name, Class::Positive));
            counts.push(pos);
        }

        let mut doc_freq: HashMap<String, u32> = HashMap::new();
        for corpus in &counts {
            for word in corpus.keys() {
                *doc_freq.entry(word.clone()).or_insert(0) += 1;
            }
        }

        CorpusIndex {
            names,
            counts,
            doc_freq,
        }
    }

    /// Number of class-corpora (the `D` of the idf term).
    pub fn corpus_count(&self) -> usize {
        self.names.len()
    }

    /// Number of class-corpora containing `word` (the `D_w` term).
    pub fn doc_freq(&self, word: &str) -> u32 {
        self.doc_freq.get(word).copied().unwrap_or(0)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Raw occurrence count of `word` in `corpus`, 0 when absent.
    pub fn count(&self, corpus: &str, word: &str) -> u64 {
        self.position(corpus)
            .ok()
            .and_then(|i| self.counts[i].get(word).copied())
            .unwrap_or(0)
    }

    /// Class-corpora that hold no words at all. They stay in the index
    /// with zero vectors; reports should call these out.
    pub fn empty_corpora(&self) -> Vec<&str> {
        self.names
            .iter()
            .zip(&self.counts)
            .filter(|(_, c)| c.is_empty())
            .map(|(n, _)| n.as_str())
            .collect()
    }

    fn position(&self, corpus: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == corpus)
            .ok_or_else(|| Error::UnknownCorpus {
                name: corpus.to_string(),
            })
    }

    /// TFIDF vector of one class-corpus.
    pub fn tfidf(&self, corpus: &str) -> Result<TermVector> {
        let idx = self.position(corpus)?;
        let d = self.corpus_count() as f64;
        let weights = self.counts[idx]
            .iter()
            .map(|(word, &n)| {
                let d_w = self.doc_freq[word] as f64;
                let w = (1.0 + (n as f64).ln()) * (d / d_w).ln();
                (word.clone(), w)
            })
            .collect();
        Ok(TermVector {
            corpus: self.names[idx].clone(),
            weights,
        })
    }

    /// The `k` highest-TFIDF words of `corpus`, weight descending, ties
    /// broken lexicographically. When the corpus has fewer than `k`
    /// distinct words everything is returned and `exhausted` is set.
    pub fn top_k_terms(&self, corpus: &str, k: usize) -> Result<TopTerms> {
        if k == 0 {
            return Err(Error::InvalidInput("top-k requires k >= 1".into()));
        }
        let vector = self.tfidf(corpus)?;
        let mut terms: Vec<(String, f64)> = vector.weights.into_iter().collect();
        terms.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("tfidf weights are finite")
                .then_with(|| a.0.cmp(&b.0))
        });
        let exhausted = terms.len() < k;
        terms.truncate(k);
        Ok(TopTerms {
            corpus: vector.corpus,
            requested: k,
            terms,
            exhausted,
        })
    }

    /// Full symmetric cosine-similarity matrix over all class-corpora.
    pub fn similarity_matrix(&self) -> SimilarityMatrix {
        let vectors: Vec<TermVector> = self
            .names
            .par_iter()
            .map(|n| self.tfidf(n).expect("index names its own corpora"))
            .collect();
        let n = vectors.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..=i)
                    .map(|j| {
                        if i == j {
                            if vectors[i].norm() > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            cosine(&vectors[i], &vectors[j])
                        }
                    })
                    .collect()
            })
            .collect();

        let mut values = vec![vec![0.0; n]; n];
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                values[i][j] = v;
                values[j][i] = v;
            }
        }
        SimilarityMatrix {
            names: self.names.clone(),
            values,
        }
    }
}

/// Sparse word -> TFIDF weight map for one class-corpus.
#[derive(Debug, Clone, Serialize)]
pub struct TermVector {
    pub corpus: String,
    pub weights: BTreeMap<String, f64>,
}

impl TermVector {
    /// Weight of `word`; 0 when the word is absent from the corpus.
    pub fn weight(&self, word: &str) -> f64 {
        self.weights.get(word).copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Cosine similarity over the union vocabulary; 0 when either vector is
/// all-zero. Non-negative weights keep the value in [0, 1].
pub fn cosine(a: &TermVector, b: &TermVector) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // Merge-join over the sorted maps.
    let mut dot = 0.0;
    let mut ia = a.weights.iter();
    let mut ib = b.weights.iter();
    let mut xa = ia.next();
    let mut xb = ib.next();
    while let (Some((wa, va)), Some((wb, vb))) = (xa, xb) {
        match wa.cmp(wb) {
            std::cmp::Ordering::Less => xa = ia.next(),
            std::cmp::Ordering::Greater => xb = ib.next(),
            std::cmp::Ordering::Equal => {
                dot += va * vb;
                xa = ia.next();
                xb = ib.next();
            }
        }
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Result of a top-k query.
#[derive(Debug, Clone, Serialize)]
pub struct TopTerms {
    pub corpus: String,
    pub requested: usize,
    pub terms: Vec<(String, f64)>,
    /// Set when the corpus ran out of distinct words before `requested`.
    pub exhausted: bool,
}

/// Symmetric matrix of pairwise cosine similarities.
#[derive(Debug, Clone, Serialize)]
pub struct SimilarityMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }
}
