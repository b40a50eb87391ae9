//! Probability outputs per classifier, including externally produced ones.
//!
//! The external score file lets any outside model participate in the
//! grid and the ensembles. Format: a CSV whose first record names the
//! classifier and the dataset, followed by `message_id,p_pos` lines:
//!
//! ```text
//! bilstm,A
//! m1,0.93
//! m2,0.10
//! ```
//!
//! `p_neg` is derived as `1 - p_pos`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::Error;
use crate::Result;

/// Scores of one classifier on one dataset.
#[derive(Debug, Clone)]
pub struct ExternalScores {
    pub classifier: String,
    pub dataset: String,
    /// message id -> p_pos
    pub scores: BTreeMap<String, f64>,
}

impl ExternalScores {
    /// `(p_neg, p_pos)` for one message id.
    pub fn pair(&self, id: &str) -> Option<(f64, f64)> {
        self.scores.get(id).map(|&p| (1.0 - p, p))
    }

    /// Ids in `expected` without a score; empty when coverage is complete.
    pub fn missing_from<'a>(&self, expected: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        expected
            .into_iter()
            .filter(|id| !self.scores.contains_key(*id))
            .map(|id| id.to_string())
            .collect()
    }

    /// Errors when any score id is not a known dataset id, or when any
    /// required id has no score.
    pub fn validate<'a>(
        &self,
        dataset_ids: &std::collections::HashSet<&str>,
        required: impl IntoIterator<Item = &'a str>,
    ) -> Result<()> {
        let unknown: Vec<String> = self
            .scores
            .keys()
            .filter(|id| !dataset_ids.contains(id.as_str()))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownScoreIds {
                classifier: self.classifier.clone(),
                ids: unknown,
            });
        }
        let missing = self.missing_from(required);
        if !missing.is_empty() {
            return Err(Error::MissingScores {
                classifier: self.classifier.clone(),
                ids: missing,
            });
        }
        Ok(())
    }
}

/// Reads one external score file.
pub fn load_external_scores(path: impl AsRef<Path>) -> Result<ExternalScores> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    load_external_scores_reader(file)
}

pub fn load_external_scores_reader<R: Read>(reader: R) -> Result<ExternalScores> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut records = csv_reader.records();
    let head = match records.next() {
        Some(r) => r.map_err(|e| malformed(1, &e.to_string()))?,
        None => return Err(malformed(1, "empty score file")),
    };
    if head.len() != 2 {
        return Err(malformed(1, "expected header record `classifier,dataset`"));
    }
    let classifier = head[0].trim().to_string();
    let dataset = head[1].trim().to_string();
    if classifier.is_empty() || dataset.is_empty() {
        return Err(malformed(1, "empty classifier or dataset name"));
    }

    let mut scores = BTreeMap::new();
    for record in records {
        let record = record.map_err(|e| malformed(0, &e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(malformed(line, "expected `message_id,p_pos`"));
        }
        let id = record[0].to_string();
        let p_pos: f64 = record[1]
            .trim()
            .parse()
            .map_err(|e| malformed(line, &format!("bad probability: {e}")))?;
        if !(0.0..=1.0).contains(&p_pos) {
            return Err(Error::ScoreOutOfRange {
                line,
                value: p_pos,
            });
        }
        if scores.insert(id.clone(), p_pos).is_some() {
            return Err(Error::DuplicateId { id });
        }
    }

    Ok(ExternalScores {
        classifier,
        dataset,
        scores,
    })
}

fn malformed(line: usize, message: &str) -> Error {
    Error::MalformedRecord {
        line,
        message: message.to_string(),
    }
}

/// Ordered per-classifier probability pairs for a set of messages.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    classifiers: Vec<String>,
    columns: Vec<BTreeMap<String, (f64, f64)>>,
}

impl ScoreMatrix {
    pub fn new() -> Self {
        ScoreMatrix {
            classifiers: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn classifiers(&self) -> &[String] {
        &self.classifiers
    }

    /// Adds one classifier's scores; every pair must be a probability
    /// distribution (non-negative, summing to 1 within 1e-6).
    pub fn add_column(
        &mut self,
        classifier: &str,
        scores: BTreeMap<String, (f64, f64)>,
    ) -> Result<()> {
        for (id, &(p_neg, p_pos)) in &scores {
            if p_neg < 0.0 || p_pos < 0.0 || (p_neg + p_pos - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "scores for {id:?} from {classifier:?} are not a probability pair: ({p_neg}, {p_pos})"
                )));
            }
        }
        self.classifiers.push(classifier.to_string());
        self.columns.push(scores);
        Ok(())
    }

    /// The K probability pairs of one message, in classifier order.
    pub fn pairs_for(&self, id: &str) -> Result<Vec<(f64, f64)>> {
        self.classifiers
            .iter()
            .zip(&self.columns)
            .map(|(name, col)| {
                col.get(id).copied().ok_or_else(|| Error::MissingScores {
                    classifier: name.clone(),
                    ids: vec![id.to_string()],
                })
            })
            .collect()
    }
}

impl Default for ScoreMatrix {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(content: &str) -> Result<ExternalScores> {
        load_external_scores_reader(Cursor::new(content.to_string()))
    }

    #[test]
    fn complement_is_derived() {
        let s = parse("bilstm,A\nm1,0.93\n").unwrap();
        assert_eq!(s.classifier, "bilstm");
        assert_eq!(s.dataset, "A");
        let (p_neg, p_pos) = s.pair("m1").unwrap();
        assert!((p_neg - 0.07).abs() < 1e-12);
        assert_eq!(p_pos, 0.93);
    }

    #[test]
    fn out_of_range_probability_is_rejected() {
        let err = parse("c,A\nm1,1.5\n").unwrap_err();
        match err {
            Error::ScoreOutOfRange { value, .. } => assert_eq!(value, 1.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_ids_are_enumerated() {
        let s = parse("c,A\nm1,0.5\n").unwrap();
        let dataset_ids: std::collections::HashSet<&str> =
            ["m1", "m2", "m3"].into_iter().collect();
        let err = s.validate(&dataset_ids, ["m1", "m2", "m3"]).unwrap_err();
        match err {
            Error::MissingScores { ids, .. } => assert_eq!(ids, vec!["m2", "m3"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_ids_are_listed() {
        let s = parse("c,A\nghost,0.5\n").unwrap();
        let dataset_ids: std::collections::HashSet<&str> = ["m1"].into_iter().collect();
        let err = s.validate(&dataset_ids, []).unwrap_err();
        match err {
            Error::UnknownScoreIds { ids, .. } => assert_eq!(ids, vec!["ghost"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_score_lines_are_rejected() {
        assert!(matches!(
            parse("c,A\nm1,0.5\nm1,0.6\n"),
            Err(Error::DuplicateId { .. })
        ));
    }

    #[test]
    fn empty_file_is_malformed() {
        assert!(matches!(parse(""), Err(Error::MalformedRecord { line: 1, .. })));
    }

    #[test]
    fn score_matrix_orders_pairs_by_classifier() {
        let mut m = ScoreMatrix::new();
        m.add_column("c1", [("a".to_string(), (0.3, 0.7))].into_iter().collect())
            .unwrap();
        m.add_column("c2", [("a".to_string(), (0.9, 0.1))].into_iter().collect())
            .unwrap();
        assert_eq!(m.pairs_for("a").unwrap(), vec![(0.3, 0.7), (0.9, 0.1)]);
        assert!(m.pairs_for("zzz").is_err());
    }

    #[test]
    fn score_matrix_rejects_non_distributions() {
        let mut m = ScoreMatrix::new();
        let err = m
            .add_column("c1", [("a".to_string(), (0.5, 0.6))].into_iter().collect())
            .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
