//! Loading pre-trained word vectors from the text interchange format:
//! a `count dim` header line, then one `word v1 ... vdim` line per word.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::Error;
use crate::Result;

/// Word vectors of a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(|v| v.as_slice())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// A loaded table plus the requested words that were not in the file.
#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub table: EmbeddingTable,
    pub missing: Vec<String>,
}

/// Loads vectors for `words` from `path`. An empty request loads every
/// vector in the file. Missing words are reported, not fatal.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    words: &BTreeSet<String>,
) -> Result<LoadedEmbeddings> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    load_embeddings_reader(BufReader::new(file), words)
}

pub fn load_embeddings_reader<R: BufRead>(
    reader: R,
    words: &BTreeSet<String>,
) -> Result<LoadedEmbeddings> {
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| malformed(1, &e.to_string()))?,
        None => return Err(malformed(1, "empty embedding file")),
    };
    let mut parts = header.split_whitespace();
    let _count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(1, "header must be `count dim`"))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(1, "header must be `count dim`"))?;
    if parts.next().is_some() {
        return Err(malformed(1, "header must be exactly `count dim`"));
    }
    if dim < 2 {
        return Err(malformed(1, "dimension must be at least 2"));
    }

    let mut vectors = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| malformed(line_no, &e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields
            .next()
            .ok_or_else(|| malformed(line_no, "missing word"))?;
        let wanted = words.is_empty() || words.contains(word);
        let mut vector = if wanted { Vec::with_capacity(dim) } else { Vec::new() };
        let mut found = 0usize;
        for field in fields {
            found += 1;
            if wanted && found <= dim {
                let value: f64 = field
                    .parse()
                    .map_err(|e| malformed(line_no, &format!("bad component: {e}")))?;
                vector.push(value);
            }
        }
        if found != dim {
            return Err(Error::DimensionMismatch {
                line: line_no,
                expected: dim,
                found,
            });
        }
        if wanted {
            vectors.insert(word.to_string(), vector);
        }
    }

    let missing: Vec<String> = words
        .iter()
        .filter(|w| !vectors.contains_key(*w))
        .cloned()
        .collect();

    Ok(LoadedEmbeddings {
        table: EmbeddingTable { dim, vectors },
        missing,
    })
}

fn malformed(line: usize, message: &str) -> Error {
    Error::MalformedRecord {
        line,
        message: message.to_string(),
    }
}
