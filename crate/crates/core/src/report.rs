//! Report files: CSV in paper-table formatting, JSON at full precision.
//!
//! All writers go through [`write_atomic`]: content lands in a temp file
//! that is renamed into place, so an interrupted run never leaves a
//! half-written report behind.

use std::path::Path;

use serde::Serialize;

use crate::corpus::ClassStats;
use crate::ensemble::EnsembleReport;
use crate::error::Error;
use crate::evaluate::{EvalCell, EvalGrid, SimilarityAucPoint};
use crate::vocab::{SimilarityMatrix, TopTerms};
use crate::Result;

/// Writes `bytes` to `path` via a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path.display().to_string(), e)
    })
}

/// RFC 4180 CSV from rows of fields; quoting only where needed keeps the
/// bytes deterministic.
pub fn csv_from_rows<I, R, F>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = F>,
    F: AsRef<[u8]>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).expect("csv header");
    for row in rows {
        writer.write_record(row).expect("csv row");
    }
    String::from_utf8(writer.into_inner().expect("csv flush")).expect("csv is utf-8")
}

fn fmt2_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

/// `dataset,class,messages,unique_words,total_words`, one row per class.
pub fn stats_csv(stats: &[(String, Vec<ClassStats>)]) -> String {
    csv_from_rows(
        &["dataset", "class", "messages", "unique_words", "total_words"],
        stats.iter().flat_map(|(name, per_class)| {
            per_class.iter().map(move |s| {
                vec![
                    name.clone(),
                    s.class.to_string(),
                    s.messages.to_string(),
                    s.unique_words.to_string(),
                    s.total_words.to_string(),
                ]
            })
        }),
    )
}

/// Full symmetric matrix, 3 decimals, corpus names on both axes.
pub fn matrix_csv(m: &SimilarityMatrix) -> String {
    let mut header: Vec<&str> = vec!["corpus"];
    header.extend(m.names.iter().map(|s| s.as_str()));
    csv_from_rows(
        &header,
        m.names.iter().zip(&m.values).map(|(name, row)| {
            let mut fields = vec![name.clone()];
            fields.extend(row.iter().map(|v| format!("{v:.3}")));
            fields
        }),
    )
}

/// `word,corpus,weight` for every corpus's top-k terms.
pub fn top_terms_csv(tops: &[TopTerms]) -> String {
    csv_from_rows(
        &["word", "corpus", "weight"],
        tops.iter().flat_map(|top| {
            top.terms
                .iter()
                .map(move |(word, weight)| vec![word.clone(), top.corpus.clone(), format!("{weight:.6}")])
        }),
    )
}

/// Table-shaped grid CSV for one metric: rows are trained-on datasets,
/// columns tested-on, 2 decimals, `*` marking each column's best value.
pub fn grid_metric_csv<F>(grid: &EvalGrid, metric: F) -> String
where
    F: Fn(&EvalCell) -> Option<f64> + Copy,
{
    let best = grid.column_best(metric);
    let mut header: Vec<&str> = vec!["trained_on"];
    header.extend(grid.datasets.iter().map(|s| s.as_str()));
    csv_from_rows(
        &header,
        grid.classifiers.iter().enumerate().map(|(row, name)| {
            let mut fields = vec![name.clone()];
            for col in 0..grid.datasets.len() {
                let mut cell = fmt2_opt(metric(grid.cell(row, col)));
                if best[row][col] {
                    cell.push('*');
                }
                fields.push(cell);
            }
            fields
        }),
    )
}

#[derive(Serialize)]
struct GridCellJson<'a> {
    #[serde(flatten)]
    cell: &'a EvalCell,
    best_precision: bool,
    best_recall: bool,
    best_auc: bool,
}

#[derive(Serialize)]
struct GridJson<'a> {
    classifiers: &'a [String],
    datasets: &'a [String],
    cells: Vec<GridCellJson<'a>>,
}

/// Full-precision JSON twin of the grid CSVs.
pub fn grid_json(grid: &EvalGrid) -> String {
    let best_p = grid.column_best(|c| c.precision);
    let best_r = grid.column_best(|c| c.recall);
    let best_a = grid.column_best(|c| Some(c.auc));
    let cols = grid.datasets.len();
    let cells = grid
        .cells
        .iter()
        .enumerate()
        .map(|(i, cell)| GridCellJson {
            cell,
            best_precision: best_p[i / cols][i % cols],
            best_recall: best_r[i / cols][i % cols],
            best_auc: best_a[i / cols][i % cols],
        })
        .collect();
    serde_json::to_string_pretty(&GridJson {
        classifiers: &grid.classifiers,
        datasets: &grid.datasets,
        cells,
    })
    .expect("grid serializes")
}

/// `trained_on,tested_on,sim_pos,sim_neg,auc`, one row per grid cell.
pub fn similarity_auc_csv(points: &[SimilarityAucPoint]) -> String {
    csv_from_rows(
        &["trained_on", "tested_on", "sim_pos", "sim_neg", "auc"],
        points.iter().map(|p| {
            vec![
                p.trained_on.clone(),
                p.tested_on.clone(),
                format!("{:.6}", p.sim_pos),
                format!("{:.6}", p.sim_neg),
                format!("{:.6}", p.auc),
            ]
        }),
    )
}

/// Ensemble table CSV for one metric: rows are strategies, columns test
/// datasets, 2 decimals.
pub fn ensemble_metric_csv<F>(report: &EnsembleReport, metric: F) -> String
where
    F: Fn(&crate::ensemble::EnsembleCell) -> Option<f64>,
{
    let mut header: Vec<&str> = vec!["strategy"];
    header.extend(report.datasets.iter().map(|s| s.as_str()));
    csv_from_rows(
        &header,
        report.strategies.iter().enumerate().map(|(row, name)| {
            let mut fields = vec![name.clone()];
            for col in 0..report.datasets.len() {
                fields.push(fmt2_opt(metric(report.cell(row, col))));
            }
            fields
        }),
    )
}

pub fn ensemble_json(report: &EnsembleReport) -> String {
    serde_json::to_string_pretty(report).expect("ensemble report serializes")
}
