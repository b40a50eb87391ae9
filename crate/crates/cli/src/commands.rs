//! Command implementations shared by the CLI entry point.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use crosscorpus::config::{ClassifierConfig, RunConfig};
use crosscorpus::corpus::{self, LabeledDataset, Message};
use crosscorpus::ensemble::{
    collect_combiner_training_data, merge_datasets, train_combiner, EnsembleEvalInputs, Strategy,
};
use crosscorpus::evaluate::{cross_grid, similarity_auc_export, ScoreSource};
use crosscorpus::linear::{predict_messages, save_model, train_dataset, LinearModel, TrainConfig};
use crosscorpus::report;
use crosscorpus::rng::derive_seed;
use crosscorpus::scores::{load_external_scores, ExternalScores};
use crosscorpus::synth::{generate, write_datasets, SyntheticSpec, SYNTH_POSITIVE_LABEL};
use crosscorpus::tsne::ProjectionConfig;
use crosscorpus::vocab::CorpusIndex;

/// Loaded config with CLI overrides applied and datasets ingested lazily.
pub struct Pipeline {
    config: RunConfig,
    out: PathBuf,
}

impl Pipeline {
    pub fn load(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let mut config = RunConfig::load(config_path)
            .with_context(|| format!("loading config {}", config_path.display()))?;
        if let Some(seed) = seed {
            config.seed = seed;
        }
        if let Some(out) = out {
            config.output_dir = out;
        }
        let out = config.output_dir.clone();
        std::fs::create_dir_all(&out)
            .with_context(|| format!("creating output directory {}", out.display()))?;
        Ok(Pipeline { config, out })
    }

    fn datasets(&self) -> Result<Vec<LabeledDataset>> {
        self.config
            .datasets
            .iter()
            .map(|ds| {
                let ingested = corpus::ingest(&ds.path, &ds.merge_rule, &ds.name)
                    .with_context(|| format!("ingesting dataset {:?}", ds.name))?;
                if ds.predefined_split && !ingested.has_predefined_split() {
                    bail!(
                        "dataset {:?} declares predefined_split but {} has no split fields",
                        ds.name,
                        ds.path.display()
                    );
                }
                let split_seed = derive_seed(self.config.seed, &format!("split/{}", ds.name));
                Ok(ingested.split(split_seed)?)
            })
            .collect()
    }

    fn write(&self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        report::write_atomic(&path, content.as_bytes())?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    fn train_config(&self, stage: &str) -> TrainConfig {
        TrainConfig::with_seed(derive_seed(self.config.seed, stage))
    }
}

/// A classifier trained in-process on one dataset.
struct BuiltinSource {
    name: String,
    model: LinearModel,
}

impl ScoreSource for BuiltinSource {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, _dataset: &str, messages: &[&Message]) -> crosscorpus::Result<Vec<(f64, f64)>> {
        Ok(predict_messages(&self.model, messages))
    }
}

/// Score files of one external classifier, keyed by dataset.
struct ExternalSource {
    name: String,
    per_dataset: HashMap<String, ExternalScores>,
}

impl ScoreSource for ExternalSource {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, dataset: &str, messages: &[&Message]) -> crosscorpus::Result<Vec<(f64, f64)>> {
        let scores = self.per_dataset.get(dataset).ok_or_else(|| {
            crosscorpus::Error::MissingScoreSource {
                classifier: self.name.clone(),
                dataset: dataset.to_string(),
            }
        })?;
        let missing = scores.missing_from(messages.iter().map(|m| m.id.as_str()));
        if !missing.is_empty() {
            return Err(crosscorpus::Error::MissingScores {
                classifier: self.name.clone(),
                ids: missing,
            });
        }
        Ok(messages
            .iter()
            .map(|m| scores.pair(&m.id).expect("coverage checked above"))
            .collect())
    }
}

enum Sources {
    Builtin(Vec<BuiltinSource>),
    External(Vec<ExternalSource>),
}

impl Sources {
    fn as_refs(&self) -> Vec<&dyn ScoreSource> {
        match self {
            Sources::Builtin(v) => v.iter().map(|s| s as &dyn ScoreSource).collect(),
            Sources::External(v) => v.iter().map(|s| s as &dyn ScoreSource).collect(),
        }
    }
}

fn train_builtin_sources(p: &Pipeline, datasets: &[LabeledDataset]) -> Result<Vec<BuiltinSource>> {
    datasets
        .iter()
        .map(|ds| {
            let cfg = p.train_config(&format!("train/{}", ds.name));
            let outcome = train_dataset(ds, &cfg)
                .with_context(|| format!("training on dataset {:?}", ds.name))?;
            Ok(BuiltinSource {
                name: ds.name.clone(),
                model: outcome.model,
            })
        })
        .collect()
}

/// Loads every `*.csv` in the external score directory and groups the
/// files by classifier; each file's ids are validated against its
/// dataset up front.
fn load_external_sources(dir: &Path, datasets: &[LabeledDataset]) -> Result<Vec<ExternalSource>> {
    let by_name: HashMap<&str, &LabeledDataset> =
        datasets.iter().map(|ds| (ds.name.as_str(), ds)).collect();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading score directory {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();

    let mut grouped: BTreeMap<String, HashMap<String, ExternalScores>> = BTreeMap::new();
    for path in &paths {
        let scores = load_external_scores(path)
            .with_context(|| format!("parsing score file {}", path.display()))?;
        let ds = by_name.get(scores.dataset.as_str()).ok_or_else(|| {
            anyhow!(
                "{} scores unknown dataset {:?}",
                path.display(),
                scores.dataset
            )
        })?;
        let ids: std::collections::HashSet<&str> =
            ds.messages.iter().map(|m| m.id.as_str()).collect();
        // Coverage of the needed splits is enforced at scoring time.
        scores.validate(&ids, [])?;
        if grouped
            .entry(scores.classifier.clone())
            .or_default()
            .insert(scores.dataset.clone(), scores)
            .is_some()
        {
            bail!("duplicate score file for one (classifier, dataset) pair: {}", path.display());
        }
    }
    if grouped.is_empty() {
        bail!("no .csv score files found in {}", dir.display());
    }
    Ok(grouped
        .into_iter()
        .map(|(name, per_dataset)| ExternalSource { name, per_dataset })
        .collect())
}

fn build_sources(p: &Pipeline, datasets: &[LabeledDataset]) -> Result<Sources> {
    match &p.config.classifier {
        ClassifierConfig::BuiltinLinear => {
            Ok(Sources::Builtin(train_builtin_sources(p, datasets)?))
        }
        ClassifierConfig::External(dir) => {
            Ok(Sources::External(load_external_sources(dir, datasets)?))
        }
    }
}

pub fn stats(p: &Pipeline) -> Result<()> {
    let datasets = p.datasets()?;
    let rows: Vec<(String, Vec<corpus::ClassStats>)> = datasets
        .iter()
        .map(|ds| (ds.name.clone(), corpus::class_stats(ds)))
        .collect();
    p.write("stats.csv", &report::stats_csv(&rows))?;
    Ok(())
}

pub fn similarity(p: &Pipeline) -> Result<()> {
    let datasets = p.datasets()?;
    let index = CorpusIndex::build(&datasets);
    for empty in index.empty_corpora() {
        eprintln!("warning: class-corpus {empty:?} is empty; its vector is all zeros");
    }
    let matrix = index.similarity_matrix();
    p.write("similarity_matrix.csv", &report::matrix_csv(&matrix))?;

    let tops = top_terms(p, &index)?;
    p.write("top_terms.csv", &report::top_terms_csv(&tops))?;
    Ok(())
}

fn top_terms(p: &Pipeline, index: &CorpusIndex) -> Result<Vec<crosscorpus::vocab::TopTerms>> {
    index
        .names()
        .to_vec()
        .iter()
        .map(|name| {
            let top = index.top_k_terms(name, p.config.top_k)?;
            if top.exhausted {
                eprintln!(
                    "warning: corpus {name:?} has only {} distinct words (requested {})",
                    top.terms.len(),
                    top.requested
                );
            }
            Ok(top)
        })
        .collect()
}

pub fn tsne(p: &Pipeline) -> Result<()> {
    let embedding_path = p
        .config
        .embedding_path
        .as_ref()
        .ok_or_else(|| anyhow!("tsne needs embedding_path in the config"))?;

    let datasets = p.datasets()?;
    let index = CorpusIndex::build(&datasets);
    let tops = top_terms(p, &index)?;

    let mut labels: Vec<(String, String)> = Vec::new();
    let mut requested: BTreeSet<String> = BTreeSet::new();
    for top in &tops {
        for (word, _) in &top.terms {
            labels.push((word.clone(), top.corpus.clone()));
            requested.insert(word.clone());
        }
    }

    let loaded = crosscorpus::embedding::load_embeddings(embedding_path, &requested)
        .with_context(|| format!("loading embeddings {}", embedding_path.display()))?;
    if !loaded.missing.is_empty() {
        eprintln!(
            "warning: {} of {} requested words have no embedding and are skipped: {}",
            loaded.missing.len(),
            requested.len(),
            preview(&loaded.missing)
        );
    }
    labels.retain(|(word, _)| loaded.table.contains(word));
    if labels.len() < 4 {
        bail!("only {} projectable words; t-SNE needs at least 4", labels.len());
    }

    let defaults = ProjectionConfig::default();
    let overrides = &p.config.tsne;
    let cfg = ProjectionConfig {
        perplexity: overrides.perplexity.unwrap_or(defaults.perplexity),
        iterations: overrides.iterations.unwrap_or(defaults.iterations),
        learning_rate: overrides.learning_rate.unwrap_or(defaults.learning_rate),
        seed: derive_seed(p.config.seed, "tsne"),
        ..defaults
    };
    let output = crosscorpus::tsne::tsne(&loaded.table, &cfg, &labels)?;
    if output.jittered {
        eprintln!("note: duplicate embedding vectors were jittered apart");
    }
    eprintln!("t-SNE finished with KL divergence {:.6}", output.final_kl);

    let rows = output.points.iter().map(|point| {
        // Corpus names were built as `<dataset>+` / `<dataset>-`.
        let (dataset, class) = match point.corpus.strip_suffix('+') {
            Some(name) => (name, "positive"),
            None => (
                point.corpus.strip_suffix('-').unwrap_or(&point.corpus),
                "negative",
            ),
        };
        vec![
            point.word.clone(),
            dataset.to_string(),
            class.to_string(),
            format!("{:.6}", point.x),
            format!("{:.6}", point.y),
        ]
    });
    p.write(
        "tsne_projection.csv",
        &report::csv_from_rows(&["word", "corpus", "class", "x", "y"], rows),
    )?;
    Ok(())
}

pub fn train(p: &Pipeline) -> Result<()> {
    if p.config.classifier != ClassifierConfig::BuiltinLinear {
        bail!("train only applies to the builtin_linear classifier");
    }
    let datasets = p.datasets()?;
    let mut rows = Vec::new();
    for ds in &datasets {
        let cfg = p.train_config(&format!("train/{}", ds.name));
        let outcome = train_dataset(ds, &cfg)
            .with_context(|| format!("training on dataset {:?}", ds.name))?;
        let path = p.out.join("models").join(format!("{}.model.json", ds.name));
        std::fs::create_dir_all(path.parent().expect("models dir"))?;
        save_model(&outcome.model, &path)?;
        println!("wrote {}", path.display());
        rows.push(vec![
            ds.name.clone(),
            outcome
                .best_epoch
                .map(|e| e.to_string())
                .unwrap_or_default(),
            outcome
                .best_val_f1
                .map(|f| format!("{f:.6}"))
                .unwrap_or_default(),
        ]);
    }
    p.write(
        "train_summary.csv",
        &report::csv_from_rows(&["dataset", "best_epoch", "val_f1"], rows),
    )?;
    Ok(())
}

pub fn eval_grid(p: &Pipeline) -> Result<()> {
    let datasets = p.datasets()?;
    let sources = build_sources(p, &datasets)?;
    let refs = sources.as_refs();
    let grid = cross_grid(&refs, &datasets)?;

    p.write(
        "grid_precision.csv",
        &report::grid_metric_csv(&grid, |c| c.precision),
    )?;
    p.write(
        "grid_recall.csv",
        &report::grid_metric_csv(&grid, |c| c.recall),
    )?;
    p.write("grid.json", &report::grid_json(&grid))?;

    let index = CorpusIndex::build(&datasets);
    let matrix = index.similarity_matrix();
    let points = similarity_auc_export(&grid, &matrix)?;
    p.write("similarity_auc.csv", &report::similarity_auc_csv(&points))?;
    Ok(())
}

pub fn ensemble(p: &Pipeline) -> Result<()> {
    let strategies = &p.config.ensemble_set;
    if strategies.is_empty() {
        bail!("ensemble_set is empty");
    }
    let datasets = p.datasets()?;
    let sources = build_sources(p, &datasets)?;
    let base = sources.as_refs();

    let merged_source = if strategies.contains(&Strategy::DatasetMerger) {
        let merged = merge_datasets(&datasets, "DM")?;
        let outcome = train_dataset(&merged, &p.train_config("train/DM"))
            .context("training the merged-dataset classifier")?;
        Some(BuiltinSource {
            name: "DM".to_string(),
            model: outcome.model,
        })
    } else {
        None
    };

    let combiner = if strategies.contains(&Strategy::LinearLayer) {
        let (inputs, truths) = collect_combiner_training_data(&datasets, &base)?;
        Some(
            train_combiner(&inputs, &truths, &p.train_config("combiner"))
                .context("training the linear-layer combiner")?,
        )
    } else {
        None
    };

    let report_data = crosscorpus::ensemble::evaluate_strategies(
        strategies,
        &EnsembleEvalInputs {
            datasets: &datasets,
            base: &base,
            merged: merged_source.as_ref().map(|s| s as &dyn ScoreSource),
            combiner: combiner.as_ref(),
        },
    )?;

    p.write(
        "ensemble_precision.csv",
        &report::ensemble_metric_csv(&report_data, |c| c.precision),
    )?;
    p.write(
        "ensemble_recall.csv",
        &report::ensemble_metric_csv(&report_data, |c| c.recall),
    )?;
    p.write("ensemble.json", &report::ensemble_json(&report_data))?;
    Ok(())
}

pub fn synth(config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let json = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let mut spec = SyntheticSpec::from_json(&json)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let out = out.ok_or_else(|| anyhow!("synth needs --out <dir>"))?;
    std::fs::create_dir_all(out)?;

    let datasets = generate(&spec)?;
    let paths = write_datasets(&datasets, out)?;
    for path in &paths {
        println!("wrote {}", path.display());
    }

    // A run config pointing at the generated files, ready for the other
    // commands.
    let dataset_entries: Vec<serde_json::Value> = datasets
        .iter()
        .zip(&paths)
        .map(|(ds, path)| {
            serde_json::json!({
                "name": ds.name,
                "path": path,
                "merge_rule": {"positive_labels": [SYNTH_POSITIVE_LABEL], "mode": "any"}
            })
        })
        .collect();
    let config = serde_json::json!({
        "datasets": dataset_entries,
        "seed": spec.seed,
        "output_dir": out.join("reports"),
    });
    let config_out = out.join("synth_config.json");
    report::write_atomic(&config_out, serde_json::to_string_pretty(&config)?.as_bytes())?;
    println!("wrote {}", config_out.display());
    Ok(())
}

fn preview(words: &[String]) -> String {
    const SHOW: usize = 10;
    if words.len() <= SHOW {
        words.join(", ")
    } else {
        format!("{}, ... ({} more)", words[..SHOW].join(", "), words.len() - SHOW)
    }
}
