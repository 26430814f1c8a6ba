//! End-to-end experiment runner.
//!
//! A run embeds every label string of the configuration once, embeds the
//! task's requirements, ranks the labels for each requirement, predicts
//! (argmax or top-k) and tallies the predictions. Requirements that have no
//! known token are logged as failures and left out of the tally; any other
//! embedding failure aborts the run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{predict_single, predict_topk, rank_labels, ClassifyError, Ranking};
use crate::corpus::{build_task, load_promise, load_secreq, CorpusError, Dataset, TaskInstance, TaskKind};
use crate::embedding::{
    load_lexicon, EmbedError, Embedder, EmbedderKind, EmbedderSpec, EmbeddingVector, LexiconError, RemoteEmbedder,
    StaticEmbedder, DEFAULT_BATCH_SIZE,
};
use crate::labelspace::{builtin_config, load_config, ClassId, LabelConfig, LabelError};
use crate::metrics::{prf, ConfusionTally, MetricsError, MetricsReport};
use crate::ErrorKind;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("embedding label for {class}: {source}")]
    LabelEmbedding { class: ClassId, source: EmbedError },
    #[error("embedding item {id}: {source}")]
    ItemEmbedding { id: String, source: EmbedError },
    #[error("classifying item {id}: {source}")]
    Classify { id: String, source: ClassifyError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl ExperimentError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ExperimentError::Corpus(CorpusError::InvalidTask(_)) => ErrorKind::Usage,
            ExperimentError::Label(LabelError::UnknownConfig(_)) => ErrorKind::Usage,
            ExperimentError::Corpus(_)
            | ExperimentError::Label(_)
            | ExperimentError::Lexicon(_)
            | ExperimentError::Metrics(_) => ErrorKind::Data,
            ExperimentError::LabelEmbedding { source, .. } | ExperimentError::ItemEmbedding { source, .. } => {
                if source.is_item_level() {
                    ErrorKind::Data
                } else {
                    ErrorKind::Backend
                }
            }
            ExperimentError::Classify { source, .. } => match source {
                ClassifyError::DimensionMismatch { .. } => ErrorKind::Backend,
                ClassifyError::Label { source, .. } if matches!(**source, ClassifyError::DimensionMismatch { .. }) => {
                    ErrorKind::Backend
                }
                _ => ErrorKind::Data,
            },
        }
    }
}

/// How an experiment names its label configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigRef(pub String);

impl ConfigRef {
    /// A builtin id if one matches, otherwise a path to a JSON file.
    pub fn load(&self) -> Result<LabelConfig, LabelError> {
        match builtin_config(&self.0) {
            Err(LabelError::UnknownConfig(_)) if Path::new(&self.0).is_file() => load_config(&self.0),
            other => other,
        }
    }

    /// Like [`ConfigRef::load`], validated against `classes`.
    pub fn resolve(&self, classes: &[ClassId]) -> Result<LabelConfig, LabelError> {
        let config = self.load()?;
        config.validate_for(classes)?;
        Ok(config)
    }
}

/// One experiment: a task on a dataset file, a label configuration and an
/// embedding backend. The pipeline has no randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    pub task: String,
    #[serde(default)]
    pub scope: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    pub config: ConfigRef,
    pub backend: EmbedderSpec,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

impl ExperimentSpec {
    pub fn task_kind(&self) -> Result<TaskKind, CorpusError> {
        TaskKind::from_parts(&self.task, self.scope.as_deref(), self.k)
    }

    /// Loads the dataset, builds the task and resolves the configuration.
    pub fn prepare(&self) -> Result<(TaskInstance, LabelConfig), ExperimentError> {
        let kind = self.task_kind()?;
        let items = match kind.dataset() {
            Dataset::Promise => load_promise(&self.dataset)?,
            Dataset::SecReq => load_secreq(&self.dataset)?,
        };
        let task = build_task(&kind, &items)?;
        let config = self.config.resolve(&task.classes)?;
        Ok((task, config))
    }
}

/// Builds an uncached embedder for `spec`.
pub fn open_embedder(spec: &EmbedderSpec, batch_size: usize) -> Result<Arc<dyn Embedder>, ExperimentError> {
    Ok(match spec.kind {
        EmbedderKind::StaticLexicon => {
            let lexicon = load_lexicon(&spec.source)?;
            Arc::new(StaticEmbedder::new(Arc::new(lexicon), spec.identifier()))
        }
        EmbedderKind::Remote => Arc::new(RemoteEmbedder::new(spec.clone()).with_batch_size(batch_size)),
    })
}

/// One line of the prediction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: ClassId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicted: Vec<ClassId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Ranking>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub report: MetricsReport,
    /// One record per task item, in input order.
    pub log: Vec<PredictionRecord>,
}

impl ExperimentOutcome {
    /// The prediction log as JSON lines.
    pub fn render_log(&self) -> String {
        render_log(&self.log)
    }
}

pub fn render_log(log: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for record in log {
        out.push_str(&serde_json::to_string(record).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Embeds the label strings of `config` in configuration order.
pub async fn embed_labels(
    config: &LabelConfig,
    embedder: &dyn Embedder,
) -> Result<Vec<(ClassId, EmbeddingVector)>, ExperimentError> {
    let classes: Vec<ClassId> = config.classes().cloned().collect();
    let texts: Vec<String> = config.labels.values().cloned().collect();
    let vectors = embedder.embed_batch(&texts).await;
    classes
        .into_iter()
        .zip(vectors)
        .map(|(class, v)| match v {
            Ok(v) => Ok((class, v)),
            Err(source) => Err(ExperimentError::LabelEmbedding { class, source }),
        })
        .collect()
}

/// Runs a prepared task. `config` must cover the task's classes.
pub async fn run_task(
    task: &TaskInstance,
    config: &LabelConfig,
    embedder: &dyn Embedder,
) -> Result<ExperimentOutcome, ExperimentError> {
    config.validate_for(&task.classes)?;
    let labels = embed_labels(config, embedder).await?;
    let texts: Vec<String> = task.items.iter().map(|r| r.text.clone()).collect();
    let vectors = embedder.embed_batch(&texts).await;

    let k = task.kind.top_k();
    let mut tally = ConfusionTally::new(&task.classes);
    let mut log = Vec::with_capacity(task.items.len());
    let mut excluded = 0usize;

    for (item, vector) in task.items.iter().zip(vectors) {
        let vector = match vector {
            Ok(v) => v,
            Err(e) if e.is_item_level() => {
                excluded += 1;
                log.push(PredictionRecord {
                    id: item.id.clone(),
                    gold: item.gold.clone(),
                    predicted: Vec::new(),
                    ranking: None,
                    error: Some(e.to_string()),
                });
                continue;
            }
            Err(source) => return Err(ExperimentError::ItemEmbedding { id: item.id.clone(), source }),
        };
        let classify = |source| ExperimentError::Classify { id: item.id.clone(), source };
        let ranking = rank_labels(&vector, labels.iter().map(|(c, v)| (c, v))).map_err(classify)?;
        let predicted = match k {
            Some(k) => {
                let set = predict_topk(&ranking, k).map_err(classify)?;
                tally.record_topk(&item.gold, &set)?;
                set
            }
            None => {
                let p = predict_single(&ranking).map_err(classify)?;
                tally.record(&item.gold, &p)?;
                vec![p]
            }
        };
        log.push(PredictionRecord {
            id: item.id.clone(),
            gold: item.gold.clone(),
            predicted,
            ranking: Some(ranking),
            error: None,
        });
    }

    if excluded > 0 {
        tracing::warn!(excluded, task = %task.kind, "items without known tokens were excluded from the tally");
    }
    let mut report = prf(&tally)?;
    report.excluded = excluded;
    Ok(ExperimentOutcome { report, log })
}

/// Loads, prepares and runs `spec` with `embedder`.
pub async fn run_experiment(spec: &ExperimentSpec, embedder: &dyn Embedder) -> Result<ExperimentOutcome, ExperimentError> {
    let (task, config) = spec.prepare()?;
    run_task(&task, &config, embedder).await
}

/// Markdown table of runs sorted by weighted F1, best first. Equal scores are
/// ordered by run label; only the first row is flagged.
pub fn compare_runs(reports: &[(String, MetricsReport)]) -> String {
    let mut rows: Vec<&(String, MetricsReport)> = reports.iter().collect();
    rows.sort_by(|a, b| b.1.weighted.f1.total_cmp(&a.1.weighted.f1).then_with(|| a.0.cmp(&b.0)));
    let mut out = String::from("| Run | wP | wR | wF1 | Support | Best |\n|---|---|---|---|---|---|\n");
    for (i, (label, report)) in rows.iter().enumerate() {
        let w = &report.weighted;
        let flag = if i == 0 { "*" } else { "" };
        writeln!(out, "| {label} | {:.2} | {:.2} | {:.2} | {} | {flag} |", w.precision, w.recall, w.f1, w.support)
            .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Requirement;
    use crate::embedding::parse_lexicon;
    use crate::metrics::WeightedMetrics;

    fn report(f1: f64) -> MetricsReport {
        MetricsReport {
            classes: Vec::new(),
            weighted: WeightedMetrics { precision: f1, recall: f1, f1, support: 10 },
            excluded: 0,
        }
    }

    fn best(table: &str) -> Vec<&str> {
        table.lines().skip(2).filter(|l| l.ends_with("| * |")).collect()
    }

    #[test]
    fn compare_flags_highest() {
        let t = compare_runs(&[("AllMini+FR_D".into(), report(0.59)), ("Sbert+FR_E".into(), report(0.66))]);
        assert_eq!(best(&t), ["| Sbert+FR_E | 0.66 | 0.66 | 0.66 | 10 | * |"]);
        assert!(t.lines().nth(3).unwrap().starts_with("| AllMini+FR_D | 0.59"));
    }

    #[test]
    fn compare_single_and_ties() {
        assert_eq!(best(&compare_runs(&[("only".into(), report(0.1))])).len(), 1);
        let t = compare_runs(&[("b".into(), report(0.5)), ("a".into(), report(0.5))]);
        assert_eq!(best(&t), ["| a | 0.50 | 0.50 | 0.50 | 10 | * |"]);
    }

    fn req(id: &str, gold: &str, text: &str) -> Requirement {
        Requirement { id: id.into(), project: None, text: text.into(), gold: gold.into() }
    }

    #[tokio::test]
    async fn oov_items_are_excluded() {
        let lex = parse_lexicon("functional 1 0\nnon 0 1\nusers 1 0.1\nfast 0 1\n").unwrap();
        let embedder = StaticEmbedder::new(Arc::new(lex), "test");
        let items = vec![req("1", "F", "users"), req("2", "PE", "fast"), req("3", "US", "zzz qqq")];
        let task = build_task(&TaskKind::FrNfr, &items).unwrap();
        let config = builtin_config("FR_A").unwrap();
        let out = run_task(&task, &config, &embedder).await.unwrap();
        assert_eq!(out.report.excluded, 1);
        assert_eq!(out.report.weighted.support, 2);
        assert_eq!(out.log.len(), 3);
        assert!(out.log[2].error.is_some() && out.log[2].predicted.is_empty());
    }

    #[tokio::test]
    async fn unknown_label_token_is_a_data_error() {
        let lex = parse_lexicon("users 1 0\n").unwrap();
        let embedder = StaticEmbedder::new(Arc::new(lex), "test");
        let task = build_task(&TaskKind::FrNfr, &[req("1", "F", "users")]).unwrap();
        let err = run_task(&task, &builtin_config("FR_A").unwrap(), &embedder).await.unwrap_err();
        assert!(matches!(err, ExperimentError::LabelEmbedding { .. }));
        assert_eq!(err.kind(), ErrorKind::Data);
    }

    #[test]
    fn config_ref_resolution() {
        let classes = [ClassId::from("FR"), ClassId::from("NFR")];
        assert_eq!(ConfigRef("FR_E".into()).resolve(&classes).unwrap().id, "FR_E");
        assert!(matches!(ConfigRef("nope".into()).resolve(&classes), Err(LabelError::UnknownConfig(_))));
        assert!(matches!(ConfigRef("SE_A".into()).resolve(&classes), Err(LabelError::MissingClass { .. })));
    }
}
