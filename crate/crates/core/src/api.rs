//! JSON request and response bodies of the HTTP service.
//!
//! File inputs (datasets, lexicons, tag files, label configurations) travel
//! as paths on the service host.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agreement::{AgreementBreakdown, AgreementError, Level, Statistic};
use crate::classifier::{ClassifyError, Ranking};
use crate::embedding::{CacheError, EmbedError, EmbedderSpec, LexiconError};
use crate::experiment::{ConfigRef, ExperimentError, ExperimentSpec, PredictionRecord};
use crate::labelgen::{LabelGenError, TermSuggestion};
use crate::labelspace::{ClassId, LabelConfig, LabelError, Strategy};
use crate::metrics::{MetricsError, MetricsReport, ReportFormat};
use crate::ErrorKind;

/// Error body returned with every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: ErrorKind,
    pub message: String,
}

impl ApiError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind, self.message)
    }
}

impl std::error::Error for ApiError {}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for ApiError {
            fn from(e: $t) -> Self {
                Self::new(ErrorKind::Data, e.to_string())
            }
        }
    )*};
}

data_error!(LexiconError, CacheError);

impl From<ExperimentError> for ApiError {
    fn from(e: ExperimentError) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

impl From<LabelError> for ApiError {
    fn from(e: LabelError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        let kind = if e.is_item_level() { ErrorKind::Data } else { ErrorKind::Backend };
        Self::new(kind, e.to_string())
    }
}

impl From<ClassifyError> for ApiError {
    fn from(e: ClassifyError) -> Self {
        let kind = match &e {
            ClassifyError::TooFewLabels(_) | ClassifyError::ZeroK => ErrorKind::Usage,
            ClassifyError::DimensionMismatch { .. } => ErrorKind::Backend,
            _ => ErrorKind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<LabelGenError> for ApiError {
    fn from(e: LabelGenError) -> Self {
        let kind = match &e {
            LabelGenError::InvalidQuery(_) | LabelGenError::ZeroCount | LabelGenError::EmptySelection => {
                ErrorKind::Usage
            }
            _ => ErrorKind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<AgreementError> for ApiError {
    fn from(e: AgreementError) -> Self {
        Self::new(ErrorKind::Data, e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub id: String,
    pub strategy: Strategy,
    pub classes: Vec<ClassId>,
}

impl From<&LabelConfig> for ConfigSummary {
    fn from(c: &LabelConfig) -> Self {
        Self { id: c.id.clone(), strategy: c.strategy, classes: c.classes().cloned().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub texts: Vec<String>,
    pub config: ConfigRef,
    pub backend: EmbedderSpec,
    /// Top-k prediction when set, argmax otherwise.
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub predicted: Vec<ClassId>,
    pub ranking: Ranking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub config: String,
    pub results: Vec<Classification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRequest {
    pub spec: ExperimentSpec,
    #[serde(default)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResponse {
    pub report: MetricsReport,
    /// The report rendered in the requested format.
    pub rendered: String,
    pub log: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelgenRequest {
    pub lexicon: PathBuf,
    pub term: String,
    pub top: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelgenResponse {
    pub suggestions: Vec<TermSuggestion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrRequest {
    pub tags: PathBuf,
    pub stat: Statistic,
    pub level: Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrResponse {
    pub stat: Statistic,
    pub level: Level,
    pub items: usize,
    pub annotators: usize,
    /// Kappa or alpha.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<AgreementBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub label: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRequest {
    pub reports: Vec<NamedReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub table: String,
}
