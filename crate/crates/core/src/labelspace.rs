//! Class ids and label configurations.
//!
//! A [`LabelConfig`] assigns a label string to every class of a task; the
//! string, not the class code, is what gets embedded. All configurations
//! reported for the PROMISE NFR and SecReq experiments ship as JSON assets
//! (`assets/configs/`) and are available through [`builtin_config`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use indexmap::IndexMap;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

include!(concat!(env!("OUT_DIR"), "/builtin_configs.rs"));

/// Short class code such as `FR`, `US` or `NONSEC`. Codes are case-sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(String);

impl ClassId {
    /// Panics on an empty code; use [`ClassId::parse`] for untrusted input.
    pub fn new(code: impl Into<String>) -> Self {
        let code = code.into();
        assert!(!code.is_empty(), "class code must not be empty");
        Self(code)
    }

    pub fn parse(code: &str) -> Option<Self> {
        let code = code.trim();
        (!code.is_empty()).then(|| Self(code.to_owned()))
    }

    pub fn code(&self) -> &str {
        &self.0
    }

    /// Human-readable class name; unknown codes display as themselves.
    pub fn display_name(&self) -> &str {
        match self.0.as_str() {
            "F" | "FR" => "Functional",
            "NFR" => "Non-functional",
            "A" => "Availability",
            "L" => "Legal",
            "LF" => "Look and feel",
            "MN" => "Maintainability",
            "O" => "Operational",
            "PE" => "Performance",
            "SC" => "Scalability",
            "SE" => "Security",
            "US" => "Usability",
            "FT" => "Fault tolerance",
            "PO" => "Portability",
            "SEC" => "Security-related",
            "NONSEC" => "Non-security",
            "OTHER" => "Other",
            other => other,
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassId {
    fn from(code: &str) -> Self {
        Self::new(code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "original")]
    Original,
    #[serde(rename = "expert")]
    Expert,
    #[serde(rename = "embedding-top20")]
    EmbeddingTop20,
    #[serde(rename = "embedding-top50")]
    EmbeddingTop50,
    #[serde(rename = "combined")]
    Combined,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("unknown label configuration {0:?}")]
    UnknownConfig(String),
    #[error("term list is empty")]
    EmptyTermList,
    #[error("term {0} is empty")]
    EmptyTerm(usize),
    #[error("label is empty")]
    EmptyLabel,
    #[error("cannot parse label configuration: {0}")]
    ParseError(String),
    #[error("configuration {config:?} has no label for class {class}")]
    MissingClass { config: String, class: ClassId },
    #[error("configuration {config:?} has a label for {class}, which is not a class of this task")]
    ExtraClass { config: String, class: ClassId },
    #[error("configuration {config:?} lists class {class} more than once")]
    DuplicateClass { config: String, class: ClassId },
}

/// A named assignment of label strings to classes.
///
/// Label order is significant: it breaks ties between equal similarity
/// scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelConfig {
    pub id: String,
    pub strategy: Strategy,
    pub labels: IndexMap<ClassId, String>,
}

impl LabelConfig {
    pub fn classes(&self) -> impl Iterator<Item = &ClassId> {
        self.labels.keys()
    }

    pub fn label(&self, class: &ClassId) -> Option<&str> {
        self.labels.get(class).map(String::as_str)
    }

    /// Checks that the configuration covers exactly `classes`.
    pub fn validate_for(&self, classes: &[ClassId]) -> Result<(), LabelError> {
        if let Some(missing) = classes.iter().find(|c| !self.labels.contains_key(*c)) {
            return Err(LabelError::MissingClass { config: self.id.clone(), class: missing.clone() });
        }
        if let Some(extra) = self.labels.keys().find(|c| !classes.contains(c)) {
            return Err(LabelError::ExtraClass { config: self.id.clone(), class: extra.clone() });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("label config serializes")
    }
}

/// Raw file form: labels keep duplicates so they can be reported.
#[derive(Deserialize)]
struct RawConfig {
    id: String,
    strategy: Strategy,
    labels: OrderedPairs,
}

struct OrderedPairs(Vec<(String, String)>);

impl<'de> Deserialize<'de> for OrderedPairs {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PairsVisitor;

        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = OrderedPairs;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from class code to label string")
            }

            fn visit_map<M: MapAccess<'de>>(self, mut map: M) -> Result<Self::Value, M::Error> {
                let mut pairs = Vec::new();
                while let Some(entry) = map.next_entry::<String, String>()? {
                    pairs.push(entry);
                }
                Ok(OrderedPairs(pairs))
            }
        }

        deserializer.deserialize_map(PairsVisitor)
    }
}

impl RawConfig {
    fn validate(self) -> Result<LabelConfig, LabelError> {
        if self.id.trim().is_empty() {
            return Err(LabelError::ParseError("configuration id is empty".into()));
        }
        let mut labels = IndexMap::new();
        for (code, label) in self.labels.0 {
            let class =
                ClassId::parse(&code).ok_or_else(|| LabelError::ParseError("empty class code".into()))?;
            if label.trim().is_empty() {
                return Err(LabelError::ParseError(format!("label for {class} is empty")));
            }
            if labels.insert(class.clone(), label).is_some() {
                return Err(LabelError::DuplicateClass { config: self.id, class });
            }
        }
        if labels.is_empty() {
            return Err(LabelError::ParseError("configuration has no labels".into()));
        }
        Ok(LabelConfig { id: self.id, strategy: self.strategy, labels })
    }
}

impl<'de> Deserialize<'de> for LabelConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        RawConfig::deserialize(deserializer)?.validate().map_err(serde::de::Error::custom)
    }
}

/// Parses and validates a configuration in the JSON file schema.
pub fn parse_config(src: &str) -> Result<LabelConfig, LabelError> {
    let raw: RawConfig = serde_json::from_str(src).map_err(|e| LabelError::ParseError(e.to_string()))?;
    raw.validate()
}

pub fn load_config(path: impl AsRef<Path>) -> Result<LabelConfig, LabelError> {
    let path = path.as_ref();
    let src =
        fs::read_to_string(path).map_err(|e| LabelError::ParseError(format!("{}: {e}", path.display())))?;
    parse_config(&src)
}

/// Loads a configuration and checks it against the task's classes.
pub fn load_config_for(path: impl AsRef<Path>, classes: &[ClassId]) -> Result<LabelConfig, LabelError> {
    let config = load_config(path)?;
    config.validate_for(classes)?;
    Ok(config)
}

fn builtins() -> &'static IndexMap<String, LabelConfig> {
    static CONFIGS: OnceLock<IndexMap<String, LabelConfig>> = OnceLock::new();
    CONFIGS.get_or_init(|| {
        BUILTIN_CONFIGS
            .iter()
            .map(|src| {
                let config = parse_config(src).expect("builtin label configuration is valid");
                (config.id.clone(), config)
            })
            .collect()
    })
}

/// One of the builtin configurations, by case-sensitive id.
pub fn builtin_config(id: &str) -> Result<LabelConfig, LabelError> {
    builtins().get(id).cloned().ok_or_else(|| LabelError::UnknownConfig(id.to_owned()))
}

/// Every builtin configuration, ordered by id.
pub fn builtin_configs() -> Vec<&'static LabelConfig> {
    let mut all: Vec<_> = builtins().values().collect();
    all.sort_by(|a, b| a.id.cmp(&b.id));
    all
}

/// Joins terms with ", " and puts "or " before the last of two or more.
pub fn compose_terms<S: AsRef<str>>(terms: &[S]) -> Result<String, LabelError> {
    if terms.is_empty() {
        return Err(LabelError::EmptyTermList);
    }
    if let Some(i) = terms.iter().position(|t| t.as_ref().is_empty()) {
        return Err(LabelError::EmptyTerm(i));
    }
    let (last, init) = terms.split_last().expect("non-empty");
    if init.is_empty() {
        return Ok(last.as_ref().to_owned());
    }
    let mut out = init.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(", ");
    out.push_str(", or ");
    out.push_str(last.as_ref());
    Ok(out)
}

/// Prefixes a label with "not about ".
pub fn negate_label(label: &str) -> Result<String, LabelError> {
    if label.is_empty() {
        return Err(LabelError::EmptyLabel);
    }
    Ok(format!("not about {label}"))
}
