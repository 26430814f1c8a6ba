use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::EmbeddingVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LexiconError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: expected {expected} components, found {found}")]
    InconsistentDimension { line: usize, expected: usize, found: usize },
    #[error("lexicon has no entries")]
    EmptyLexicon,
    #[error("cannot read lexicon: {0}")]
    Io(String),
}

/// Word vectors keyed by lowercase token.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    dim: usize,
    entries: HashMap<String, EmbeddingVector>,
}

impl Lexicon {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&EmbeddingVector> {
        self.entries.get(token)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }

    /// Entries in unspecified order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Splits on every non-alphanumeric character and lowercases.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
    let path = path.as_ref();
    let src = fs::read_to_string(path).map_err(|e| LexiconError::Io(format!("{}: {e}", path.display())))?;
    parse_lexicon(&src)
}

/// Parses the plain-text `<token> <f1> ... <fd>` format. Later duplicates
/// replace earlier ones. Blank lines are ignored.
pub fn parse_lexicon(src: &str) -> Result<Lexicon, LexiconError> {
    let mut dim = None;
    let mut entries = HashMap::new();

    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split(' ');
        let token = fields.next().unwrap_or_default();
        if token.is_empty() {
            return Err(LexiconError::MalformedLine { line, reason: "missing token".into() });
        }
        let components = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| LexiconError::MalformedLine {
                    line,
                    reason: format!("cannot parse {f:?} as a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if components.is_empty() {
            return Err(LexiconError::MalformedLine { line, reason: "no vector components".into() });
        }
        let expected = *dim.get_or_insert(components.len());
        if components.len() != expected {
            return Err(LexiconError::InconsistentDimension { line, expected, found: components.len() });
        }
        let vector = EmbeddingVector::new(components)
            .map_err(|e| LexiconError::MalformedLine { line, reason: e.to_string() })?;
        entries.insert(token.to_lowercase(), vector);
    }

    match dim {
        Some(dim) => Ok(Lexicon { dim, entries }),
        None => Err(LexiconError::EmptyLexicon),
    }
}
