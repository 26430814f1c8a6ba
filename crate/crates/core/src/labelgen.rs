//! Nearest-term suggestion over a word-vector lexicon, and composition of the
//! accepted terms into a label string.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::cosine;
use crate::embedding::{tokenize, Lexicon};
use crate::labelspace::{compose_terms, LabelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelGenError {
    #[error("query term {0:?} is not in the lexicon")]
    QueryNotInLexicon(String),
    #[error("query must be a single token, got {0:?}")]
    InvalidQuery(String),
    #[error("n must be at least 1")]
    ZeroCount,
    #[error("no terms were accepted")]
    EmptySelection,
    #[error("accepted term {0:?} is not among the suggestions")]
    NotSuggested(String),
    #[error(transparent)]
    Label(#[from] LabelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSuggestion {
    pub term: String,
    pub similarity: f64,
}

/// The `n` lexicon terms closest to `query` by cosine, most similar first,
/// ties in lexicographic order. Zero-norm entries are skipped.
pub fn nearest_terms(lexicon: &Lexicon, query: &str, n: usize) -> Result<Vec<TermSuggestion>, LabelGenError> {
    if n == 0 {
        return Err(LabelGenError::ZeroCount);
    }
    let mut tokens = tokenize(query);
    if tokens.len() != 1 {
        return Err(LabelGenError::InvalidQuery(query.to_owned()));
    }
    let q = tokens.pop().expect("one token");
    let qv = lexicon.get(&q).ok_or_else(|| LabelGenError::QueryNotInLexicon(query.to_owned()))?;

    let mut scored: Vec<TermSuggestion> = lexicon
        .iter()
        .filter(|(term, _)| *term != q)
        .filter_map(|(term, v)| cosine(qv, v).ok().map(|similarity| TermSuggestion { term: term.to_owned(), similarity }))
        .collect();
    scored.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then_with(|| a.term.cmp(&b.term)));
    scored.truncate(n);
    Ok(scored)
}

/// Joins the accepted terms, in suggestion order, into a comma-"or" label.
pub fn suggest_label<S: AsRef<str>>(suggestions: &[TermSuggestion], accepted: &[S]) -> Result<String, LabelGenError> {
    if accepted.is_empty() {
        return Err(LabelGenError::EmptySelection);
    }
    if let Some(missing) = accepted.iter().find(|a| !suggestions.iter().any(|s| s.term == a.as_ref())) {
        return Err(LabelGenError::NotSuggested(missing.as_ref().to_owned()));
    }
    let terms: Vec<&str> = suggestions
        .iter()
        .map(|s| s.term.as_str())
        .filter(|t| accepted.iter().any(|a| a.as_ref() == *t))
        .collect();
    Ok(compose_terms(&terms)?)
}
