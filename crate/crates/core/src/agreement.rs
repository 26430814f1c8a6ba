//! Annotation agreement for label curation.
//!
//! Candidate terms are tagged `yes`/`no`/`maybe` by three annotators. The raw
//! table feeds [`breakdown`]; once every `maybe` is revised to `yes` or `no`
//! the resolved table feeds [`majority_vote`], [`fleiss_kappa`] and
//! [`krippendorff_alpha`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgreementError {
    #[error("expected exactly 3 annotators, found {0}")]
    WrongAnnotatorCount(usize),
    #[error("at least 2 annotators are required, found {0}")]
    TooFewAnnotators(usize),
    #[error("table has no items")]
    NoItems,
    #[error("item {item} has no tag from annotator {annotator}")]
    MissingCell { item: String, annotator: String },
    #[error("item {item} is tagged twice by annotator {annotator}")]
    DuplicateCell { item: String, annotator: String },
    #[error("row {row}: expected {expected} tags, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("breakdown expects tags yes/no/maybe, found {0:?}")]
    UnexpectedTag(String),
    #[error("tag list is empty")]
    EmptyTags,
    #[error("unresolved maybe tag")]
    UnresolvedMaybe,
    #[error("majority vote is tied")]
    Tie,
    #[error("statistic is undefined for this table: {0}")]
    DegenerateTable(&'static str),
    #[error("kappa {0} is outside [-1, 1]")]
    OutOfRange(f64),
    #[error("item {0} appears in more than one group")]
    InconsistentGroup(String),
    #[error("cannot read tag file: {0}")]
    Io(String),
    #[error("tag file row {row}: {reason}")]
    ParseError { row: usize, reason: String },
}

/// Items × annotators grid of nominal tags. Every cell is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTable {
    items: Vec<String>,
    annotators: Vec<String>,
    /// `tags[i][a]` is annotator `a`'s tag for item `i`.
    tags: Vec<Vec<String>>,
    /// Optional group per item (e.g. the class a candidate term was
    /// suggested for), used for macro aggregation.
    groups: Option<Vec<String>>,
}

impl AnnotationTable {
    pub fn new(items: Vec<String>, annotators: Vec<String>, tags: Vec<Vec<String>>) -> Result<Self, AgreementError> {
        if items.is_empty() {
            return Err(AgreementError::NoItems);
        }
        if annotators.len() < 2 {
            return Err(AgreementError::TooFewAnnotators(annotators.len()));
        }
        if tags.len() != items.len() {
            return Err(AgreementError::RaggedRow { row: tags.len(), expected: items.len(), found: tags.len() });
        }
        for (row, t) in tags.iter().enumerate() {
            if t.len() != annotators.len() {
                return Err(AgreementError::RaggedRow { row, expected: annotators.len(), found: t.len() });
            }
        }
        Ok(Self { items, annotators, tags, groups: None })
    }

    /// Convenience constructor with generated item and annotator ids.
    pub fn from_rows<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self, AgreementError> {
        let raters = rows.first().map_or(0, Vec::len);
        let items = (1..=rows.len()).map(|i| format!("item{i}")).collect();
        let annotators = (1..=raters).map(|a| format!("rater{a}")).collect();
        let tags = rows.iter().map(|r| r.iter().map(|t| t.as_ref().to_owned()).collect()).collect();
        Self::new(items, annotators, tags)
    }

    pub fn with_groups(mut self, groups: Vec<String>) -> Self {
        assert_eq!(groups.len(), self.items.len(), "one group per item");
        self.groups = Some(groups);
        self
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn row(&self, item: usize) -> &[String] {
        &self.tags[item]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[String]> {
        self.tags.iter().map(Vec::as_slice)
    }

    /// Distinct categories in sorted order.
    pub fn categories(&self) -> Vec<&str> {
        self.tags.iter().flatten().map(String::as_str).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Same table with annotator columns reordered by `order`.
    pub fn permute_annotators(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.annotators.len());
        Self {
            items: self.items.clone(),
            annotators: order.iter().map(|&a| self.annotators[a].clone()).collect(),
            tags: self.tags.iter().map(|row| order.iter().map(|&a| row[a].clone()).collect()).collect(),
            groups: self.groups.clone(),
        }
    }

    /// Sub-tables by group, in sorted group order. Ungrouped tables form one
    /// group named "".
    pub fn split_by_group(&self) -> Vec<(String, AnnotationTable)> {
        let Some(groups) = &self.groups else {
            return vec![(String::new(), self.clone())];
        };
        let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            by_group.entry(g).or_default().push(i);
        }
        by_group
            .into_iter()
            .map(|(g, idx)| {
                let table = AnnotationTable {
                    items: idx.iter().map(|&i| self.items[i].clone()).collect(),
                    annotators: self.annotators.clone(),
                    tags: idx.iter().map(|&i| self.tags[i].clone()).collect(),
                    groups: None,
                };
                (g.to_owned(), table)
            })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct TagRow {
    item: String,
    annotator: String,
    tag: String,
    #[serde(default)]
    group: Option<String>,
}

pub fn load_tags(path: impl AsRef<Path>) -> Result<AnnotationTable, AgreementError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| AgreementError::Io(format!("{}: {e}", path.display())))?;
    parse_tags(file)
}

/// Parses `item,annotator,tag[,group]` CSV into a complete table. Items and
/// annotators keep first-appearance order.
pub fn parse_tags<R: Read>(reader: R) -> Result<AnnotationTable, AgreementError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut items: Vec<String> = Vec::new();
    let mut annotators: Vec<String> = Vec::new();
    let mut cells: HashMap<(usize, usize), String> = HashMap::new();
    let mut groups: Vec<Option<String>> = Vec::new();

    for (i, rec) in rdr.deserialize::<TagRow>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| AgreementError::ParseError { row, reason: e.to_string() })?;
        if rec.item.is_empty() || rec.annotator.is_empty() || rec.tag.is_empty() {
            return Err(AgreementError::ParseError { row, reason: "empty field".into() });
        }
        let it = match items.iter().position(|x| *x == rec.item) {
            Some(p) => p,
            None => {
                items.push(rec.item.clone());
                groups.push(rec.group.clone().filter(|g| !g.is_empty()));
                items.len() - 1
            }
        };
        let group = rec.group.filter(|g| !g.is_empty());
        if group.is_some() && groups[it] != group {
            return Err(AgreementError::InconsistentGroup(rec.item));
        }
        let an = match annotators.iter().position(|x| *x == rec.annotator) {
            Some(p) => p,
            None => {
                annotators.push(rec.annotator.clone());
                annotators.len() - 1
            }
        };
        if cells.insert((it, an), rec.tag).is_some() {
            return Err(AgreementError::DuplicateCell { item: rec.item, annotator: rec.annotator });
        }
    }

    let mut tags = Vec::with_capacity(items.len());
    for (it, item) in items.iter().enumerate() {
        let mut row = Vec::with_capacity(annotators.len());
        for (an, annotator) in annotators.iter().enumerate() {
            match cells.remove(&(it, an)) {
                Some(t) => row.push(t),
                None => return Err(AgreementError::MissingCell { item: item.clone(), annotator: annotator.clone() }),
            }
        }
        tags.push(row);
    }
    let table = AnnotationTable::new(items, annotators, tags)?;
    if groups.iter().any(Option::is_some) {
        let groups = groups.into_iter().map(Option::unwrap_or_default).collect();
        Ok(table.with_groups(groups))
    } else {
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementBreakdown {
    pub perfect: f64,
    pub partial: f64,
    pub disagreement: f64,
}

/// Share of items where all three annotators agree, where two agree, and
/// where all three differ.
pub fn breakdown(table: &AnnotationTable) -> Result<AgreementBreakdown, AgreementError> {
    if table.annotators.len() != 3 {
        return Err(AgreementError::WrongAnnotatorCount(table.annotators.len()));
    }
    if let Some(bad) = table.tags.iter().flatten().find(|t| !matches!(t.as_str(), "yes" | "no" | "maybe")) {
        return Err(AgreementError::UnexpectedTag(bad.clone()));
    }
    let (mut perfect, mut disagreement) = (0usize, 0usize);
    for row in &table.tags {
        let distinct = row.iter().collect::<BTreeSet<_>>().len();
        match distinct {
            1 => perfect += 1,
            3 => disagreement += 1,
            _ => {}
        }
    }
    let n = table.items.len();
    let partial = n - perfect - disagreement;
    Ok(AgreementBreakdown {
        perfect: perfect as f64 / n as f64,
        partial: partial as f64 / n as f64,
        disagreement: disagreement as f64 / n as f64,
    })
}

/// Strict majority among resolved tags.
pub fn majority_vote<S: AsRef<str>>(tags: &[S]) -> Result<String, AgreementError> {
    if tags.is_empty() {
        return Err(AgreementError::EmptyTags);
    }
    if tags.iter().any(|t| t.as_ref() == "maybe") {
        return Err(AgreementError::UnresolvedMaybe);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tags {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    let mut winners = counts.iter().filter(|(_, &c)| c == best);
    match (winners.next(), winners.next()) {
        (Some((tag, _)), None) => Ok((*tag).to_owned()),
        _ => Err(AgreementError::Tie),
    }
}

fn category_counts(table: &AnnotationTable) -> (Vec<&str>, Vec<Vec<usize>>) {
    let categories = table.categories();
    let counts = table
        .tags
        .iter()
        .map(|row| categories.iter().map(|c| row.iter().filter(|t| t.as_str() == *c).count()).collect())
        .collect();
    (categories, counts)
}

/// Fleiss' kappa for a fixed number of raters per item.
///
/// When every tag is the same category the chance agreement is 1; the
/// observed agreement is then also 1 and kappa is defined as 1, except for a
/// single-item table, which carries no information and is rejected.
pub fn fleiss_kappa(table: &AnnotationTable) -> Result<f64, AgreementError> {
    let n = table.annotators.len();
    if n < 2 {
        return Err(AgreementError::TooFewAnnotators(n));
    }
    let (categories, counts) = category_counts(table);
    let items = counts.len();
    if items == 1 && categories.len() == 1 {
        return Err(AgreementError::DegenerateTable("single item with a single category"));
    }
    let nf = n as f64;
    let p_bar = counts
        .iter()
        .map(|row| (row.iter().map(|&c| (c * c) as f64).sum::<f64>() - nf) / (nf * (nf - 1.0)))
        .sum::<f64>()
        / items as f64;
    let total = (items * n) as f64;
    let p_e: f64 = (0..categories.len())
        .map(|j| {
            let p = counts.iter().map(|row| row[j]).sum::<usize>() as f64 / total;
            p * p
        })
        .sum();
    if categories.len() == 1 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Krippendorff's alpha with the nominal difference function, computed from
/// the coincidence matrix of a complete table.
pub fn krippendorff_alpha(table: &AnnotationTable) -> Result<f64, AgreementError> {
    let m = table.annotators.len();
    if m < 2 {
        return Err(AgreementError::TooFewAnnotators(m));
    }
    let (categories, counts) = category_counts(table);
    let k = categories.len();

    // o[c][d] = sum over units of n_uc * (n_ud - [c == d]) / (m - 1)
    let mut o = vec![vec![0.0f64; k]; k];
    for row in &counts {
        for c in 0..k {
            for d in 0..k {
                let pairs = if c == d { row[c] * row[c].saturating_sub(1) } else { row[c] * row[d] };
                o[c][d] += pairs as f64 / (m - 1) as f64;
            }
        }
    }
    let n_c: Vec<f64> = o.iter().map(|r| r.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += o[c][d];
                expected += n_c[c] * n_c[d];
            }
        }
    }
    if expected == 0.0 {
        return Err(AgreementError::DegenerateTable("no variation in the tags"));
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// One statistic over the pooled table.
    Micro,
    /// Mean of the per-group statistics.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Kappa,
    Alpha,
    Breakdown,
}

/// Applies `stat` at the given aggregation level.
pub fn aggregate(
    table: &AnnotationTable,
    level: Level,
    stat: fn(&AnnotationTable) -> Result<f64, AgreementError>,
) -> Result<f64, AgreementError> {
    match level {
        Level::Micro => stat(table),
        Level::Macro => {
            let groups = table.split_by_group();
            let values = groups.iter().map(|(_, t)| stat(t)).collect::<Result<Vec<_>, _>>()?;
            Ok(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

/// Landis–Koch agreement bands, ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl Band {
    pub fn label(self) -> &'static str {
        match self {
            Band::Poor => "poor",
            Band::Slight => "slight",
            Band::Fair => "fair",
            Band::Moderate => "moderate",
            Band::Substantial => "substantial",
            Band::AlmostPerfect => "almost perfect",
        }
    }
}

/// Band for an agreement value; upper edges are inclusive.
pub fn interpret_kappa(value: f64) -> Result<Band, AgreementError> {
    if !(-1.0..=1.0).contains(&value) {
        return Err(AgreementError::OutOfRange(value));
    }
    Ok(match value {
        v if v < 0.0 => Band::Poor,
        v if v <= 0.20 => Band::Slight,
        v if v <= 0.40 => Band::Fair,
        v if v <= 0.60 => Band::Moderate,
        v if v <= 0.80 => Band::Substantial,
        _ => Band::AlmostPerfect,
    })
}
