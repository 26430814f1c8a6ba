//! Precision, recall and F1 per class plus support-weighted aggregates.
//!
//! Single-label runs are tallied with [`tally_single`]. Multi-label runs
//! compare the single gold class against the top-k prediction set with
//! [`tally_topk`]: the gold class is a true positive when it is in the set
//! and a false negative otherwise, and every other member of the set counts
//! as a false positive for its class.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelspace::ClassId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{golds} gold labels but {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("class {0} is not one of the task classes")]
    UnknownClass(ClassId),
    #[error("tally has no items")]
    EmptyTally,
    #[error("cannot merge tallies over different class sets")]
    ClassSetMismatch,
    #[error("cannot parse report: {0}")]
    ParseError(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Per-class true positive, false positive and false negative counts.
///
/// Tallies over disjoint item shards combine with [`ConfusionTally::merge`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionTally {
    pub classes: Vec<ClassId>,
    pub counts: Vec<ClassCounts>,
    pub total: usize,
}

impl ConfusionTally {
    pub fn new(classes: &[ClassId]) -> Self {
        Self { classes: classes.to_vec(), counts: vec![ClassCounts::default(); classes.len()], total: 0 }
    }

    fn index(&self, class: &ClassId) -> Result<usize, MetricsError> {
        self.classes.iter().position(|c| c == class).ok_or_else(|| MetricsError::UnknownClass(class.clone()))
    }

    pub fn counts_for(&self, class: &ClassId) -> Option<ClassCounts> {
        self.index(class).ok().map(|i| self.counts[i])
    }

    /// Records one single-label item.
    pub fn record(&mut self, gold: &ClassId, pred: &ClassId) -> Result<(), MetricsError> {
        let (g, p) = (self.index(gold)?, self.index(pred)?);
        if g == p {
            self.counts[g].tp += 1;
        } else {
            self.counts[g].fn_ += 1;
            self.counts[p].fp += 1;
        }
        self.total += 1;
        Ok(())
    }

    /// Records one item against a top-k prediction set.
    pub fn record_topk(&mut self, gold: &ClassId, predicted: &[ClassId]) -> Result<(), MetricsError> {
        let g = self.index(gold)?;
        let members = predicted.iter().map(|c| self.index(c)).collect::<Result<Vec<_>, _>>()?;
        if members.contains(&g) {
            self.counts[g].tp += 1;
        } else {
            self.counts[g].fn_ += 1;
        }
        let mut seen = Vec::with_capacity(members.len());
        for m in members {
            if m != g && !seen.contains(&m) {
                self.counts[m].fp += 1;
                seen.push(m);
            }
        }
        self.total += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionTally) -> Result<(), MetricsError> {
        if self.classes != other.classes {
            return Err(MetricsError::ClassSetMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
        self.total += other.total;
        Ok(())
    }
}

pub fn tally_single(golds: &[ClassId], preds: &[ClassId], classes: &[ClassId]) -> Result<ConfusionTally, MetricsError> {
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch { golds: golds.len(), preds: preds.len() });
    }
    let mut tally = ConfusionTally::new(classes);
    for (g, p) in golds.iter().zip(preds) {
        tally.record(g, p)?;
    }
    Ok(tally)
}

pub fn tally_topk(
    golds: &[ClassId],
    predsets: &[Vec<ClassId>],
    classes: &[ClassId],
) -> Result<ConfusionTally, MetricsError> {
    if golds.len() != predsets.len() {
        return Err(MetricsError::LengthMismatch { golds: golds.len(), preds: predsets.len() });
    }
    let mut tally = ConfusionTally::new(classes);
    for (g, s) in golds.iter().zip(predsets) {
        tally.record_topk(g, s)?;
    }
    Ok(tally)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ClassId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
    pub weighted: WeightedMetrics,
    /// Items left out of the tally because they could not be embedded.
    #[serde(default)]
    pub excluded: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 per class, with 0 for every undefined ratio, and
/// their support-weighted means.
pub fn prf(tally: &ConfusionTally) -> Result<MetricsReport, MetricsError> {
    if tally.total == 0 {
        return Err(MetricsError::EmptyTally);
    }
    let classes: Vec<ClassMetrics> = tally
        .classes
        .iter()
        .zip(&tally.counts)
        .map(|(class, c)| {
            let precision = ratio(c.tp, c.tp + c.fp);
            let recall = ratio(c.tp, c.tp + c.fn_);
            ClassMetrics { class: class.clone(), precision, recall, f1: harmonic(precision, recall), support: c.tp + c.fn_ }
        })
        .collect();

    let support: usize = classes.iter().map(|m| m.support).sum();
    let weighted_mean = |f: fn(&ClassMetrics) -> f64| {
        classes.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / support as f64
    };
    let weighted = WeightedMetrics {
        precision: weighted_mean(|m| m.precision),
        recall: weighted_mean(|m| m.recall),
        f1: weighted_mean(|m| m.f1),
        support,
    };
    Ok(MetricsReport { classes, weighted, excluded: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    #[serde(rename = "md")]
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}: expected csv or md")),
        }
    }
}

pub const CSV_HEADER: &str = "class,precision,recall,f1,support";

/// Renders a report with values rounded to two decimals.
pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            if report.classes.is_empty() {
                return out;
            }
            for m in &report.classes {
                writeln!(out, "{},{:.2},{:.2},{:.2},{}", m.class, m.precision, m.recall, m.f1, m.support).unwrap();
            }
            let w = &report.weighted;
            writeln!(out, "weighted,{:.2},{:.2},{:.2},{}", w.precision, w.recall, w.f1, w.support).unwrap();
            if report.excluded > 0 {
                writeln!(out, "# excluded: {}", report.excluded).unwrap();
            }
        }
        ReportFormat::Markdown => {
            out.push_str("| Class | P | R | F1 | Support |\n");
            out.push_str("|---|---:|---:|---:|---:|\n");
            if report.classes.is_empty() {
                return out;
            }
            for m in &report.classes {
                writeln!(
                    out,
                    "| {} | {:.2} | {:.2} | {:.2} | {} |",
                    m.class, m.precision, m.recall, m.f1, m.support
                )
                .unwrap();
            }
            let w = &report.weighted;
            writeln!(out, "| weighted | {:.2} | {:.2} | {:.2} | {} |", w.precision, w.recall, w.f1, w.support)
                .unwrap();
            if report.excluded > 0 {
                writeln!(out, "\nExcluded items: {}", report.excluded).unwrap();
            }
        }
    }
    out
}

/// Reads a CSV report written by [`render_report`]. Values carry the
/// two-decimal rounding of the file.
pub fn parse_report_csv(src: &str) -> Result<MetricsReport, MetricsError> {
    let parse_err = |e: &dyn std::fmt::Display| MetricsError::ParseError(e.to_string());
    let mut lines = src.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(MetricsError::ParseError(format!("missing header {CSV_HEADER:?}"))),
    }

    let mut classes = Vec::new();
    let mut weighted = None;
    let mut excluded = 0;
    for line in lines {
        if let Some(rest) = line.strip_prefix("# excluded:") {
            excluded = rest.trim().parse().map_err(|e| parse_err(&e))?;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [name, p, r, f1, support] = fields[..] else {
            return Err(MetricsError::ParseError(format!("expected 5 fields in {line:?}")));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(&e));
        let (precision, recall, f1) = (num(p)?, num(r)?, num(f1)?);
        let support = support.parse::<usize>().map_err(|e| parse_err(&e))?;
        if name == "weighted" {
            weighted = Some(WeightedMetrics { precision, recall, f1, support });
        } else {
            let class = ClassId::parse(name).ok_or_else(|| MetricsError::ParseError("empty class".into()))?;
            classes.push(ClassMetrics { class, precision, recall, f1, support });
        }
    }
    let weighted = weighted.unwrap_or(WeightedMetrics { precision: 0.0, recall: 0.0, f1: 0.0, support: 0 });
    Ok(MetricsReport { classes, weighted, excluded })
}
