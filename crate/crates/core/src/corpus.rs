//! PROMISE NFR and SecReq loaders and task construction.
//!
//! Both loaders expect a canonical CSV layout (see README); mirrors of the
//! public datasets that use other layouts must be converted first.
//!
//! ```text
//! PROMISE: id,project,class,text   class in F A L LF MN O PE SC SE US FT PO
//! SecReq:  id,project,label,text   label in sec nonsec, project in ePurse CPN GPS
//! ```

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelspace::ClassId;

pub const PROMISE_CODES: [&str; 12] = ["F", "A", "L", "LF", "MN", "O", "PE", "SC", "SE", "US", "FT", "PO"];
pub const SECREQ_PROJECTS: [&str; 3] = ["ePurse", "CPN", "GPS"];

/// The four largest NFR classes, in label-configuration order.
pub const TOP4_NFR: [&str; 4] = ["US", "SE", "PE", "O"];
/// Every NFR class except Portability, in label-configuration order.
pub const ALL_NFR: [&str; 10] = ["US", "SE", "PE", "O", "LF", "L", "FT", "MN", "SC", "A"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("cannot read dataset: {0}")]
    Io(String),
    #[error("row {row}: {reason}")]
    ParseError { row: usize, reason: String },
    #[error("row {row}: unknown class code {code:?}")]
    UnknownClassCode { row: usize, code: String },
    #[error("row {row}: unknown project {project:?}")]
    UnknownProject { row: usize, project: String },
    #[error("row {row}: unknown security label {label:?}")]
    UnknownLabel { row: usize, label: String },
    #[error("task {0} selects no items")]
    EmptySelection(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("item {id} has class {gold}, which does not belong to the dataset of task {task}")]
    ForeignItem { id: String, gold: ClassId, task: String },
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub project: Option<String>,
    pub text: String,
    pub gold: ClassId,
}

#[derive(Debug, Deserialize)]
struct PromiseRow {
    id: String,
    project: String,
    class: String,
    text: String,
}

#[derive(Debug, Deserialize)]
struct SecReqRow {
    id: String,
    project: String,
    label: String,
    text: String,
}

fn open(path: &Path) -> Result<File, CorpusError> {
    File::open(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(
    reader: R,
    header: [&str; 4],
) -> Result<Vec<(usize, T)>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let got = rdr.headers().map_err(|e| CorpusError::ParseError { row: 0, reason: e.to_string() })?;
    if got.iter().map(str::trim).ne(header) {
        return Err(CorpusError::ParseError {
            row: 0,
            reason: format!("expected header {}, found {}", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
        });
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 1;
            rec.map(|r| (row, r)).map_err(|e| CorpusError::ParseError { row, reason: e.to_string() })
        })
        .collect()
}

fn checked_text(row: usize, text: &str) -> Result<String, CorpusError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(CorpusError::ParseError { row, reason: "requirement text is empty".into() });
    }
    Ok(text.to_owned())
}

fn checked_id(row: usize, id: &str) -> Result<String, CorpusError> {
    let id = id.trim();
    if id.is_empty() {
        return Err(CorpusError::ParseError { row, reason: "requirement id is empty".into() });
    }
    Ok(id.to_owned())
}

pub fn load_promise(path: impl AsRef<Path>) -> Result<Vec<Requirement>, CorpusError> {
    parse_promise(open(path.as_ref())?)
}

pub fn parse_promise<R: Read>(reader: R) -> Result<Vec<Requirement>, CorpusError> {
    read_rows::<_, PromiseRow>(reader, ["id", "project", "class", "text"])?
        .into_iter()
        .map(|(row, r)| {
            let code = r.class.trim();
            if !PROMISE_CODES.contains(&code) {
                return Err(CorpusError::UnknownClassCode { row, code: code.to_owned() });
            }
            let project = r.project.trim();
            Ok(Requirement {
                id: checked_id(row, &r.id)?,
                project: (!project.is_empty()).then(|| project.to_owned()),
                text: checked_text(row, &r.text)?,
                gold: ClassId::new(code),
            })
        })
        .collect()
}

pub fn load_secreq(path: impl AsRef<Path>) -> Result<Vec<Requirement>, CorpusError> {
    parse_secreq(open(path.as_ref())?)
}

pub fn parse_secreq<R: Read>(reader: R) -> Result<Vec<Requirement>, CorpusError> {
    read_rows::<_, SecReqRow>(reader, ["id", "project", "label", "text"])?
        .into_iter()
        .map(|(row, r)| {
            let project = r.project.trim();
            if !SECREQ_PROJECTS.contains(&project) {
                return Err(CorpusError::UnknownProject { row, project: project.to_owned() });
            }
            let gold = match r.label.trim() {
                "sec" => ClassId::new("SEC"),
                "nonsec" => ClassId::new("NONSEC"),
                other => return Err(CorpusError::UnknownLabel { row, label: other.to_owned() }),
            };
            Ok(Requirement {
                id: checked_id(row, &r.id)?,
                project: Some(project.to_owned()),
                text: checked_text(row, &r.text)?,
                gold,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Promise,
    SecReq,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scope {
    /// US, SE, PE and O.
    Top4,
    /// All NFR classes, or the whole SecReq set.
    All,
    /// One SecReq project.
    Project(String),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Top4 => f.write_str("top4"),
            Scope::All => f.write_str("all"),
            Scope::Project(p) => write!(f, "project:{p}"),
        }
    }
}

impl Scope {
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        match s {
            "top4" => Ok(Scope::Top4),
            "all" => Ok(Scope::All),
            _ => match s.strip_prefix("project:") {
                Some(p) if SECREQ_PROJECTS.contains(&p) => Ok(Scope::Project(p.to_owned())),
                Some(p) => Err(CorpusError::InvalidTask(format!("unknown project {p:?}"))),
                None => Err(CorpusError::InvalidTask(format!("unknown scope {s:?}"))),
            },
        }
    }

    fn nfr_classes(&self) -> Result<&'static [&'static str], CorpusError> {
        match self {
            Scope::Top4 => Ok(&TOP4_NFR),
            Scope::All => Ok(&ALL_NFR),
            Scope::Project(_) => Err(CorpusError::InvalidTask("project scopes apply to the security task only".into())),
        }
    }
}

/// Which classification task to build.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TaskKind {
    FrNfr,
    NfrBinary { class: ClassId, scope: Scope },
    NfrMulticlass { scope: Scope },
    NfrMultilabel { scope: Scope, k: usize },
    Security { scope: Scope },
}

impl TaskKind {
    /// Builds a task from CLI-style parts.
    ///
    /// `name` is one of `fr-nfr`, `nfr-binary:<CLASS>`, `nfr-multiclass`,
    /// `nfr-multilabel`, `security`. NFR tasks default to scope `top4`, the
    /// security task to `all`. Multi-label `k` defaults to 2 for `top4` and
    /// 3 for `all`; `k` is rejected for every other task.
    pub fn from_parts(name: &str, scope: Option<&str>, k: Option<usize>) -> Result<Self, CorpusError> {
        let scope = scope.map(Scope::parse).transpose()?;
        if k.is_some() && name != "nfr-multilabel" {
            return Err(CorpusError::InvalidTask("--topk applies to nfr-multilabel only".into()));
        }
        let nfr_scope = |scope: Option<Scope>| -> Result<Scope, CorpusError> {
            let scope = scope.unwrap_or(Scope::Top4);
            scope.nfr_classes()?;
            Ok(scope)
        };
        let kind = match name {
            "fr-nfr" => match scope {
                None | Some(Scope::All) => TaskKind::FrNfr,
                Some(s) => return Err(CorpusError::InvalidTask(format!("fr-nfr does not take scope {s}"))),
            },
            "nfr-multiclass" => TaskKind::NfrMulticlass { scope: nfr_scope(scope)? },
            "nfr-multilabel" => {
                let scope = nfr_scope(scope)?;
                let k = k.unwrap_or(match scope {
                    Scope::Top4 => 2,
                    _ => 3,
                });
                if k == 0 {
                    return Err(CorpusError::InvalidTask("k must be at least 1".into()));
                }
                TaskKind::NfrMultilabel { scope, k }
            }
            "security" => match scope {
                None => TaskKind::Security { scope: Scope::All },
                Some(Scope::Top4) => return Err(CorpusError::InvalidTask("security does not take scope top4".into())),
                Some(s) => TaskKind::Security { scope: s },
            },
            other => match other.strip_prefix("nfr-binary:") {
                Some(code) => {
                    let scope = nfr_scope(scope)?;
                    if !scope.nfr_classes()?.contains(&code) {
                        return Err(CorpusError::InvalidTask(format!("class {code:?} is not in scope {scope}")));
                    }
                    TaskKind::NfrBinary { class: ClassId::new(code), scope }
                }
                None => return Err(CorpusError::InvalidTask(format!("unknown task {other:?}"))),
            },
        };
        Ok(kind)
    }

    pub fn dataset(&self) -> Dataset {
        match self {
            TaskKind::Security { .. } => Dataset::SecReq,
            _ => Dataset::Promise,
        }
    }

    /// Ordered class set of the task.
    pub fn classes(&self) -> Vec<ClassId> {
        let codes: Vec<&str> = match self {
            TaskKind::FrNfr => vec!["FR", "NFR"],
            TaskKind::NfrBinary { class, .. } => vec![class.code(), "OTHER"],
            TaskKind::NfrMulticlass { scope } | TaskKind::NfrMultilabel { scope, .. } => {
                scope.nfr_classes().map(<[_]>::to_vec).unwrap_or_default()
            }
            TaskKind::Security { .. } => vec!["SEC", "NONSEC"],
        };
        codes.into_iter().map(ClassId::new).collect()
    }

    /// `k` for multi-label tasks, `None` for single-label ones.
    pub fn top_k(&self) -> Option<usize> {
        match self {
            TaskKind::NfrMultilabel { k, .. } => Some(*k),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::FrNfr => f.write_str("fr-nfr"),
            TaskKind::NfrBinary { class, scope } => write!(f, "nfr-binary:{class} ({scope})"),
            TaskKind::NfrMulticlass { scope } => write!(f, "nfr-multiclass ({scope})"),
            TaskKind::NfrMultilabel { scope, k } => write!(f, "nfr-multilabel ({scope}, k={k})"),
            TaskKind::Security { scope } => write!(f, "security ({scope})"),
        }
    }
}

/// A task with its class set and (remapped) items.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub classes: Vec<ClassId>,
    pub items: Vec<Requirement>,
}

impl TaskInstance {
    /// Number of items per class, in class order.
    pub fn class_counts(&self) -> Vec<(ClassId, usize)> {
        self.classes
            .iter()
            .map(|c| (c.clone(), self.items.iter().filter(|r| &r.gold == c).count()))
            .collect()
    }
}

/// Selects and relabels items for `kind`. Input items are left untouched.
pub fn build_task(kind: &TaskKind, items: &[Requirement]) -> Result<TaskInstance, CorpusError> {
    let foreign = |r: &Requirement| CorpusError::ForeignItem {
        id: r.id.clone(),
        gold: r.gold.clone(),
        task: kind.to_string(),
    };
    let check_dataset = |r: &Requirement| -> Result<(), CorpusError> {
        let ok = match kind.dataset() {
            Dataset::Promise => PROMISE_CODES.contains(&r.gold.code()),
            Dataset::SecReq => matches!(r.gold.code(), "SEC" | "NONSEC"),
        };
        if ok {
            Ok(())
        } else {
            Err(foreign(r))
        }
    };
    let relabel = |r: &Requirement, gold: &str| Requirement { gold: ClassId::new(gold), ..r.clone() };

    let mut selected = Vec::new();
    for r in items {
        check_dataset(r)?;
        let code = r.gold.code();
        let mapped = match kind {
            TaskKind::FrNfr => Some(relabel(r, if code == "F" { "FR" } else { "NFR" })),
            TaskKind::NfrBinary { class, scope } => {
                let classes = scope.nfr_classes()?;
                classes.contains(&code).then(|| relabel(r, if code == class.code() { code } else { "OTHER" }))
            }
            TaskKind::NfrMulticlass { scope } | TaskKind::NfrMultilabel { scope, .. } => {
                scope.nfr_classes()?.contains(&code).then(|| r.clone())
            }
            TaskKind::Security { scope } => match scope {
                Scope::All => Some(r.clone()),
                Scope::Project(p) => (r.project.as_deref() == Some(p.as_str())).then(|| r.clone()),
                Scope::Top4 => return Err(CorpusError::InvalidTask("security does not take scope top4".into())),
            },
        };
        selected.extend(mapped);
    }
    if selected.is_empty() {
        return Err(CorpusError::EmptySelection(kind.to_string()));
    }
    Ok(TaskInstance { kind: kind.clone(), classes: kind.classes(), items: selected })
}
