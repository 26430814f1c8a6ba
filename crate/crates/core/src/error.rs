use serde::{Deserialize, Serialize};
use std::fmt;

/// Coarse error classification shared by the service, the client and the
/// CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    /// Bad arguments or an impossible request.
    Usage,
    /// A dataset, configuration, lexicon or tag file is malformed.
    Data,
    /// The embedding backend failed or misbehaved.
    Backend,
}

impl ErrorKind {
    /// Process exit code for the CLI.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Backend => 3,
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Backend => "backend",
        })
    }
}
