use std::fmt;
use std::path::Path;

use gcnn_vmc::checkpoint::CheckpointError;
use gcnn_vmc::config::ConfigError;
use gcnn_vmc::ed::EdError;
use gcnn_vmc::gcnn::GcnnError;
use gcnn_vmc::vmc::VmcError;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
    /// Every check ran, at least one failed.
    Verification(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) | CliError::Verification(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
            CliError::Verification(_) => "verification",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) | CliError::Io(m) | CliError::Verification(m) => m,
        }
    }

    /// One-line JSON error record for stderr.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.message(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<GcnnError> for CliError {
    fn from(e: GcnnError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<EdError> for CliError {
    fn from(e: EdError) -> Self {
        match e {
            EdError::NoConvergence { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<VmcError> for CliError {
    fn from(e: VmcError) -> Self {
        match e {
            VmcError::Io(io) => CliError::Io(io.to_string()),
            VmcError::Schedule(_) | VmcError::Gcnn(_) | VmcError::NoPhaseMode => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
