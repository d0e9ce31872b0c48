//! Error type shared by the file-format, checkpoint, and CLI layers, with a
//! fixed mapping onto process exit codes.

use std::fmt;
use std::path::PathBuf;

use diffplace_core::CoreError;

/// Process exit codes: 0 success, 1 usage, 2 bad data, 3 numeric failure.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Everything that can go wrong outside the pure core: missing or malformed
/// files, invalid designs, and numeric failures propagated from the engine.
#[derive(Debug)]
pub enum CliError {
    /// A path named by the user or by an .aux file does not exist.
    FileNotFound { path: PathBuf },
    /// I/O failure other than nonexistence.
    Io { path: PathBuf, source: std::io::Error },
    /// A text-format file failed to parse; `line` is 1-based.
    Syntax { file: String, line: usize, msg: String },
    /// A net references a node name never declared in the .nodes file.
    DanglingPinReference { node: String, net: String, line: usize },
    /// JSON (design, dataset, or checkpoint) failed to parse or validate.
    Json { file: String, msg: String },
    /// TOML run configuration failed to parse or validate.
    Config { file: String, msg: String },
    /// The inputs parse but describe something unusable (wrong shapes,
    /// missing placement, unrepresentable netlist, invariant violations).
    Data(String),
    /// Command-line arguments are structurally valid but inconsistent.
    Usage(String),
    /// Propagated from the core engine.
    Core(CoreError),
}

impl CliError {
    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                CoreError::NonFinite { .. }
                | CoreError::NonFiniteState { .. }
                | CoreError::NonConvergence(_) => EXIT_NUMERIC,
                _ => EXIT_DATA,
            },
            _ => EXIT_DATA,
        }
    }

    /// Wrap a std I/O error for `path`, classifying nonexistence.
    pub fn from_io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::FileNotFound { path }
        } else {
            CliError::Io { path, source }
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::FileNotFound { path } => write!(f, "file not found: {}", path.display()),
            CliError::Io { path, source } => write!(f, "{}: {}", path.display(), source),
            CliError::Syntax { file, line, msg } => write!(f, "{file}:{line}: {msg}"),
            CliError::DanglingPinReference { node, net, line } => {
                write!(f, "line {line}: net {net} references undeclared node \"{node}\"")
            }
            CliError::Json { file, msg } => write!(f, "{file}: {msg}"),
            CliError::Config { file, msg } => write!(f, "{file}: {msg}"),
            CliError::Data(msg) => write!(f, "{msg}"),
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}
