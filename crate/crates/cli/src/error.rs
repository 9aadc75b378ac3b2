use std::fmt;
use std::path::Path;

/// A failure together with the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad input, bad flags or a failed stage: exit 2.
    User(String),
    /// A tile does not fit the memory budget: exit 3.
    Budget(String),
    /// A replayed run did not reproduce its recorded outputs: exit 1.
    Mismatch(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::User(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Mismatch(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) | CliError::Mismatch(m) => f.write_str(m),
            CliError::Budget(m) => write!(
                f,
                "{m}\nhint: pass a smaller --tile (e.g. --tile 256x256) or raise --memory-budget"
            ),
        }
    }
}

impl From<dffoct::Error> for CliError {
    fn from(e: dffoct::Error) -> Self {
        match e {
            dffoct::Error::MemoryBudget { .. } => CliError::Budget(e.to_string()),
            other => CliError::User(other.to_string()),
        }
    }
}
