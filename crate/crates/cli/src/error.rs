use std::fmt;
use std::path::Path;

/// Usage errors exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn runtime(msg: impl fmt::Display) -> Self {
        Self::Runtime(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage: {m}"),
            Self::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<stcnn_core::Error> for CliError {
    fn from(e: stcnn_core::Error) -> Self {
        match e {
            stcnn_core::Error::Config(_) | stcnn_core::Error::Grid(_) | stcnn_core::Error::Geometry(_) => {
                Self::Usage(e.to_string())
            }
            e => Self::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.into())
    }
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("no such file: {}", path.display())))
    }
}
