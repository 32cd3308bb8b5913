use std::fmt;

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config values: exit 2.
    Usage(anyhow::Error),
    /// Input file or directory missing or unreadable: exit 3.
    Missing(anyhow::Error),
    /// Anything that should not happen on valid input: exit 4.
    Internal(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn missing(msg: impl fmt::Display) -> Self {
        CliError::Missing(anyhow::anyhow!("{msg}"))
    }

    /// Prefixes the message, keeping the class.
    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            CliError::Usage(e) => CliError::Usage(e.context(what.to_string())),
            CliError::Missing(e) => CliError::Missing(e.context(what.to_string())),
            CliError::Internal(e) => CliError::Internal(e.context(what.to_string())),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (CliError::Usage(e) | CliError::Missing(e) | CliError::Internal(e)) = self;
        write!(f, "{e:#}")
    }
}

impl From<aerocl::Error> for CliError {
    fn from(e: aerocl::Error) -> Self {
        use aerocl::Error as E;
        match e {
            E::Config(_) | E::MissingClass(_) => CliError::Usage(e.into()),
            E::Parse { .. } | E::Version { .. } => CliError::Missing(e.into()),
            E::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => CliError::Missing(e.into()),
            _ => CliError::Internal(e.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Missing(e.into())
        } else {
            CliError::Internal(e.into())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
