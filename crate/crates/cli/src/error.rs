use serde_json::json;

/// Exit status for invalid input.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;
/// Exit status for filesystem failures.
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sshchain::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_usage() => EXIT_USAGE,
            CliError::Core(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_NUMERICAL => "numerical",
            _ => "io",
        }
    }

    /// One-line JSON report for stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "code": self.exit_code(), "message": self.to_string() } })
            .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_kind() {
        let num = CliError::Core(sshchain::Error::Numerical("eigensolver".into()));
        assert_eq!(num.exit_code(), EXIT_NUMERICAL);
        assert!(num.to_json().contains("\"numerical\""));
        let usage = CliError::Core(sshchain::Error::UnknownMetric("p9".into()));
        assert_eq!(usage.exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Io(std::io::Error::other("disk")).exit_code(), EXIT_IO);
    }
}
