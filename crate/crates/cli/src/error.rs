use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("malformed input: {0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        })
    }
}

impl From<de_core::Error> for CliError {
    fn from(e: de_core::Error) -> Self {
        use de_core::Error::*;
        match e {
            InvalidConfig(_) | PlacementFailure { .. } | InvalidSkeleton(_) => CliError::Usage(e.to_string()),
            Format(_) | Json(_) | Io(_) | DimensionMismatch { .. } | UnknownJoint(_) | NoLabeledJoints
            | MissingHeadBox { .. } | NoVisibleJoints => CliError::Input(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_classes() {
        let usage: CliError = de_core::Error::InvalidConfig("x".into()).into();
        assert!(matches!(usage, CliError::Usage(_)));
        let input: CliError = de_core::Error::Format("x".into()).into();
        assert!(matches!(input, CliError::Input(_)));
        assert_eq!(CliError::Internal("x".into()).exit_code(), ExitCode::from(3));
    }
}
