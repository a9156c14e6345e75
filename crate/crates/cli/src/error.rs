use thiserror::Error;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Partial = 1,
    Usage = 2,
    Data = 3,
    Numerical = 4,
}

/// Failures raised by the command layer itself.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    CliError::Usage(msg.into()).into()
}

pub fn data(msg: impl Into<String>) -> anyhow::Error {
    CliError::Data(msg.into()).into()
}

/// Maps an error chain to its exit status; the first recognized cause wins.
pub fn exit_for(err: &anyhow::Error) -> Exit {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => Exit::Usage,
                CliError::Data(_) => Exit::Data,
                CliError::Numerical(_) => Exit::Numerical,
            };
        }
        if let Some(e) = cause.downcast_ref::<simplex_core::Error>() {
            use simplex_core::Error as E;
            return match e {
                E::InvalidArgument(_) => Exit::Usage,
                E::DimensionMismatch { .. } | E::InvalidData(_) | E::Parse { .. } | E::Io { .. } => Exit::Data,
                E::Degenerate(_) | E::Numerical(_) => Exit::Numerical,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return Exit::Data;
        }
    }
    Exit::Numerical
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn classification_follows_the_chain() {
        let e = anyhow::Error::from(simplex_core::Error::Numerical("x".into())).context("fitting");
        assert_eq!(exit_for(&e), Exit::Numerical);
        let e: anyhow::Result<()> = Err(usage("bad flag"));
        assert_eq!(exit_for(&e.context("outer").unwrap_err()), Exit::Usage);
        let e = anyhow::Error::from(simplex_core::Error::DimensionMismatch {
            expected: 1,
            actual: 2,
            context: "t",
        });
        assert_eq!(exit_for(&e), Exit::Data);
        assert_eq!(exit_for(&data("d")), Exit::Data);
    }
}
