use biascope_core::analysis::ReportError;
use biascope_core::ingest::IngestError;
use biascope_core::{MetricsError, PopulationError, SvccaError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn context(self, prefix: impl std::fmt::Display) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{prefix}: {m}")),
            CliError::Input(m) => CliError::Input(format!("{prefix}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{prefix}: {m}")),
        }
    }
}

fn svcca_is_numerical(e: &SvccaError) -> bool {
    matches!(e, SvccaError::IllConditioned { .. } | SvccaError::DegenerateLayer { .. })
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        let message = e.to_string();
        match e {
            IngestError::Activation { source, .. } if svcca_is_numerical(&source) => CliError::Numerical(message),
            IngestError::ActivationLayout { .. }
            | IngestError::Activation { .. }
            | IngestError::MisalignedPopulation { .. }
            | IngestError::EmptyPopulation { .. } => CliError::Validation(message),
            _ => CliError::Input(message),
        }
    }
}

impl From<SvccaError> for CliError {
    fn from(e: SvccaError) -> Self {
        if svcca_is_numerical(&e) {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        let unbounded = matches!(e, ReportError::Metrics { source: MetricsError::UnboundedDelta { .. }, .. });
        if e.is_numerical() || unbounded {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<PopulationError> for CliError {
    fn from(e: PopulationError) -> Self {
        CliError::Validation(e.to_string())
    }
}
