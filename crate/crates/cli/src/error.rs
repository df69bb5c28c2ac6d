use qinfluence::dynmap::DynMapError;
use qinfluence::propagator::PropagatorError;
use qinfluence::spectral::SpectralError;
use qinfluence::tcl2::Tcl2Error;
use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("resources: {0}")]
    Resources(String),
    #[error("analysis input: {0}")]
    Analysis(String),
    #[error("regime: {0}")]
    Regime(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Resources(_) => 3,
            CliError::Analysis(_) => 4,
            CliError::Regime(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Other(_) => "error",
            CliError::Config(_) => "config",
            CliError::Resources(_) => "resources",
            CliError::Analysis(_) => "analysis",
            CliError::Regime(_) => "regime",
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(format!("json: {e}"))
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Quadrature(_) | SpectralError::Csv(_) => CliError::Other(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<PropagatorError> for CliError {
    fn from(e: PropagatorError) -> Self {
        match e {
            PropagatorError::BudgetExceeded { .. } => CliError::Resources(e.to_string()),
            PropagatorError::InvalidSpec(_) | PropagatorError::InvalidSettings(_) => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<DynMapError> for CliError {
    fn from(e: DynMapError) -> Self {
        CliError::Analysis(e.to_string())
    }
}

impl From<Tcl2Error> for CliError {
    fn from(e: Tcl2Error) -> Self {
        match e {
            Tcl2Error::Overdamped { .. } | Tcl2Error::Inconsistent { .. } | Tcl2Error::SingularPrincipalValue { .. } => {
                CliError::Regime(e.to_string())
            }
            Tcl2Error::DynMap(e) => e.into(),
            Tcl2Error::Spectral(e) => e.into(),
            Tcl2Error::Propagator(e) => e.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}
