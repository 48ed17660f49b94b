use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Input { path: String, source: coilforce::Error },
    #[error("{0}")]
    Core(#[from] coilforce::Error),
    #[error("writing output: {0}")]
    Output(String),
}

impl CliError {
    /// 1 for usage, configuration and input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use coilforce::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Input { .. } | CliError::Output(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidInput(_) | E::Parse { .. } | E::GridMismatch(_) | E::Io(_) | E::Json(_) => 1,
                E::SurfacesIntersect { .. } | E::DegenerateSurface { .. } => 1,
                E::NodeCollision { .. } | E::Rupture { .. } | E::Numerical(_) => 2,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
