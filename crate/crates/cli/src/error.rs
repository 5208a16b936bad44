use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Solver(#[from] riskbudget::Error),

    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input(message.into())
    }

    /// 2 for a solver that failed to converge, 1 for anything wrong with the input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(e) if e.is_non_convergence() => 2,
            _ => 1,
        }
    }

    /// Extra diagnostic lines, such as the last iterate of a failed solve.
    pub fn details(&self) -> Vec<String> {
        match self {
            CliError::Solver(riskbudget::Error::NonConvergence {
                residual,
                last_iterate,
                ..
            }) => {
                let x: Vec<String> = last_iterate.iter().map(|v| format!("{:.4}", 100.0 * v)).collect();
                vec![
                    format!("residual: {residual:.3e}"),
                    format!("last iterate (%): [{}]", x.join(", ")),
                ]
            }
            CliError::Solver(riskbudget::Error::Bracket {
                lower,
                upper,
                f_lower,
                f_upper,
            }) => vec![format!(
                "sum x - 1 is {f_lower:.3e} at lambda = {lower:.6e} and {f_upper:.3e} at lambda = {upper:.6e}; \
                 the constraints may exclude every fully invested portfolio"
            )],
            _ => Vec::new(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
