use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("correlation matrix is not positive semi-definite (smallest eigenvalue {eigenvalue:.3e})")]
    NotPositiveSemiDefinite { eigenvalue: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("portfolio has zero volatility, risk contributions are undefined")]
    DegeneratePortfolio,

    #[error("invalid bounds for asset {index}: lower {lower} exceeds upper {upper}")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("linear system is rank deficient or inconsistent: {0}")]
    RankDeficient(String),

    #[error("invalid solver options: {0}")]
    InvalidOptions(String),

    #[error("{stage} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("lambda bracket [{lower}, {upper}] does not straddle the budget constraint (sum-1 = {f_lower:.3e} and {f_upper:.3e})")]
    Bracket {
        lower: f64,
        upper: f64,
        f_lower: f64,
        f_upper: f64,
    },
}

impl Error {
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::Bracket { .. })
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            found,
        })
    }
}
