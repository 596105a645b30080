use std::fmt;

/// Pipeline stage reported by [`Error::Stage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Posterior,
    Copies,
    Statistic,
    Marginal,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Posterior => "posterior sampling",
            Stage::Copies => "copy sampling",
            Stage::Statistic => "statistic",
            Stage::Marginal => "marginal approximation",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite statistic")]
    NonFiniteStatistic,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Laplace requires positive definite Hessian")]
    NotPositiveDefinite,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite objective encountered (last iterate {last:?})")]
    NonFiniteObjective { last: Vec<f64> },

    #[error("target density is not finite at the initial state")]
    InitOutOfSupport,

    #[error("{0} did not converge")]
    NoConvergence(String),

    #[error("enumeration of {0} states exceeds the cap of 1e6; reduce |X| or B")]
    EnumerationTooLarge(u128),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
