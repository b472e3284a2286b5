use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid combination of configuration values (stream ranges, sizes, seeds).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input to an operation (grids, dimensions, horizons, bounds).
    #[error("input error: {0}")]
    Input(String),

    /// The intensity exceeded the height bound of the dominating Poisson field.
    #[error("intensity bound violated in noise dimension {dim} at t = {time}: {value} > {bound}")]
    IntensityBound {
        dim: usize,
        time: f64,
        value: f64,
        bound: f64,
    },

    /// A state coordinate became non-finite.
    #[error("numerical divergence at t = {time}")]
    Divergence { time: f64 },

    /// Argument outside the domain of a closed-form map.
    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
