use thiserror::Error;

/// Errors surfaced by scenario construction, the exchange iteration, the
/// spectral oracle and the formation controller.
#[derive(Debug, Error)]
pub enum Error {
    #[error("robots {0} and {1} share the same position")]
    CoincidentRobots(usize, usize),

    #[error("attenuation graph is disconnected ({components} components)")]
    DisconnectedSwarm { components: usize },

    #[error("placed only {placed} of {requested} robots within the retry budget")]
    PlacementFailure { placed: usize, requested: usize },

    #[error("robot {robot} would transfer {sum} of its particles in one round (must stay below 1)")]
    ExcessiveTransfer { robot: usize, sum: f64 },

    #[error("robot {robot} would send more particles than it owns (c*k1/k2 = {ratio})")]
    OverdrawnRobot { robot: usize, ratio: f64 },

    #[error("transition matrix is not irreducible")]
    NotIrreducible,

    #[error("eigensolver did not reach the requested residual within {iterations} iterations")]
    NoConvergence { iterations: u64 },

    #[error("localization did not converge within the budget of {budget} iterations")]
    MaxIterationsExceeded { budget: u64 },

    #[error("target accuracy {delta0} is outside (0, 0.5]")]
    InvalidAccuracy { delta0: f64 },

    #[error("position lies exactly on the target boundary")]
    DegenerateBoundary,

    #[error("swarm fragmented at formation step {step}")]
    SwarmFragmented { step: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error in {file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
