use thiserror::Error;

/// Errors shared by all analysis modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value} (expected {domain})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// The characteristic equation of the vacation-level recursion has two
    /// numerically indistinguishable roots; the closed form degenerates.
    #[error("degenerate characteristic roots (|x1 - x2| = {gap:e})")]
    DegenerateRoots { gap: f64 },

    /// The closed-form stationary distribution only covers thresholds with
    /// n0 >= 1 and n1 >= n0 + 2; other shapes are solved numerically.
    #[error("no closed-form stationary distribution for thresholds (n0={n0}, n1={n1})")]
    UnsupportedThresholdShape { n0: i64, n1: i64 },

    #[error("numerically unstable evaluation ({what})")]
    NumericalInstability { what: &'static str },

    /// The busy-period traffic ratio is at or above 1: no stationary regime.
    #[error("traffic ratio {ratio} reaches the stability limit")]
    Unstable { ratio: f64 },

    #[error("division hazard: {what} vanishes")]
    DivisionHazard { what: &'static str },

    #[error("singular stationary system (chain is not irreducible)")]
    SingularSystem,

    #[error("root search did not converge within {iterations} iterations")]
    ConvergenceFailure { iterations: u32 },

    #[error("insufficient samples: observed {got}, need at least {need}")]
    InsufficientSamples { got: u64, need: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
