use std::fmt;

/// Errors raised by scene construction, potential solves and samplers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty set")]
    EmptySet,
    #[error(
        "invalid radius {0}: must be positive, finite and dyadic with at most 30 fractional bits"
    )]
    InvalidRadius(f64),
    #[error("transient dimension required (d >= 3), got d = {0}")]
    TransientDimensionRequired(usize),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: invariant `{invariant}` violated ({detail})")]
    InvalidConfiguration {
        invariant: &'static str,
        detail: String,
    },
    #[error("ill-conditioned equilibrium system (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("equilibrium residual {residual:.3e} exceeds tolerance")]
    Residual { residual: f64 },
    #[error("negative probability {value:.3e} for {what}")]
    NegativeProbability { what: &'static str, value: f64 },
    #[error("interior start point {0}")]
    InteriorStartPoint(String),
    #[error("site {site} is not in {set}")]
    NotInSet { site: String, set: &'static str },
    #[error("null harmonic mass at {0}")]
    NullHarmonicMass(String),
    #[error("degenerate density: no eligible site has positive weight")]
    DegenerateDensity,
    #[error("inconsistent levels: {0}")]
    InconsistentLevels(String),
    #[error("truth table of length {found} does not match 2^{sites} outcomes")]
    TruthTableSize { found: usize, sites: usize },
    #[error("set of {0} sites is too large for an exact trace histogram (at most 20)")]
    TooManySites(usize),
    #[error("histogram with zero total")]
    ZeroTotal,
    #[error("linear solver did not converge ({iterations} iterations, residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(invariant: &'static str, detail: impl fmt::Display) -> Error {
        Error::InvalidConfiguration {
            invariant,
            detail: detail.to_string(),
        }
    }

    /// Short machine-readable kind, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptySet => "empty_set",
            Error::InvalidRadius(_) => "invalid_radius",
            Error::TransientDimensionRequired(_) => "transient_dimension_required",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidConfiguration { .. } => "invalid_configuration",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::Residual { .. } => "residual",
            Error::NegativeProbability { .. } => "negative_probability",
            Error::InteriorStartPoint(_) => "interior_start_point",
            Error::NotInSet { .. } => "not_in_set",
            Error::NullHarmonicMass(_) => "null_harmonic_mass",
            Error::DegenerateDensity => "degenerate_density",
            Error::InconsistentLevels(_) => "inconsistent_levels",
            Error::TruthTableSize { .. } => "truth_table_size",
            Error::TooManySites(_) => "too_many_sites",
            Error::ZeroTotal => "zero_total",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Parse { .. } => "parse",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
