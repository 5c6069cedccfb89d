use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid sensitivity band at observation {index}: need 0 <= lower ({lower}) <= 1 <= upper ({upper})")]
    InvalidBand { index: usize, lower: f64, upper: f64 },

    #[error("band differs within conditioning group {group}")]
    BandVariesWithinGroup { group: usize },

    #[error("q = {q} is not a {tau}-quantile of the cell")]
    InconsistentQuantile { q: f64, tau: f64 },

    #[error("infinite upper likelihood-ratio cap is not supported here; use bound_infinite_cap")]
    InfiniteCap,

    #[error("cell {0} admits no weights with conditional mean one")]
    Infeasible(usize),

    #[error("perfect separation: logistic likelihood has no finite maximizer")]
    Separation,

    #[error("singular design matrix")]
    SingularDesign,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no observations on the {0} side of the cutoff")]
    EmptySide(&'static str),

    #[error("estimand undefined for manipulation share {0}")]
    UndefinedEstimand(f64),

    #[error("propensity {value} at observation {index} is outside (0, 1)")]
    PropensityRange { index: usize, value: f64 },

    #[error("{failed} of {total} bootstrap draws failed")]
    BootstrapUnstable { failed: usize, total: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            got,
            expected,
        })
    }
}
