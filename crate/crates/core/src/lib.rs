//! Sharp sensitivity bounds for linear estimands under likelihood-ratio bands.

pub mod applications;
pub mod bounds;
pub mod error;
pub mod inference;
pub mod nuisance;
pub mod oracle;
pub mod simlab;

pub use bounds::{
    adversarial_effect, bound_infinite_cap, discrete_quantile, mass_point_alpha, optimal_weights,
    sharp_bound, tau_balance, uncentered_bound, BalanceLevel, BoundProblem, BoundResult, Direction,
    Grouping, OptimalWeights, SensitivityBand,
};
pub use error::{Error, Result};
