//! Nuisance estimation: propensity scores and conditional quantile grids.

pub mod logistic;
pub mod quantile;

pub use logistic::{fit_logistic, fit_logistic_weighted, one_step_update, PropensityModel};
pub use quantile::{fit_quantile, fit_quantile_grid, nearest_level, QuantileGridModel, GRID_SIZE};
