//! Adapters that express regression-discontinuity, inverse-propensity and OLS
//! estimands as weighting problems.

pub mod ipw;
pub mod ols;
pub mod rd;

use serde::{Deserialize, Serialize};

use crate::bounds::{sharp_bound, BalanceLevel, BoundProblem, BoundResult, Direction, Grouping, SensitivityBand};
use crate::error::{check_len, Result};
use crate::nuisance::quantile::{nearest_level, GRID_SIZE};

/// What is assumed about the conditional support of `λY` when the balancing
/// level reaches 0 or 1 (an unbounded likelihood-ratio cap).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeSupport {
    /// The outcome has unbounded support: the extreme quantile is infinite.
    #[default]
    Unbounded,
    /// Use the observed extreme stored in the quantile grid.
    Observed,
}

/// How the conditioning cells `R` and their quantiles are obtained.
#[derive(Clone, Copy, Debug)]
pub enum Conditioning<'a> {
    /// Discrete cells; quantiles are exact within each cell.
    Cells(&'a [usize]),
    /// Per-observation quantile functions on the 101-level grid.
    Predicted {
        rows: &'a [[f64; GRID_SIZE]],
        support: OutcomeSupport,
    },
}

/// Lower and upper bounds of one estimand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimandBounds {
    pub lower: BoundResult,
    pub upper: BoundResult,
    /// Point estimate under no confounding (identity band).
    pub plug_in: f64,
}

impl EstimandBounds {
    pub fn interval(&self) -> (f64, f64) {
        (self.lower.value, self.upper.value)
    }

    pub fn is_finite(&self) -> bool {
        self.lower.finite && self.upper.finite
    }

    fn shifted(mut self, offset: f64) -> Self {
        for r in [&mut self.lower, &mut self.upper] {
            r.value += offset;
            r.plug_in += offset;
        }
        self.plug_in += offset;
        self
    }
}

/// Quantiles of each observation for one direction, read off predicted
/// quantile functions.
pub fn predicted_quantiles(
    problem: &BoundProblem,
    rows: &[[f64; GRID_SIZE]],
    support: OutcomeSupport,
) -> Result<Vec<f64>> {
    check_len("quantile rows", rows.len(), problem.len())?;
    let direction = problem.direction();
    let lambda = problem.lambda();
    Ok(problem
        .group_levels()
        .into_iter()
        .enumerate()
        .map(|(i, level)| match level {
            BalanceLevel::Degenerate => 0.0,
            BalanceLevel::Level(t) => {
                if support == OutcomeSupport::Unbounded && lambda[i] != 0.0 {
                    match direction {
                        Direction::Upper if t == 1.0 => return f64::INFINITY,
                        Direction::Lower if t == 0.0 => return f64::NEG_INFINITY,
                        _ => {}
                    }
                }
                rows[i][nearest_level(t)]
            }
        })
        .collect())
}

/// Both bounds of `offset + E[W λ Y]`.
pub fn bound_pair(
    lambda: Vec<f64>,
    outcome: Vec<f64>,
    band: SensitivityBand,
    conditioning: Conditioning<'_>,
    offset: f64,
) -> Result<EstimandBounds> {
    bound_pair_weighted(lambda, outcome, band, conditioning, offset, None)
}

/// [`bound_pair`] with frequency weights on the observations.
pub fn bound_pair_weighted(
    lambda: Vec<f64>,
    outcome: Vec<f64>,
    band: SensitivityBand,
    conditioning: Conditioning<'_>,
    offset: f64,
    weights: Option<&[f64]>,
) -> Result<EstimandBounds> {
    let grouping = match conditioning {
        Conditioning::Cells(keys) => Grouping::Keys(keys.to_vec()),
        Conditioning::Predicted { .. } => Grouping::PerObservation,
    };
    let mut upper = BoundProblem::new(lambda, outcome, band, Direction::Upper, grouping)?;
    if let Some(w) = weights {
        upper = upper.with_probabilities(w.to_vec())?;
    }
    let lower = upper.clone().with_direction(Direction::Lower);
    let solve = |p: &BoundProblem| -> Result<BoundResult> {
        match conditioning {
            Conditioning::Cells(_) => p.solve_exact(),
            Conditioning::Predicted { rows, support } => sharp_bound(p, &predicted_quantiles(p, rows, support)?),
        }
    };
    let bounds = EstimandBounds {
        plug_in: upper.plug_in(),
        upper: solve(&upper)?,
        lower: solve(&lower)?,
    };
    Ok(bounds.shifted(offset))
}
