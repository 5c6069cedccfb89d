//! Sharp regression discontinuity with one-sided manipulation into treatment.
//!
//! Observations in `(c, c + h]` are treated and in `[c - h, c)` untreated. A
//! share `τ` of the treated side manipulated its way there; the others are
//! randomized evenly around the cutoff, so `τ` is identified from the excess
//! mass above the cutoff.

use serde::{Deserialize, Serialize};

use super::{bound_pair, Conditioning, EstimandBounds};
use crate::bounds::SensitivityBand;
use crate::error::{check_len, Error, Result};

const ABOVE: usize = 0;
const BELOW: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdConfig {
    pub cutoff: f64,
    pub bandwidth: f64,
    /// Band on the manipulation odds given `Y(1)`, relative to its average.
    pub lambda1_minus: f64,
    pub lambda1_plus: f64,
    /// Band on the manipulation odds given `Y(0)`, relative to its average.
    pub lambda0_minus: f64,
    pub lambda0_plus: f64,
    /// Overrides the estimated manipulation share.
    #[serde(default)]
    pub tau: Option<f64>,
}

impl RdConfig {
    /// Exogenous manipulation: every band is `[1, 1]`.
    pub fn exogenous(cutoff: f64, bandwidth: f64) -> Self {
        Self {
            cutoff,
            bandwidth,
            lambda1_minus: 1.0,
            lambda1_plus: 1.0,
            lambda0_minus: 1.0,
            lambda0_plus: 1.0,
            tau: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite() && self.cutoff.is_finite()) {
            return Err(Error::InvalidInput("cutoff must be finite and bandwidth positive".into()));
        }
        for (lo, hi) in [
            (self.lambda1_minus, self.lambda1_plus),
            (self.lambda0_minus, self.lambda0_plus),
        ] {
            if !((0.0..=1.0).contains(&lo) && hi >= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "manipulation band ({lo}, {hi}) needs 0 <= lower <= 1 <= upper"
                )));
            }
        }
        if let Some(t) = self.tau {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::InvalidInput(format!("tau must lie in [0, 1), got {t}")));
            }
        }
        Ok(())
    }
}

/// Point-identified quantities near the cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdEstimates {
    /// Manipulator share just above the cutoff.
    pub tau: f64,
    /// Manipulator share among all observations near the cutoff.
    pub tau0: f64,
    pub mean_above: f64,
    pub mean_below: f64,
    pub p_above: f64,
    pub p_below: f64,
    pub n_above: usize,
    pub n_below: usize,
}

/// Share of manipulators among all units near the cutoff, `τ / (2 - τ)`.
pub fn tau0_from_tau(tau: f64) -> f64 {
    tau / (2.0 - tau)
}

/// Inverse of [`tau0_from_tau`]: `2 τ0 / (1 + τ0)`.
pub fn tau_from_tau0(tau0: f64) -> f64 {
    2.0 * tau0 / (1.0 + tau0)
}

/// Excess-mass estimate `max(0, 1 - N⁻ / N⁺)` from window counts.
pub fn tau_from_counts(n_above: usize, n_below: usize) -> Result<f64> {
    if n_above == 0 {
        return Err(Error::EmptySide("above"));
    }
    if n_below == 0 {
        return Err(Error::EmptySide("below"));
    }
    Ok((1.0 - n_below as f64 / n_above as f64).max(0.0))
}

fn side(x: f64, cutoff: f64, h: f64) -> Option<usize> {
    if x > cutoff && x <= cutoff + h {
        Some(ABOVE)
    } else if x < cutoff && x >= cutoff - h {
        Some(BELOW)
    } else {
        None
    }
}

/// Manipulation share estimated from the running variable alone.
pub fn rd_estimate_tau(x: &[f64], cutoff: f64, bandwidth: f64) -> Result<f64> {
    let mut counts = [0usize; 2];
    for &v in x {
        if let Some(s) = side(v, cutoff, bandwidth) {
            counts[s] += 1;
        }
    }
    tau_from_counts(counts[ABOVE], counts[BELOW])
}

/// Observations inside the window, with their side.
struct Window {
    y: Vec<f64>,
    side: Vec<usize>,
    estimates: RdEstimates,
}

fn window(x: &[f64], y: &[f64], config: &RdConfig) -> Result<Window> {
    check_len("outcome", y.len(), x.len())?;
    config.validate()?;
    let mut wy = Vec::new();
    let mut ws = Vec::new();
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for (&xi, &yi) in x.iter().zip(y) {
        if let Some(s) = side(xi, config.cutoff, config.bandwidth) {
            if !yi.is_finite() {
                return Err(Error::InvalidInput("outcome must be finite".into()));
            }
            wy.push(yi);
            ws.push(s);
            sums[s] += yi;
            counts[s] += 1;
        }
    }
    let estimated = tau_from_counts(counts[ABOVE], counts[BELOW])?;
    let tau = config.tau.unwrap_or(estimated);
    let n = (counts[ABOVE] + counts[BELOW]) as f64;
    let estimates = RdEstimates {
        tau,
        tau0: tau0_from_tau(tau),
        mean_above: sums[ABOVE] / counts[ABOVE] as f64,
        mean_below: sums[BELOW] / counts[BELOW] as f64,
        p_above: counts[ABOVE] as f64 / n,
        p_below: counts[BELOW] as f64 / n,
        n_above: counts[ABOVE],
        n_below: counts[BELOW],
    };
    Ok(Window { y: wy, side: ws, estimates })
}

/// Bounds plus the point-identified inputs they were built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdBounds {
    pub estimates: RdEstimates,
    pub bounds: EstimandBounds,
}

/// Band on the treated side: `[1/(1-τ+τΛ₁⁺), 1/(1-τ+τΛ₁⁻)]`.
pub fn clate_band(tau: f64, lambda1_minus: f64, lambda1_plus: f64) -> (f64, f64) {
    (
        1.0 / (1.0 - tau + tau * lambda1_plus),
        1.0 / (1.0 - tau + tau * lambda1_minus),
    )
}

/// Assembles `offset + E[W λ Y]` over the window with side-specific `λ` and bands.
fn side_problem(
    w: &Window,
    lambda_side: [f64; 2],
    band_side: [(f64, f64); 2],
    offset: f64,
) -> Result<EstimandBounds> {
    let lambda = w.side.iter().map(|&s| lambda_side[s]).collect();
    let lower = w.side.iter().map(|&s| band_side[s].0).collect();
    let upper = w.side.iter().map(|&s| band_side[s].1).collect();
    bound_pair(
        lambda,
        w.y.clone(),
        SensitivityBand::new(lower, upper)?,
        Conditioning::Cells(&w.side),
        offset,
    )
}

/// Effect among non-manipulators: `E[Y(1) | M = 0] - E[Y | X = c⁻]`.
pub fn rd_clate_bounds(x: &[f64], y: &[f64], config: &RdConfig) -> Result<RdBounds> {
    let w = window(x, y, config)?;
    let e = &w.estimates;
    let bounds = side_problem(
        &w,
        [1.0 / e.p_above, 0.0],
        [clate_band(e.tau, config.lambda1_minus, config.lambda1_plus), (1.0, 1.0)],
        -e.mean_below,
    )?;
    Ok(RdBounds { estimates: w.estimates, bounds })
}

/// Effect on the treated side: `ȳ⁺ - τ E[Y(0) | M = 1] - (1-τ) ȳ⁻`.
pub fn rd_catt_bounds(x: &[f64], y: &[f64], config: &RdConfig) -> Result<RdBounds> {
    let w = window(x, y, config)?;
    let e = &w.estimates;
    let bounds = side_problem(
        &w,
        [0.0, -e.tau / e.p_below],
        [(1.0, 1.0), (config.lambda0_minus, config.lambda0_plus)],
        e.mean_above - (1.0 - e.tau) * e.mean_below,
    )?;
    Ok(RdBounds { estimates: w.estimates, bounds })
}

/// Effect at the cutoff over everyone:
/// `ȳ⁺/(2-τ) + (1-τ)/(2-τ) E[Y(1)|M=0] - τ/(2-τ) E[Y(0)|M=1] - 2(1-τ)/(2-τ) ȳ⁻`.
pub fn rd_cate_bounds(x: &[f64], y: &[f64], config: &RdConfig) -> Result<RdBounds> {
    let w = window(x, y, config)?;
    let e = &w.estimates;
    let t = e.tau;
    let bounds = side_problem(
        &w,
        [(1.0 - t) / (2.0 - t) / e.p_above, -t / (2.0 - t) / e.p_below],
        [
            clate_band(t, config.lambda1_minus, config.lambda1_plus),
            (config.lambda0_minus, config.lambda0_plus),
        ],
        e.mean_above / (2.0 - t) - 2.0 * (1.0 - t) / (2.0 - t) * e.mean_below,
    )?;
    Ok(RdBounds { estimates: w.estimates, bounds })
}
