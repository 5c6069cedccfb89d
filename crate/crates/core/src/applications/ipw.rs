//! Inverse propensity weighting under odds-ratio bands and c-dependence.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{bound_pair_weighted, Conditioning, EstimandBounds};
use crate::bounds::SensitivityBand;
use crate::error::{check_len, Error, Result};
use crate::nuisance::quantile::{fit_quantile_grid, QuantileGridModel, GRID_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Treated,
    Control,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IpwEstimand {
    /// Average potential outcome `E[Y(z)]` of one arm.
    Apo(Arm),
    /// Average treatment effect `E[Y(1) - Y(0)]`.
    Ate,
}

/// Sensitivity model for the latent propensities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpwSensitivity {
    /// Constant odds-ratio bands `l_z <= odds(e_z) / odds(e) <= u_z`.
    OddsRatio { l1: f64, u1: f64, l0: f64, u0: f64 },
    /// Latent propensities within `c` of the observed propensity.
    CDependence(f64),
}

/// Odds-ratio band `(l, u)` implied by c-dependence at propensity `e`.
/// `u` is infinite once `e + c >= 1`; `l` is zero once `e <= c`.
pub fn c_dependence_odds(e: f64, c: f64) -> (f64, f64) {
    let odds = |p: f64| p / (1.0 - p);
    let base = odds(e);
    let u = if e + c >= 1.0 { f64::INFINITY } else { odds(e + c) / base };
    let l = if e <= c { 0.0 } else { odds(e - c) / base };
    (l, u)
}

/// Weight band of a treated observation: `(e + (1-e)/u, e + (1-e)/l)`.
pub fn treated_band(e: f64, l: f64, u: f64) -> (f64, f64) {
    let lower = if u.is_infinite() { e } else { e + (1.0 - e) / u };
    let upper = if l == 0.0 { f64::INFINITY } else { e + (1.0 - e) / l };
    (lower, upper)
}

/// Weight band of a control observation: `(1 - e + e l, 1 - e + e u)`.
pub fn control_band(e: f64, l: f64, u: f64) -> (f64, f64) {
    let upper = if u.is_infinite() { f64::INFINITY } else { 1.0 - e + e * u };
    (1.0 - e + e * l, upper)
}

impl IpwSensitivity {
    fn odds(&self, e: f64, arm: Arm) -> Result<(f64, f64)> {
        match *self {
            IpwSensitivity::CDependence(c) => {
                if !(c >= 0.0 && c.is_finite()) {
                    return Err(Error::InvalidInput(format!("c must be nonnegative, got {c}")));
                }
                Ok(c_dependence_odds(e, c))
            }
            IpwSensitivity::OddsRatio { l1, u1, l0, u0 } => {
                let (l, u) = match arm {
                    Arm::Treated => (l1, u1),
                    Arm::Control => (l0, u0),
                };
                if !(l > 0.0 && l <= 1.0 && u >= 1.0) {
                    return Err(Error::InvalidInput(format!("odds-ratio band ({l}, {u}) needs 0 < l <= 1 <= u")));
                }
                Ok((l, u))
            }
        }
    }

    /// Band for an observation with treatment `z` and propensity `e`.
    pub fn band(&self, z: f64, e: f64) -> Result<(f64, f64)> {
        if z == 1.0 {
            let (l, u) = self.odds(e, Arm::Treated)?;
            Ok(treated_band(e, l, u))
        } else {
            let (l, u) = self.odds(e, Arm::Control)?;
            Ok(control_band(e, l, u))
        }
    }
}

fn check_propensities(e: &[f64]) -> Result<()> {
    match e.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
        Some(index) => Err(Error::PropensityRange { index, value: e[index] }),
        None => Ok(()),
    }
}

fn check_treatment(z: &[f64]) -> Result<()> {
    match z.iter().position(|&v| v != 0.0 && v != 1.0) {
        Some(i) => Err(Error::InvalidInput(format!("treatment at row {i} is {}, expected 0 or 1", z[i]))),
        None => Ok(()),
    }
}

/// Horvitz–Thompson weights `λ` of the estimand.
pub fn ipw_lambda(z: &[f64], e: &[f64], estimand: IpwEstimand) -> Vec<f64> {
    z.iter()
        .zip(e)
        .map(|(&z, &e)| {
            let treated = z / e;
            let control = (1.0 - z) / (1.0 - e);
            match estimand {
                IpwEstimand::Apo(Arm::Treated) => treated,
                IpwEstimand::Apo(Arm::Control) => control,
                IpwEstimand::Ate => treated - control,
            }
        })
        .collect()
}

/// Band of every observation. Observations that carry no weight in the
/// estimand get the identity band.
pub fn ipw_band(z: &[f64], e: &[f64], sensitivity: &IpwSensitivity, estimand: IpwEstimand) -> Result<SensitivityBand> {
    check_len("propensities", e.len(), z.len())?;
    let mut lower = Vec::with_capacity(z.len());
    let mut upper = Vec::with_capacity(z.len());
    for (&z, &e) in z.iter().zip(e) {
        let relevant = match estimand {
            IpwEstimand::Apo(Arm::Treated) => z == 1.0,
            IpwEstimand::Apo(Arm::Control) => z == 0.0,
            IpwEstimand::Ate => true,
        };
        let (l, u) = if relevant { sensitivity.band(z, e)? } else { (1.0, 1.0) };
        lower.push(l);
        upper.push(u);
    }
    SensitivityBand::new(lower, upper)
}

/// Bounds on an IPW estimand given estimated propensities.
pub fn ipw_bounds(
    z: &[f64],
    y: &[f64],
    e: &[f64],
    sensitivity: &IpwSensitivity,
    estimand: IpwEstimand,
    conditioning: Conditioning<'_>,
) -> Result<EstimandBounds> {
    ipw_bounds_weighted(z, y, e, sensitivity, estimand, conditioning, None)
}

/// [`ipw_bounds`] with frequency weights (bootstrap resampling counts).
pub fn ipw_bounds_weighted(
    z: &[f64],
    y: &[f64],
    e: &[f64],
    sensitivity: &IpwSensitivity,
    estimand: IpwEstimand,
    conditioning: Conditioning<'_>,
    weights: Option<&[f64]>,
) -> Result<EstimandBounds> {
    check_len("outcome", y.len(), z.len())?;
    check_len("propensities", e.len(), z.len())?;
    check_treatment(z)?;
    check_propensities(e)?;
    let band = ipw_band(z, e, sensitivity, estimand)?;
    bound_pair_weighted(ipw_lambda(z, e, estimand), y.to_vec(), band, conditioning, 0.0, weights)
}

pub fn ipw_apo_bounds(
    z: &[f64],
    y: &[f64],
    e: &[f64],
    sensitivity: &IpwSensitivity,
    arm: Arm,
    conditioning: Conditioning<'_>,
) -> Result<EstimandBounds> {
    ipw_bounds(z, y, e, sensitivity, IpwEstimand::Apo(arm), conditioning)
}

pub fn ipw_ate_bounds(
    z: &[f64],
    y: &[f64],
    e: &[f64],
    sensitivity: &IpwSensitivity,
    conditioning: Conditioning<'_>,
) -> Result<EstimandBounds> {
    ipw_bounds(z, y, e, sensitivity, IpwEstimand::Ate, conditioning)
}

/// Writes the quantile-regression features of one observation:
/// `[Z, Z·x, Z·λ, 1-Z, (1-Z)·x, (1-Z)·λ]`.
pub fn fill_quantile_features(x: &[f64], z: f64, lambda: f64, out: &mut [f64]) {
    let k = x.len() + 2;
    for (arm, weight) in [(0, z), (1, 1.0 - z)] {
        let base = arm * k;
        out[base] = weight;
        for (j, v) in x.iter().enumerate() {
            out[base + 1 + j] = weight * v;
        }
        out[base + k - 1] = weight * lambda;
    }
}

pub fn quantile_feature_count(n_covariates: usize) -> usize {
    2 * (n_covariates + 2)
}

/// Feature matrix of the quantile grid: treatment interacted with the
/// covariates and with `λ`.
pub fn quantile_features(x: &DMatrix<f64>, z: &[f64], lambda: &[f64]) -> DMatrix<f64> {
    let n = x.nrows();
    let p = quantile_feature_count(x.ncols());
    let mut out = DMatrix::zeros(n, p);
    let mut row = vec![0.0; p];
    let mut xi = vec![0.0; x.ncols()];
    for i in 0..n {
        for (j, v) in xi.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
        fill_quantile_features(&xi, z[i], lambda[i], &mut row);
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

/// Treatment arm index used as the grid cell (0 = treated, 1 = control).
pub fn arm_cells(z: &[f64]) -> Vec<usize> {
    z.iter().map(|&z| if z == 1.0 { 0 } else { 1 }).collect()
}

/// Fits the quantile grid of `λY` for the estimand.
pub fn fit_ipw_quantile_grid(
    x: &DMatrix<f64>,
    z: &[f64],
    y: &[f64],
    e: &[f64],
    estimand: IpwEstimand,
) -> Result<QuantileGridModel> {
    check_len("treatment", z.len(), x.nrows())?;
    check_len("outcome", y.len(), x.nrows())?;
    check_propensities(e)?;
    let lambda = ipw_lambda(z, e, estimand);
    let response: Vec<f64> = lambda.iter().zip(y).map(|(l, y)| l * y).collect();
    fit_quantile_grid(&quantile_features(x, z, &lambda), &response, &arm_cells(z))
}

/// Rearranged quantile functions of every observation, evaluated at the
/// given propensities.
pub fn ipw_quantile_rows(
    model: &QuantileGridModel,
    x: &DMatrix<f64>,
    z: &[f64],
    e: &[f64],
    estimand: IpwEstimand,
) -> Vec<[f64; GRID_SIZE]> {
    let lambda = ipw_lambda(z, e, estimand);
    let cells = arm_cells(z);
    let mut row = vec![0.0; model.n_features()];
    let mut xi = vec![0.0; x.ncols()];
    let mut out = vec![[0.0; GRID_SIZE]; z.len()];
    for i in 0..z.len() {
        for (j, v) in xi.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
        fill_quantile_features(&xi, z[i], lambda[i], &mut row);
        model.fill_row(&row, cells[i], &mut out[i]);
    }
    out
}
