//! Logistic regression by Newton–Raphson (iteratively reweighted least squares).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const STEP_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
/// Linear predictors beyond this magnitude mean fitted probabilities have
/// collapsed to 0 or 1.
const ETA_LIMIT: f64 = 30.0;
/// Predictions are kept this far inside (0, 1).
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    /// Intercept first, then one slope per feature column.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn linear_predictor(coefficients: &[f64], row: impl Iterator<Item = f64>) -> f64 {
    coefficients[0] + row.zip(&coefficients[1..]).map(|(x, b)| x * b).sum::<f64>()
}

impl PropensityModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let eta = linear_predictor(&self.coefficients, row.iter().copied());
        sigmoid(eta).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<f64> {
        (0..features.nrows())
            .map(|i| {
                let eta = linear_predictor(&self.coefficients, features.row(i).iter().copied());
                sigmoid(eta).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
            })
            .collect()
    }
}

struct Newton {
    step: DVector<f64>,
}

/// One Newton step of the (weighted) log-likelihood at `beta`.
fn newton_step(x: &DMatrix<f64>, labels: &[f64], weights: &[f64], beta: &DVector<f64>) -> Result<Newton> {
    let (n, k) = (x.nrows(), x.ncols() + 1);
    let mut hess = DMatrix::<f64>::zeros(k, k);
    let mut grad = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    for i in 0..n {
        if weights[i] == 0.0 {
            continue;
        }
        row[0] = 1.0;
        for j in 1..k {
            row[j] = x[(i, j - 1)];
        }
        let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        if eta.abs() > ETA_LIMIT {
            return Err(Error::Separation);
        }
        let p = sigmoid(eta);
        let v = weights[i] * p * (1.0 - p);
        let r = weights[i] * (labels[i] - p);
        for a in 0..k {
            grad[a] += row[a] * r;
            for b in 0..=a {
                hess[(a, b)] += v * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            hess[(b, a)] = hess[(a, b)];
        }
    }
    let chol = hess.clone().cholesky().ok_or(Error::SingularDesign)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())));
    if lo <= hi * 1e-7 {
        return Err(Error::SingularDesign);
    }
    Ok(Newton { step: chol.solve(&grad) })
}

fn validate(features: &DMatrix<f64>, labels: &[f64], weights: &[f64]) -> Result<()> {
    check_len("labels", labels.len(), features.nrows())?;
    check_len("weights", weights.len(), features.nrows())?;
    if let Some(i) = labels.iter().position(|&z| z != 0.0 && z != 1.0) {
        return Err(Error::InvalidInput(format!("label at row {i} is not 0/1")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    Ok(())
}

/// Maximum-likelihood logistic regression of `labels` on `features`. An
/// intercept is added automatically.
pub fn fit_logistic(features: &DMatrix<f64>, labels: &[f64]) -> Result<PropensityModel> {
    fit_logistic_weighted(features, labels, &vec![1.0; labels.len()])
}

/// Logistic regression with nonnegative frequency weights (bootstrap counts).
pub fn fit_logistic_weighted(features: &DMatrix<f64>, labels: &[f64], weights: &[f64]) -> Result<PropensityModel> {
    validate(features, labels, weights)?;
    let ones: f64 = labels.iter().zip(weights).map(|(z, w)| z * w).sum();
    let total: f64 = weights.iter().sum();
    if ones <= 0.0 || ones >= total {
        return Err(Error::Separation);
    }
    let mut beta = DVector::<f64>::zeros(features.ncols() + 1);
    for it in 1..=MAX_ITER {
        let Newton { step } = newton_step(features, labels, weights, &beta)?;
        beta += &step;
        if step.amax() < STEP_TOL {
            return Ok(PropensityModel {
                coefficients: beta.iter().copied().collect(),
                converged: true,
                iterations: it,
            });
        }
    }
    if beta.amax() > ETA_LIMIT {
        return Err(Error::Separation);
    }
    Ok(PropensityModel {
        coefficients: beta.iter().copied().collect(),
        converged: false,
        iterations: MAX_ITER,
    })
}

/// Exactly one Newton step on a (resampled) dataset, starting from the
/// coefficients of `model`.
pub fn one_step_update(
    model: &PropensityModel,
    features: &DMatrix<f64>,
    labels: &[f64],
    weights: &[f64],
) -> Result<PropensityModel> {
    validate(features, labels, weights)?;
    check_len("coefficients", model.coefficients.len(), features.ncols() + 1)?;
    let beta = DVector::from_column_slice(&model.coefficients);
    let Newton { step } = newton_step(features, labels, weights, &beta)?;
    Ok(PropensityModel {
        coefficients: (beta + &step).iter().copied().collect(),
        converged: step.amax() < STEP_TOL,
        iterations: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simulate(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z = x
            .iter()
            .map(|&x| if rng.random::<f64>() < sigmoid(x) { 1.0 } else { 0.0 })
            .collect();
        (DMatrix::from_column_slice(n, 1, &x), z)
    }

    #[test]
    fn balanced_intercept_only_is_zero() {
        let x = DMatrix::<f64>::zeros(4, 0);
        let m = fit_logistic(&x, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(m.converged);
        assert!(m.coefficients[0].abs() < 1e-12);
    }

    #[test]
    fn intercept_matches_log_odds() {
        let x = DMatrix::<f64>::zeros(5, 0);
        let m = fit_logistic(&x, &[1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((m.coefficients[0] - (1.5f64).ln()).abs() < 1e-10);
    }

    #[test]
    fn recovers_generating_slope() {
        let (x, z) = simulate(100_000, 3);
        let m = fit_logistic(&x, &z).unwrap();
        assert!(m.converged);
        assert!((m.coefficients[1] - 1.0).abs() < 0.05, "{:?}", m.coefficients);
        assert!(m.coefficients[0].abs() < 0.05);
    }

    #[test]
    fn identical_labels_are_separation() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert_eq!(fit_logistic(&x, &[1.0; 3]), Err(Error::Separation));
    }

    #[test]
    fn perfectly_separated_data_detected() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let z = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(fit_logistic(&x, &z), Err(Error::Separation));
    }

    #[test]
    fn duplicate_columns_are_singular() {
        let (x1, z) = simulate(200, 5);
        let x = DMatrix::from_fn(200, 2, |i, _| x1[(i, 0)]);
        assert_eq!(fit_logistic(&x, &z), Err(Error::SingularDesign));
    }

    #[test]
    fn one_step_at_optimum_barely_moves() {
        let (x, z) = simulate(2000, 7);
        let m = fit_logistic(&x, &z).unwrap();
        let u = one_step_update(&m, &x, &z, &vec![1.0; 2000]).unwrap();
        let moved = m
            .coefficients
            .iter()
            .zip(&u.coefficients)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(moved <= 1e-6);
        assert_eq!(u.iterations, 1);
    }

    #[test]
    fn weights_act_as_replication() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let z = [0.0, 1.0, 0.0, 1.0];
        let w = [2.0, 1.0, 1.0, 3.0];
        let xr = DMatrix::from_column_slice(7, 1, &[0.0, 0.0, 1.0, 2.0, 3.0, 3.0, 3.0]);
        let zr = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let a = fit_logistic_weighted(&x, &z, &w).unwrap();
        let b = fit_logistic(&xr, &zr).unwrap();
        for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn refit_is_bit_identical() {
        let (x, z) = simulate(500, 11);
        assert_eq!(fit_logistic(&x, &z).unwrap(), fit_logistic(&x, &z).unwrap());
    }

    #[test]
    fn predictions_stay_inside_unit_interval() {
        let m = PropensityModel {
            coefficients: vec![0.0, 100.0],
            converged: true,
            iterations: 1,
        };
        let p = m.predict_row(&[10.0]);
        assert!(p < 1.0 && p > 0.0);
    }
}
