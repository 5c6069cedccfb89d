//! Linear contrasts of OLS coefficients, `δ'β`, under a likelihood-ratio band.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{bound_pair, Conditioning, EstimandBounds};
use crate::bounds::SensitivityBand;
use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsConfig {
    /// Contrast over the columns of the design matrix.
    pub delta: Vec<f64>,
    /// Column holding the intercept; `delta` must vanish there.
    #[serde(default)]
    pub intercept_column: Option<usize>,
    pub w_lower: f64,
    pub w_upper: f64,
}

/// `λ_i = δ' (X'X / n)^{-1} x_i`, so that `E[λ Y] = δ' β_OLS`.
pub fn ols_lambda(x: &DMatrix<f64>, delta: &[f64]) -> Result<Vec<f64>> {
    check_len("delta", delta.len(), x.ncols())?;
    let n = x.nrows() as f64;
    let gram = x.transpose() * x / n;
    let chol = gram.cholesky().ok_or(Error::SingularDesign)?;
    let diag = chol.l_dirty().diagonal();
    if diag.min() <= diag.max() * 1e-7 {
        return Err(Error::SingularDesign);
    }
    let a = chol.solve(&DVector::from_column_slice(delta));
    Ok((x * a).iter().copied().collect())
}

/// OLS coefficients `(X'X)^{-1} X'y`.
pub fn ols_coefficients(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    check_len("outcome", y.len(), x.nrows())?;
    let chol = (x.transpose() * x).cholesky().ok_or(Error::SingularDesign)?;
    Ok(chol.solve(&(x.transpose() * DVector::from_column_slice(y))).iter().copied().collect())
}

/// Bounds on `δ'β`. Without `groups` the sample is a single conditioning cell.
pub fn ols_bounds(y: &[f64], x: &DMatrix<f64>, config: &OlsConfig, groups: Option<&[usize]>) -> Result<EstimandBounds> {
    check_len("outcome", y.len(), x.nrows())?;
    if let Some(j) = config.intercept_column {
        if j >= config.delta.len() {
            return Err(Error::InvalidInput(format!("intercept column {j} out of range")));
        }
        if config.delta[j] != 0.0 {
            return Err(Error::InvalidInput("delta must put no weight on the intercept".into()));
        }
    }
    let lambda = ols_lambda(x, &config.delta)?;
    let band = SensitivityBand::uniform(y.len(), config.w_lower, config.w_upper)?;
    let single = vec![0; y.len()];
    let keys = groups.unwrap_or(&single);
    check_len("groups", keys.len(), y.len())?;
    bound_pair(lambda, y.to_vec(), band, Conditioning::Cells(keys), 0.0)
}
