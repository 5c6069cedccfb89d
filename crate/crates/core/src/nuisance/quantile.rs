//! Linear quantile regression on a fixed grid of levels.
//!
//! Each interior level is fit by a Frisch–Newton interior-point method on the
//! dual of the check-loss problem. Predictions are rearranged (sorted across
//! levels) so the fitted quantile function is monotone, and the end levels
//! 0 and 1 fall back to the observed within-cell extremes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Levels 0.00, 0.01, ..., 1.00.
pub const GRID_SIZE: usize = 101;
const LAST: usize = GRID_SIZE - 1;

const STEP_SHRINK: f64 = 0.99995;
const GAP_TOL: f64 = 1e-10;
const MAX_IT: usize = 100;

/// Check loss `ρ_τ(r) = r (τ - 1{r < 0})`.
pub fn check_loss(residual: f64, tau: f64) -> f64 {
    if residual < 0.0 {
        residual * (tau - 1.0)
    } else {
        residual * tau
    }
}

pub fn grid_level(k: usize) -> f64 {
    k as f64 / LAST as f64
}

/// Index of the grid level nearest to `tau_hat`; exact midpoints go down.
pub fn nearest_level(tau_hat: f64) -> usize {
    let scaled = tau_hat.clamp(0.0, 1.0) * LAST as f64;
    // the small shift absorbs representation error at midpoints like 0.675
    let k = (scaled - 0.5 - 1e-9).ceil();
    (k.max(0.0) as usize).min(LAST)
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

/// Solves the `p x p` system `A diag(q) A' y = rhs`.
fn normal_solve(a: &DMatrix<f64>, q: &DVector<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let aq = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * q[j]);
    let m = &aq * a.transpose();
    let chol = m.cholesky().ok_or(Error::SingularDesign)?;
    Ok(chol.solve(rhs))
}

/// Coefficients minimizing `Σ ρ_τ(y_i - x_i'β)` by the Frisch–Newton
/// primal-dual interior-point method.
pub fn fit_quantile(x: &DMatrix<f64>, y: &[f64], tau: f64) -> Result<Vec<f64>> {
    let (n, p) = (x.nrows(), x.ncols());
    check_len("response", y.len(), n)?;
    if n < p || p == 0 {
        return Err(Error::SingularDesign);
    }
    // dual:  max y'a  s.t.  X'a = (1 - τ) X'1,  0 <= a <= 1
    let a_mat = x.transpose();
    let c = -DVector::from_column_slice(y);
    let b = a_mat.column_sum() * (1.0 - tau);
    let u = DVector::from_element(n, 1.0);
    let mut xv = DVector::from_element(n, 1.0 - tau);
    let mut s = &u - &xv;
    let ones = DVector::from_element(n, 1.0);
    let gram = x.transpose() * x;
    let chol = gram.cholesky().ok_or(Error::SingularDesign)?;
    let diag = chol.l_dirty().diagonal();
    if diag.min() <= diag.max() * 1e-7 {
        return Err(Error::SingularDesign);
    }
    let mut yv = normal_solve(&a_mat, &ones, &(&a_mat * &c))?;
    let mut r = &c - a_mat.transpose() * &yv;
    r.iter_mut().for_each(|v| {
        if *v == 0.0 {
            *v = 0.001;
        }
    });
    let mut z = r.map(|v| v.max(0.0));
    let mut w = &z - &r;
    let scale = 1.0 + c.iter().map(|v| v.abs()).sum::<f64>();
    let gap = |xv: &DVector<f64>, yv: &DVector<f64>, w: &DVector<f64>| c.dot(xv) - yv.dot(&b) + w.dot(&u);
    let mut g = gap(&xv, &yv, &w);
    let mut it = 0;
    while g > GAP_TOL * scale && it < MAX_IT {
        it += 1;
        let q = DVector::from_fn(n, |i, _| 1.0 / (z[i] / xv[i] + w[i] / s[i]));
        if q.iter().any(|v| !v.is_finite()) {
            // the duals underflowed: the current iterate is as accurate as it gets
            break;
        }
        r = &z - &w;
        // affine-scaling predictor
        let Ok(mut dy) = normal_solve(&a_mat, &q, &(&a_mat * q.component_mul(&r))) else {
            break;
        };
        let mut dx = q.component_mul(&(a_mat.transpose() * &dy - &r));
        let mut ds = -&dx;
        let mut dz = DVector::from_fn(n, |i, _| -z[i] * (dx[i] / xv[i] + 1.0));
        let mut dw = DVector::from_fn(n, |i, _| -w[i] * (ds[i] / s[i] + 1.0));
        let mut fp = (STEP_SHRINK * max_step(&xv, &dx).min(max_step(&s, &ds))).min(1.0);
        let mut fd = (STEP_SHRINK * max_step(&w, &dw).min(max_step(&z, &dz))).min(1.0);
        if fp.min(fd) < 1.0 {
            // Mehrotra corrector
            let mu0 = z.dot(&xv) + w.dot(&s);
            let g_aff = (&z + &dz * fd).dot(&(&xv + &dx * fp)) + (&w + &dw * fd).dot(&(&s + &ds * fp));
            let mu = mu0 * (g_aff / mu0).powi(3) / (2.0 * n as f64);
            let dxdz = dx.component_mul(&dz);
            let dsdw = ds.component_mul(&dw);
            let xinv = xv.map(|v| 1.0 / v);
            let sinv = s.map(|v| 1.0 / v);
            let xi = (&xinv - &sinv) * mu;
            let inner = &r + &dxdz - &dsdw - &xi;
            let Ok(corrected) = normal_solve(&a_mat, &q, &(&a_mat * q.component_mul(&inner))) else {
                break;
            };
            dy = corrected;
            dx = q.component_mul(&(a_mat.transpose() * &dy + &xi - &r - &dxdz + &dsdw));
            ds = -&dx;
            dz = DVector::from_fn(n, |i, _| mu * xinv[i] - z[i] - xinv[i] * z[i] * dx[i] - dxdz[i]);
            dw = DVector::from_fn(n, |i, _| mu * sinv[i] - w[i] - sinv[i] * w[i] * ds[i] - dsdw[i]);
            fp = (STEP_SHRINK * max_step(&xv, &dx).min(max_step(&s, &ds))).min(1.0);
            fd = (STEP_SHRINK * max_step(&w, &dw).min(max_step(&z, &dz))).min(1.0);
        }
        let next = (&xv + &dx * fp, &s + &ds * fp, &yv + &dy * fd, &w + &dw * fd, &z + &dz * fd);
        let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        if !(finite(&next.0) && finite(&next.1) && finite(&next.2) && finite(&next.3) && finite(&next.4)) {
            break;
        }
        (xv, s, yv, w, z) = next;
        g = gap(&xv, &yv, &w);
    }
    if yv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("quantile regression at level {tau} diverged")));
    }
    Ok(yv.iter().map(|v| -v).collect())
}

/// Quantile regression fits on the 101-level grid, with observed extremes
/// per cell for the end levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileGridModel {
    /// Coefficients for levels 1..=99; index 0 holds level 0.01.
    coefficients: Vec<Vec<f64>>,
    cell_min: Vec<f64>,
    cell_max: Vec<f64>,
    n_features: usize,
}

impl QuantileGridModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_cells(&self) -> usize {
        self.cell_min.len()
    }

    pub fn cell_max(&self) -> &[f64] {
        &self.cell_max
    }

    pub fn cell_min(&self) -> &[f64] {
        &self.cell_min
    }

    /// Coefficients at interior grid index `k` in 1..=99.
    pub fn coefficients(&self, k: usize) -> &[f64] {
        &self.coefficients[k - 1]
    }

    /// Raw (unrearranged) prediction at interior grid index `k` in 1..=99.
    pub fn raw_prediction(&self, row: &[f64], k: usize) -> f64 {
        self.coefficients[k - 1].iter().zip(row).map(|(b, x)| b * x).sum()
    }

    /// Monotone predicted quantile function of one row over all 101 levels.
    pub fn predict_row(&self, row: &[f64], cell: usize) -> [f64; GRID_SIZE] {
        let mut out = [0.0; GRID_SIZE];
        self.fill_row(row, cell, &mut out);
        out
    }

    /// Writes the rearranged quantile function of `row` into `out`.
    pub fn fill_row(&self, row: &[f64], cell: usize, out: &mut [f64; GRID_SIZE]) {
        for (k, slot) in out.iter_mut().enumerate().take(LAST).skip(1) {
            *slot = self.raw_prediction(row, k);
        }
        out[1..LAST].sort_by(f64::total_cmp);
        out[0] = self.cell_min[cell].min(out[1]);
        out[LAST] = self.cell_max[cell].max(out[LAST - 1]);
    }

    /// Predicted quantile at the grid level nearest to `tau_hat`.
    pub fn predict_quantile(&self, row: &[f64], cell: usize, tau_hat: f64) -> f64 {
        self.predict_row(row, cell)[nearest_level(tau_hat)]
    }
}

/// Fits every interior grid level of `response` on `features` (no intercept
/// is added). `cells` assigns each row to a cell for the end levels.
pub fn fit_quantile_grid(features: &DMatrix<f64>, response: &[f64], cells: &[usize]) -> Result<QuantileGridModel> {
    let n = features.nrows();
    check_len("response", response.len(), n)?;
    check_len("cells", cells.len(), n)?;
    if response.iter().chain(features.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("quantile regression needs finite data".into()));
    }
    let n_cells = cells.iter().max().map_or(0, |m| m + 1);
    let mut cell_min = vec![f64::INFINITY; n_cells];
    let mut cell_max = vec![f64::NEG_INFINITY; n_cells];
    for (&c, &y) in cells.iter().zip(response) {
        cell_min[c] = cell_min[c].min(y);
        cell_max[c] = cell_max[c].max(y);
    }
    let coefficients = (1..LAST)
        .map(|k| fit_quantile(features, response, grid_level(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantileGridModel {
        coefficients,
        cell_min,
        cell_max,
        n_features: features.ncols(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn total_loss(x: &DMatrix<f64>, y: &[f64], beta: &[f64], tau: f64) -> f64 {
        (0..x.nrows())
            .map(|i| {
                let fit: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
                check_loss(y[i] - fit, tau)
            })
            .sum()
    }

    #[test]
    fn nearest_level_rule() {
        assert_eq!(nearest_level(0.666), 67);
        assert_eq!(nearest_level(0.675), 67);
        assert_eq!(nearest_level(0.676), 68);
        assert_eq!(nearest_level(1.0), 100);
        assert_eq!(nearest_level(0.0), 0);
        assert_eq!(nearest_level(0.004), 0);
        assert_eq!(nearest_level(0.005), 0);
    }

    #[test]
    fn constant_response_everywhere() {
        let x = DMatrix::from_element(30, 1, 1.0);
        let m = fit_quantile_grid(&x, &[3.5; 30], &[0; 30]).unwrap();
        let q = m.predict_row(&[1.0], 0);
        assert!(q.iter().all(|v| (v - 3.5).abs() < 1e-8), "{q:?}");
    }

    #[test]
    fn median_of_normal_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = DMatrix::from_element(10_000, 1, 1.0);
        let beta = fit_quantile(&x, &y, 0.5).unwrap();
        assert!(beta[0].abs() < 0.05);
    }

    #[test]
    fn intercept_only_hits_sample_quantile() {
        let y: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let x = DMatrix::from_element(10, 1, 1.0);
        // any value in [3, 4] minimizes the 0.3 check loss
        let beta = fit_quantile(&x, &y, 0.3).unwrap();
        assert!(beta[0] >= 3.0 - 1e-6 && beta[0] <= 4.0 + 1e-6, "{beta:?}");
        let beta = fit_quantile(&x, &y, 0.25).unwrap();
        assert!((beta[0] - 3.0).abs() < 1e-6, "{beta:?}");
    }

    #[test]
    fn beats_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / n as f64 });
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 2.0 * x[(i, 1)] + { let e: f64 = StandardNormal.sample(&mut rng); e })
            .collect();
        for k in [1, 10, 50, 90, 99] {
            let tau = grid_level(k);
            let beta = fit_quantile(&x, &y, tau).unwrap();
            assert!(total_loss(&x, &y, &beta, tau) <= total_loss(&x, &y, &[0.0, 0.0], tau));
        }
    }

    #[test]
    fn matches_brute_force_on_small_problem() {
        // optimum is attained at a fit interpolating two observations
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [0.3, 1.9, 1.2, 3.8, 4.1, 4.0, 7.5];
        let x = DMatrix::from_fn(7, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        for tau in [0.2, 0.5, 0.8] {
            let beta = fit_quantile(&x, &y, tau).unwrap();
            let mut best = f64::INFINITY;
            for i in 0..7 {
                for j in (i + 1)..7 {
                    let slope = (y[j] - y[i]) / (xs[j] - xs[i]);
                    let b = [y[i] - slope * xs[i], slope];
                    best = best.min(total_loss(&x, &y, &b, tau));
                }
            }
            assert!((total_loss(&x, &y, &beta, tau) - best).abs() < 1e-7);
        }
    }

    #[test]
    fn rearranged_predictions_are_monotone() {
        // small, noisy sample where raw fits can cross away from the data
        let xs = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 5.0];
        let y = [1.0, -2.0, 3.0, 0.5, -1.0, 2.0, 0.0];
        let x = DMatrix::from_fn(7, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let m = fit_quantile_grid(&x, &y, &[0; 7]).unwrap();
        for row in [[1.0, -10.0], [1.0, 0.0], [1.0, 20.0]] {
            let q = m.predict_row(&row, 0);
            assert!(q.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn top_level_uses_cell_maximum() {
        let cells = [0, 0, 0, 1, 1, 1];
        let x = DMatrix::from_fn(6, 2, |i, j| if cells[i] == j { 1.0 } else { 0.0 });
        let y = [0.0, 1.0, 5.0, -2.0, 3.0, 10.0];
        let m = fit_quantile_grid(&x, &y, &cells).unwrap();
        let top0 = m.predict_quantile(&[1.0, 0.0], 0, 1.0);
        let top1 = m.predict_quantile(&[0.0, 1.0], 1, 1.0);
        assert!(top0 >= 5.0 && top0 - 5.0 < 1e-6);
        assert!(top1 >= 10.0 && top1 - 10.0 < 1e-6);
        assert!(m.predict_quantile(&[0.0, 1.0], 1, 0.0) <= -2.0);
    }

    #[test]
    fn singular_design_rejected() {
        let x = DMatrix::from_element(10, 2, 1.0);
        let y: Vec<f64> = (0..10).map(|v| v as f64).collect();
        assert_eq!(fit_quantile(&x, &y, 0.5), Err(Error::SingularDesign));
    }

    #[test]
    fn fits_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x = DMatrix::from_element(100, 1, 1.0);
        let a = fit_quantile_grid(&x, &y, &[0; 100]).unwrap();
        let b = fit_quantile_grid(&x, &y, &[0; 100]).unwrap();
        assert_eq!(a, b);
    }
}
