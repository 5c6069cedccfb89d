//! Percentile bootstrap for identified sets and their endpoints.
//!
//! Draws are expressed as multinomial resampling counts over the original
//! rows, so estimators can reuse anything computed once on the full sample
//! (such as a frozen quantile grid).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest tolerated share of failed draws.
pub const MAX_FAILED_SHARE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// `[q_0.025(lower draws), q_0.975(upper draws)]`.
    pub set_ci: (f64, f64),
    /// Two-sided 95% interval for the lower bound.
    pub lb_ci: (f64, f64),
    /// Two-sided 95% interval for the upper bound.
    pub ub_ci: (f64, f64),
    /// One-sided 95% limits: `q_0.05` of lower draws and `q_0.95` of upper draws.
    pub lb_one_sided: f64,
    pub ub_one_sided: f64,
    /// Successful draws `(lower, upper)` in draw order.
    pub draws: Vec<(f64, f64)>,
    /// Draws with at least one infinite endpoint.
    pub n_infinite: usize,
    pub n_failed: usize,
}

/// Order statistic at `ceil(level · B)` (clamped to `[1, B]`), with
/// infinities sorted to the extremes.
pub fn empirical_quantile(values: &[f64], level: f64) -> f64 {
    assert!(!values.is_empty(), "empirical_quantile needs values");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let b = v.len();
    // the slack keeps products like 0.975 * 200 = 195.00000000000003 at 195
    let k = (level * b as f64 - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    v[k - 1]
}

/// Summarizes successful draws.
pub fn summarize(draws: Vec<(f64, f64)>, n_failed: usize) -> Result<BootstrapResult> {
    let total = draws.len() + n_failed;
    if draws.is_empty() || n_failed as f64 > MAX_FAILED_SHARE * total as f64 {
        return Err(Error::BootstrapUnstable { failed: n_failed, total });
    }
    let lows: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let ups: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let q = empirical_quantile;
    Ok(BootstrapResult {
        set_ci: (q(&lows, 0.025), q(&ups, 0.975)),
        lb_ci: (q(&lows, 0.025), q(&lows, 0.975)),
        ub_ci: (q(&ups, 0.025), q(&ups, 0.975)),
        lb_one_sided: q(&lows, 0.05),
        ub_one_sided: q(&ups, 0.95),
        n_infinite: draws.iter().filter(|d| !(d.0.is_finite() && d.1.is_finite())).count(),
        draws,
        n_failed,
    })
}

/// Resampling counts of draw `index`: `n` rows drawn with replacement.
pub fn resample_counts(n: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut counts = vec![0.0; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1.0;
    }
    counts
}

/// Bootstrap several estimands sharing the same resamples. The estimator
/// receives resampling counts and returns one `(lower, upper)` per estimand.
pub fn percentile_bootstrap_multi<F>(
    n: usize,
    b: usize,
    seed: u64,
    n_estimands: usize,
    estimator: F,
) -> Result<Vec<BootstrapResult>>
where
    F: Fn(&[f64]) -> Result<Vec<(f64, f64)>> + Sync,
{
    if b < 2 || n == 0 {
        return Err(Error::InvalidInput("bootstrap needs B >= 2 and a nonempty sample".into()));
    }
    let outcomes: Vec<Option<Vec<(f64, f64)>>> = (0..b as u64)
        .into_par_iter()
        .map(|index| {
            estimator(&resample_counts(n, seed, index))
                .ok()
                .filter(|v| v.len() == n_estimands)
        })
        .collect();
    (0..n_estimands)
        .map(|k| {
            let mut draws = Vec::with_capacity(b);
            let mut failed = 0;
            for o in &outcomes {
                match o {
                    Some(v) if !(v[k].0.is_nan() || v[k].1.is_nan()) => draws.push(v[k]),
                    _ => failed += 1,
                }
            }
            summarize(draws, failed)
        })
        .collect()
}

/// Bootstrap of a single `(lower, upper)` estimator.
pub fn percentile_bootstrap<F>(n: usize, b: usize, seed: u64, estimator: F) -> Result<BootstrapResult>
where
    F: Fn(&[f64]) -> Result<(f64, f64)> + Sync,
{
    let mut out = percentile_bootstrap_multi(n, b, seed, 1, |w| estimator(w).map(|p| vec![p]))?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_convention() {
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.0);
        assert_eq!(empirical_quantile(&[4.0, 3.0, 2.0, 1.0], 0.0), 1.0);
        assert_eq!(empirical_quantile(&[1.0, 2.0, f64::INFINITY], 0.975), f64::INFINITY);
        assert_eq!(empirical_quantile(&[f64::NEG_INFINITY, 2.0, 3.0], 0.025), f64::NEG_INFINITY);
        assert!([0.0, 0.3, 1.0].iter().all(|&l| empirical_quantile(&[5.0; 7], l) == 5.0));
        let v: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(empirical_quantile(&v, 0.975), 195.0);
        assert_eq!(empirical_quantile(&v, 0.025), 5.0);
    }

    #[test]
    fn counts_sum_to_sample_size() {
        let c = resample_counts(50, 3, 7);
        assert_eq!(c.iter().sum::<f64>(), 50.0);
        assert_eq!(c, resample_counts(50, 3, 7));
        assert_ne!(c, resample_counts(50, 3, 8));
    }

    #[test]
    fn constant_estimator_gives_zero_width() {
        let r = percentile_bootstrap(10, 20, 1, |_| Ok((3.0, 3.0))).unwrap();
        assert_eq!(r.set_ci, (3.0, 3.0));
        assert_eq!(r.lb_ci, (3.0, 3.0));
        assert_eq!(r.n_infinite, 0);
    }

    #[test]
    fn mean_bootstrap_is_deterministic() {
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let est = |w: &[f64]| {
            let m = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / w.iter().sum::<f64>();
            Ok((m - 0.1, m + 0.1))
        };
        let a = percentile_bootstrap(40, 100, 9, est).unwrap();
        let b = percentile_bootstrap(40, 100, 9, est).unwrap();
        assert_eq!(a, b);
        assert!(a.set_ci.0 <= a.lb_ci.1 && a.set_ci.1 >= a.ub_ci.0);
    }

    #[test]
    fn infinite_draws_are_counted() {
        let r = percentile_bootstrap(5, 40, 2, |w| Ok((0.0, if w[0] >= 2.0 { f64::INFINITY } else { 1.0 }))).unwrap();
        let expected = (0..40).filter(|&i| resample_counts(5, 2, i)[0] >= 2.0).count();
        assert_eq!(r.n_infinite, expected);
        assert!(expected > 0);
        assert_eq!(r.set_ci.1, f64::INFINITY);
    }

    #[test]
    fn too_many_failures_is_an_error() {
        let err = percentile_bootstrap(5, 40, 2, |w| {
            if w[0] >= 1.0 { Err(Error::Separation) } else { Ok((0.0, 1.0)) }
        })
        .unwrap_err();
        assert!(matches!(err, Error::BootstrapUnstable { .. }));
        let ok = percentile_bootstrap(5, 100, 2, |w| {
            if w[0] >= 4.0 { Err(Error::Separation) } else { Ok((0.0, 1.0)) }
        })
        .unwrap();
        assert!(ok.n_failed <= 5);
    }
}
