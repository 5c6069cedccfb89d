//! Monte Carlo study of the IPW ATE bounds under c-dependence: estimates,
//! bootstrap intervals, coverage and bound-tracking summaries.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{dgp_sample_stream, Sample, DEFAULT_ETA};
use super::truth::{true_bounds_c_dependence_eta, TruthResult};
use crate::applications::ipw::{fit_ipw_quantile_grid, ipw_bounds_weighted, ipw_quantile_rows, IpwEstimand, IpwSensitivity};
use crate::applications::{Conditioning, OutcomeSupport};
use crate::error::{Error, Result};
use crate::inference::{percentile_bootstrap_multi, BootstrapResult};
use crate::nuisance::{fit_logistic, one_step_update, PropensityModel, QuantileGridModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub c_grid: Vec<f64>,
    pub sims: usize,
    pub n: usize,
    /// Bootstrap draws per simulation.
    pub b: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub seed: u64,
    pub truth_draws: usize,
    #[serde(default)]
    pub support: OutcomeSupport,
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

/// `0.00, 0.01, …, 0.10`.
pub fn default_c_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 100.0).collect()
}

impl ExperimentConfig {
    /// 500 simulations of 2000 observations with 500 bootstrap draws.
    pub fn desk(seed: u64) -> Self {
        Self {
            c_grid: default_c_grid(),
            sims: 500,
            n: 2000,
            b: 500,
            eta: DEFAULT_ETA,
            seed,
            truth_draws: 1_000_000,
            support: OutcomeSupport::Unbounded,
        }
    }

    /// 1000 simulations with 1000 bootstrap draws.
    pub fn paper_scale(seed: u64) -> Self {
        Self { sims: 1000, b: 1000, ..Self::desk(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() {
            return Err(Error::InvalidInput("c grid is empty".into()));
        }
        if let Some(c) = self.c_grid.iter().find(|c| !(c.is_finite() && **c >= 0.0 && **c < 1.0)) {
            return Err(Error::InvalidInput(format!("c = {c} is outside [0, 1)")));
        }
        if self.sims == 0 || self.n < 10 || self.b < 2 || self.truth_draws == 0 {
            return Err(Error::InvalidInput("need sims >= 1, n >= 10, B >= 2 and truth draws >= 1".into()));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidInput(format!("eta = {} must be positive", self.eta)));
        }
        Ok(())
    }
}

/// Bootstrap intervals of one estimate, without the raw draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub set_ci: (f64, f64),
    pub lb_ci: (f64, f64),
    pub ub_ci: (f64, f64),
    pub lb_one_sided: f64,
    pub ub_one_sided: f64,
    pub n_infinite: usize,
    pub n_failed: usize,
}

impl From<BootstrapResult> for IntervalSummary {
    fn from(r: BootstrapResult) -> Self {
        Self {
            set_ci: r.set_ci,
            lb_ci: r.lb_ci,
            ub_ci: r.ub_ci,
            lb_one_sided: r.lb_one_sided,
            ub_one_sided: r.ub_one_sided,
            n_infinite: r.n_infinite,
            n_failed: r.n_failed,
        }
    }
}

/// Result of one simulation at one value of `c`. `estimate` and `intervals`
/// are `None` when fitting or the bootstrap failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub sim: usize,
    pub c: f64,
    pub estimate: Option<(f64, f64)>,
    pub intervals: Option<IntervalSummary>,
    pub error: Option<String>,
}

impl SimRecord {
    pub fn estimate_is_infinite(&self) -> bool {
        self.estimate.is_some_and(|(l, u)| !(l.is_finite() && u.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub config: ExperimentConfig,
    pub truths: Vec<TruthResult>,
    /// Simulation-major, `c`-minor.
    pub records: Vec<SimRecord>,
}

impl SimulationRun {
    pub fn records_at(&self, k: usize) -> impl Iterator<Item = &SimRecord> {
        let m = self.config.c_grid.len();
        self.records.iter().skip(k).step_by(m)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Bootstrap seed of simulation `sim`.
pub fn bootstrap_seed(seed: u64, sim: usize) -> u64 {
    splitmix(splitmix(seed) ^ sim as u64)
}

struct Fitted {
    x: DMatrix<f64>,
    propensity: PropensityModel,
    grid: QuantileGridModel,
}

fn fit_nuisance(sample: &Sample) -> Result<Fitted> {
    let x = sample.covariates();
    let propensity = fit_logistic(&x, &sample.z)?;
    let e = propensity.predict(&x);
    let grid = fit_ipw_quantile_grid(&x, &sample.z, &sample.y, &e, IpwEstimand::Ate)?;
    Ok(Fitted { x, propensity, grid })
}

fn bounds_over_grid(
    sample: &Sample,
    fitted: &Fitted,
    e: &[f64],
    c_grid: &[f64],
    support: OutcomeSupport,
    weights: Option<&[f64]>,
) -> Result<Vec<(f64, f64)>> {
    let rows = ipw_quantile_rows(&fitted.grid, &fitted.x, &sample.z, e, IpwEstimand::Ate);
    c_grid
        .iter()
        .map(|&c| {
            ipw_bounds_weighted(
                &sample.z,
                &sample.y,
                e,
                &IpwSensitivity::CDependence(c),
                IpwEstimand::Ate,
                Conditioning::Predicted { rows: &rows, support },
                weights,
            )
            .map(|b| b.interval())
        })
        .collect()
}

/// Bound estimates and bootstrap intervals per `c`.
pub type SampleAnalysis = (Vec<(f64, f64)>, Vec<BootstrapResult>);

/// Bound estimates and bootstrap intervals of one simulated sample for every
/// `c`. The quantile grid is fitted once; each bootstrap draw takes one
/// Newton step from the full-sample propensity fit.
pub fn analyze_sample(
    sample: &Sample,
    c_grid: &[f64],
    b: usize,
    seed: u64,
    support: OutcomeSupport,
) -> Result<SampleAnalysis> {
    let fitted = fit_nuisance(sample)?;
    let e = fitted.propensity.predict(&fitted.x);
    let estimates = bounds_over_grid(sample, &fitted, &e, c_grid, support, None)?;
    let intervals = percentile_bootstrap_multi(sample.len(), b, seed, c_grid.len(), |counts| {
        let model = one_step_update(&fitted.propensity, &fitted.x, &sample.z, counts)?;
        let e = model.predict(&fitted.x);
        bounds_over_grid(sample, &fitted, &e, c_grid, support, Some(counts))
    })?;
    Ok((estimates, intervals))
}

fn simulate_one(config: &ExperimentConfig, sim: usize) -> Vec<SimRecord> {
    let sample = dgp_sample_stream(config.n, config.eta, config.seed, sim as u64);
    let seed = bootstrap_seed(config.seed, sim);
    let record = |k: usize, estimate, intervals, error| SimRecord { sim, c: config.c_grid[k], estimate, intervals, error };
    match analyze_sample(&sample, &config.c_grid, config.b, seed, config.support) {
        Ok((estimates, intervals)) => estimates
            .into_iter()
            .zip(intervals)
            .enumerate()
            .map(|(k, (est, ci))| record(k, Some(est), Some(ci.into()), None))
            .collect(),
        Err(err) => (0..config.c_grid.len()).map(|k| record(k, None, None, Some(err.to_string()))).collect(),
    }
}

/// Truth per `c` of the grid.
pub fn truths(config: &ExperimentConfig) -> Vec<TruthResult> {
    config
        .c_grid
        .iter()
        .map(|&c| true_bounds_c_dependence_eta(c, config.eta, config.truth_draws, config.seed))
        .collect()
}

/// Runs every simulation in parallel; the output does not depend on the
/// number of worker threads.
pub fn run_simulations(config: &ExperimentConfig) -> Result<SimulationRun> {
    config.validate()?;
    let records = (0..config.sims)
        .into_par_iter()
        .flat_map_iter(|sim| simulate_one(config, sim))
        .collect();
    Ok(SimulationRun { config: config.clone(), truths: truths(config), records })
}

/// Coverage row in the layout `C | Set | LB | UB`, with percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub c: f64,
    pub set: f64,
    /// Two-sided 95% intervals for each bound.
    pub lb: f64,
    pub ub: f64,
    /// One-sided 95% limits for each bound.
    pub lb_one_sided: f64,
    pub ub_one_sided: f64,
    /// Simulations with at least one infinite bound estimate.
    pub pct_unbounded_estimate: f64,
    /// Simulations whose set interval has an infinite endpoint.
    pub pct_unbounded_ci: f64,
    pub n_sims: usize,
    pub n_failed: usize,
}

fn pct(k: usize, n: usize) -> f64 {
    if n == 0 { f64::NAN } else { 100.0 * k as f64 / n as f64 }
}

pub fn coverage_table(run: &SimulationRun) -> Vec<CoverageRow> {
    run.truths
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let (lo, hi) = (t.psi_lower, t.psi_upper);
            let ok: Vec<&IntervalSummary> = run.records_at(k).filter_map(|r| r.intervals.as_ref()).collect();
            let n = ok.len();
            let count = |f: &dyn Fn(&IntervalSummary) -> bool| ok.iter().filter(|s| f(s)).count();
            let unbounded = run.records_at(k).filter(|r| r.estimate_is_infinite()).count();
            CoverageRow {
                c: t.c,
                set: pct(count(&|s| s.set_ci.0 <= lo && s.set_ci.1 >= hi), n),
                lb: pct(count(&|s| s.lb_ci.0 <= lo && lo <= s.lb_ci.1), n),
                ub: pct(count(&|s| s.ub_ci.0 <= hi && hi <= s.ub_ci.1), n),
                lb_one_sided: pct(count(&|s| s.lb_one_sided <= lo), n),
                ub_one_sided: pct(count(&|s| s.ub_one_sided >= hi), n),
                pct_unbounded_estimate: pct(unbounded, n),
                pct_unbounded_ci: pct(count(&|s| !(s.set_ci.0.is_finite() && s.set_ci.1.is_finite())), n),
                n_sims: run.config.sims,
                n_failed: run.config.sims - n,
            }
        })
        .collect()
}

/// Bound-tracking row: mean and median estimates against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Figure1Row {
    pub c: f64,
    pub mean_lb: f64,
    pub mean_ub: f64,
    pub median_lb: f64,
    pub median_ub: f64,
    pub true_lb: f64,
    pub true_ub: f64,
    pub pct_infinite: f64,
}

/// Mean of the finite values.
pub fn finite_mean(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    finite.iter().sum::<f64>() / finite.len() as f64
}

/// Sample median with infinities kept in place: infinite once at least half
/// of the values are.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 || v[m - 1] == v[m] {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn figure1_table(run: &SimulationRun) -> Vec<Figure1Row> {
    run.truths
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let est: Vec<(f64, f64)> = run.records_at(k).filter_map(|r| r.estimate).collect();
            let lows: Vec<f64> = est.iter().map(|e| e.0).collect();
            let ups: Vec<f64> = est.iter().map(|e| e.1).collect();
            let infinite = run.records_at(k).filter(|r| r.estimate_is_infinite()).count();
            Figure1Row {
                c: t.c,
                mean_lb: finite_mean(&lows),
                mean_ub: finite_mean(&ups),
                median_lb: median(&lows),
                median_ub: median(&ups),
                true_lb: t.psi_lower,
                true_ub: t.psi_upper,
                pct_infinite: pct(infinite, est.len()),
            }
        })
        .collect()
}

/// Simulations plus the coverage table.
pub fn coverage_experiment(config: &ExperimentConfig) -> Result<(SimulationRun, Vec<CoverageRow>)> {
    let run = run_simulations(config)?;
    let table = coverage_table(&run);
    Ok((run, table))
}

/// Simulations plus the bound-tracking table.
pub fn figure1_run(config: &ExperimentConfig) -> Result<(SimulationRun, Vec<Figure1Row>)> {
    let run = run_simulations(config)?;
    let table = figure1_table(&run);
    Ok((run, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            c_grid: vec![0.0, 0.05],
            sims: 3,
            n: 300,
            b: 20,
            eta: DEFAULT_ETA,
            seed,
            truth_draws: 10_000,
            support: OutcomeSupport::Unbounded,
        }
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert_eq!(median(&[1.0, f64::INFINITY, 2.0]), 2.0);
        assert_eq!(median(&[1.0, f64::INFINITY]), f64::INFINITY);
        assert_eq!(median(&[f64::INFINITY, f64::INFINITY]), f64::INFINITY);
        assert_eq!(finite_mean(&[1.0, f64::INFINITY, 3.0]), 2.0);
    }

    #[test]
    fn runs_are_reproducible() {
        let a = run_simulations(&small(11)).unwrap();
        let b = run_simulations(&small(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 6);
        assert_eq!(a.records_at(1).map(|r| r.sim).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn zero_c_collapses_to_point_estimate() {
        let run = run_simulations(&small(5)).unwrap();
        for r in run.records_at(0) {
            let (l, u) = r.estimate.unwrap();
            assert!((u - l).abs() < 1e-10);
            assert!((l - 2.0).abs() < 0.6, "{l}");
        }
        for r in run.records_at(1) {
            let (l, u) = r.estimate.unwrap();
            assert!(u > l);
        }
    }

    #[test]
    fn tables_have_one_row_per_c() {
        let run = run_simulations(&small(2)).unwrap();
        let cov = coverage_table(&run);
        let fig = figure1_table(&run);
        assert_eq!(cov.len(), 2);
        assert_eq!(fig.len(), 2);
        assert!(cov.iter().all(|r| (0.0..=100.0).contains(&r.set) && r.n_failed == 0));
        assert!(fig[0].true_lb == fig[0].true_ub);
    }

    #[test]
    fn invalid_grid_is_rejected() {
        let mut c = small(1);
        c.c_grid = vec![-0.1];
        assert!(run_simulations(&c).is_err());
        c.c_grid.clear();
        assert!(run_simulations(&c).is_err());
    }
}
