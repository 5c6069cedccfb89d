//! `simulate`, `coverage`, `figure1`, `truth` and `oracle-check`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use sharpbounds::oracle::{lp_sharp_bound, random_instance};
use sharpbounds::simlab::truth::true_bounds_c_dependence_eta;
use sharpbounds::simlab::{coverage_table, figure1_table, run_simulations, CoverageRow, ExperimentConfig, Figure1Row, SimulationRun, TruthResult, DEFAULT_ETA};
use sharpbounds::{discrete_quantile, sharp_bound, BalanceLevel, Direction};

use crate::output::{fmt_num, write_csv, Num};

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        bail!("invalid c grid: empty");
    }
    if let Some(c) = grid.iter().find(|c| !(c.is_finite() && **c >= 0.0 && **c < 1.0)) {
        bail!("invalid c grid: {c} is outside [0, 1)");
    }
    Ok(())
}

pub fn simulate(config: &ExperimentConfig) -> Result<SimulationRun> {
    check_grid(&config.c_grid)?;
    Ok(run_simulations(config)?)
}

fn opt_pair(p: Option<(f64, f64)>) -> [String; 2] {
    let (a, b) = p.unwrap_or((f64::NAN, f64::NAN));
    [fmt_num(a), fmt_num(b)]
}

pub fn write_records(dir: &Path, run: &SimulationRun) -> Result<PathBuf> {
    let header = [
        "sim", "c", "est_lb", "est_ub", "set_lo", "set_hi", "lb_lo", "lb_hi", "ub_lo", "ub_hi", "lb_one_sided",
        "ub_one_sided", "n_infinite_draws", "n_failed_draws", "error",
    ];
    let rows: Vec<Vec<String>> = run
        .records
        .iter()
        .map(|r| {
            let ci = r.intervals.as_ref();
            let mut row = vec![r.sim.to_string(), fmt_num(r.c)];
            row.extend(opt_pair(r.estimate));
            row.extend(opt_pair(ci.map(|c| c.set_ci)));
            row.extend(opt_pair(ci.map(|c| c.lb_ci)));
            row.extend(opt_pair(ci.map(|c| c.ub_ci)));
            row.push(fmt_num(ci.map_or(f64::NAN, |c| c.lb_one_sided)));
            row.push(fmt_num(ci.map_or(f64::NAN, |c| c.ub_one_sided)));
            row.push(ci.map_or(String::new(), |c| c.n_infinite.to_string()));
            row.push(ci.map_or(String::new(), |c| c.n_failed.to_string()));
            row.push(r.error.clone().unwrap_or_default());
            row
        })
        .collect();
    write_csv(dir, "records.csv", &header, &rows)
}

pub fn write_coverage(dir: &Path, table: &[CoverageRow]) -> Result<PathBuf> {
    let header = [
        "c", "set", "lb", "ub", "lb_one_sided", "ub_one_sided", "pct_unbounded_estimate", "pct_unbounded_ci",
        "n_sims", "n_failed",
    ];
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            let mut row: Vec<String> = [r.c, r.set, r.lb, r.ub, r.lb_one_sided, r.ub_one_sided, r.pct_unbounded_estimate, r.pct_unbounded_ci]
                .into_iter()
                .map(fmt_num)
                .collect();
            row.push(r.n_sims.to_string());
            row.push(r.n_failed.to_string());
            row
        })
        .collect();
    write_csv(dir, "coverage.csv", &header, &rows)
}

pub const FIGURE1_HEADER: [&str; 8] = ["c", "mean_lb", "mean_ub", "median_lb", "median_ub", "true_lb", "true_ub", "pct_infinite"];

pub fn write_figure1(dir: &Path, table: &[Figure1Row]) -> Result<PathBuf> {
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            [r.c, r.mean_lb, r.mean_ub, r.median_lb, r.median_ub, r.true_lb, r.true_ub, r.pct_infinite]
                .into_iter()
                .map(fmt_num)
                .collect()
        })
        .collect();
    write_csv(dir, "figure1.csv", &FIGURE1_HEADER, &rows)
}

pub fn print_coverage(table: &[CoverageRow]) {
    println!("CI coverage (target 95%)");
    println!("   C    Set     LB     UB  LB(1s)  UB(1s)  unbounded");
    for r in table {
        println!(
            "{:.2}  {:5.1}  {:5.1}  {:5.1}  {:6.1}  {:6.1}  {:9.1}",
            r.c, r.set, r.lb, r.ub, r.lb_one_sided, r.ub_one_sided, r.pct_unbounded_estimate
        );
    }
}

pub fn coverage(run: &SimulationRun) -> Vec<CoverageRow> {
    coverage_table(run)
}

pub fn figure1(run: &SimulationRun) -> Vec<Figure1Row> {
    figure1_table(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthParams {
    pub c_grid: Vec<f64>,
    pub draws: usize,
    pub eta: f64,
}

impl Default for TruthParams {
    fn default() -> Self {
        Self { c_grid: vec![0.0, 0.05, 0.1], draws: 1_000_000, eta: DEFAULT_ETA }
    }
}

pub fn truth(p: &TruthParams, seed: u64) -> Result<Vec<TruthResult>> {
    check_grid(&p.c_grid)?;
    Ok(p.c_grid.iter().map(|&c| true_bounds_c_dependence_eta(c, p.eta, p.draws, seed)).collect())
}

pub fn write_truth(dir: &Path, rows: &[TruthResult]) -> Result<PathBuf> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|t| vec![fmt_num(t.c), fmt_num(t.psi_lower), fmt_num(t.psi_upper), t.infinite.to_string(), t.mc_draws.to_string()])
        .collect();
    write_csv(dir, "truth.csv", &["c", "psi_lower", "psi_upper", "infinite", "mc_draws"], &body)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    pub instances: u64,
    pub max_groups: usize,
    pub max_support: usize,
    /// Shift added to every balancing level (mutation check).
    pub tau_offset: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { instances: 1000, max_groups: 20, max_support: 10, tau_offset: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub instances: u64,
    pub max_discrepancy: Num,
    pub worst_instance: Option<u64>,
    pub tolerance: Num,
}

pub const ORACLE_TOL: f64 = 1e-9;

pub fn oracle_check(p: &OracleParams, seed: u64) -> Result<OracleReport> {
    let mut worst = 0.0;
    let mut worst_instance = None;
    for k in 0..p.instances {
        let instance = seed.wrapping_add(k);
        let (dist, band) = random_instance(instance, p.max_groups, p.max_support);
        for dir in [Direction::Upper, Direction::Lower] {
            let problem = dist.to_problem(&band, dir)?;
            let quantiles = if p.tau_offset == 0.0 {
                problem.exact_quantiles()
            } else {
                problem
                    .group_cells()
                    .iter()
                    .zip(problem.group_levels())
                    .map(|(cell, level)| match level {
                        BalanceLevel::Degenerate => 0.0,
                        BalanceLevel::Level(t) => {
                            let (v, w): (Vec<f64>, Vec<f64>) = cell.iter().copied().unzip();
                            discrete_quantile(&v, &w, (t + p.tau_offset).clamp(0.0, 1.0)).unwrap_or(0.0)
                        }
                    })
                    .collect()
            };
            let closed = sharp_bound(&problem, &quantiles).map_or(f64::INFINITY, |r| r.value);
            let lp = lp_sharp_bound(&dist, &band, dir)?;
            let gap = (closed - lp).abs();
            if gap > worst || gap.is_nan() {
                worst = gap;
                worst_instance = Some(instance);
            }
        }
    }
    Ok(OracleReport {
        instances: p.instances,
        max_discrepancy: Num(worst),
        worst_instance: worst_instance.filter(|_| worst > 0.0),
        tolerance: Num(ORACLE_TOL),
    })
}
