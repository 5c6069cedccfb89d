//! `analyze-ipw`, `analyze-rd` and `analyze-ols`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sharpbounds::applications::ipw::{
    arm_cells, fit_ipw_quantile_grid, ipw_bounds_weighted, ipw_quantile_rows, Arm, IpwEstimand, IpwSensitivity,
};
use sharpbounds::applications::ols::{ols_bounds, ols_coefficients, OlsConfig};
use sharpbounds::applications::rd::{rd_cate_bounds, rd_catt_bounds, rd_clate_bounds, RdBounds, RdConfig};
use sharpbounds::applications::{Conditioning, EstimandBounds, OutcomeSupport};
use sharpbounds::inference::{percentile_bootstrap, BootstrapResult};
use sharpbounds::nuisance::{fit_logistic, one_step_update};

use crate::data::{check_binary, Table};
use crate::output::{pair, Diagnostics, Num, Report};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddsRatioBand {
    pub l1: f64,
    pub u1: f64,
    pub l0: f64,
    pub u0: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum IpwTarget {
    #[default]
    Ate,
    Apo1,
    Apo0,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum IpwConditioning {
    /// Per-observation quantiles from the quantile-regression grid.
    #[default]
    Predicted,
    /// Exact quantiles within each treatment arm.
    Arms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpwParams {
    pub data: Option<PathBuf>,
    pub treatment: String,
    pub outcome: String,
    /// Covariate columns; every column starting with `x` when absent.
    pub covariates: Option<Vec<String>>,
    pub c: f64,
    /// Replaces c-dependence when present.
    pub odds_ratio: Option<OddsRatioBand>,
    pub estimand: IpwTarget,
    pub conditioning: IpwConditioning,
    pub support: OutcomeSupport,
    pub bootstrap: usize,
}

impl Default for IpwParams {
    fn default() -> Self {
        Self {
            data: None,
            treatment: "z".into(),
            outcome: "y".into(),
            covariates: None,
            c: 0.0,
            odds_ratio: None,
            estimand: IpwTarget::Ate,
            conditioning: IpwConditioning::Predicted,
            support: OutcomeSupport::Unbounded,
            bootstrap: 500,
        }
    }
}

fn data_path(p: &Option<PathBuf>) -> Result<&PathBuf> {
    p.as_ref().context("no input data: pass --data or set `data` in the config")
}

fn report(estimand: &str, b: &EstimandBounds, ci: Option<&BootstrapResult>, diagnostics: Diagnostics) -> Report {
    let nan = (f64::NAN, f64::NAN);
    Report {
        estimand: estimand.into(),
        lower: Num(b.lower.value),
        upper: Num(b.upper.value),
        plug_in: Num(b.plug_in),
        set_ci: pair(ci.map_or(nan, |c| c.set_ci)),
        lb_ci: pair(ci.map_or(nan, |c| c.lb_ci)),
        ub_ci: pair(ci.map_or(nan, |c| c.ub_ci)),
        lb_one_sided: Num(ci.map_or(f64::NAN, |c| c.lb_one_sided)),
        ub_one_sided: Num(ci.map_or(f64::NAN, |c| c.ub_one_sided)),
        n_infinite_draws: ci.map_or(0, |c| c.n_infinite),
        n_failed_draws: ci.map_or(0, |c| c.n_failed),
        diagnostics,
    }
}

fn bootstrap(n: usize, b: usize, seed: u64, f: impl Fn(&[f64]) -> sharpbounds::Result<(f64, f64)> + Sync) -> Result<Option<BootstrapResult>> {
    if b == 0 {
        return Ok(None);
    }
    Ok(Some(percentile_bootstrap(n, b, seed, f)?))
}

/// Rows repeated according to resampling counts.
fn expand<T: Copy>(values: &[T], counts: &[f64]) -> Vec<T> {
    let mut out = Vec::with_capacity(values.len());
    for (v, &k) in values.iter().zip(counts) {
        for _ in 0..k as usize {
            out.push(*v);
        }
    }
    out
}

pub fn run_ipw(p: &IpwParams, seed: u64) -> Result<Report> {
    let table = Table::from_path(data_path(&p.data)?)?;
    let z = table.column(&p.treatment)?.to_vec();
    let y = table.column(&p.outcome)?.to_vec();
    check_binary(&p.treatment, &z)?;
    let names = table.select(p.covariates.as_deref(), "x")?;
    let x = table.matrix(&names)?;
    let sensitivity = match p.odds_ratio {
        Some(o) => IpwSensitivity::OddsRatio { l1: o.l1, u1: o.u1, l0: o.l0, u0: o.u0 },
        None => IpwSensitivity::CDependence(p.c),
    };
    let estimand = match p.estimand {
        IpwTarget::Ate => IpwEstimand::Ate,
        IpwTarget::Apo1 => IpwEstimand::Apo(Arm::Treated),
        IpwTarget::Apo0 => IpwEstimand::Apo(Arm::Control),
    };
    let model = fit_logistic(&x, &z).context("fitting the propensity model")?;
    let e = model.predict(&x);
    let grid = match p.conditioning {
        IpwConditioning::Predicted => {
            Some(fit_ipw_quantile_grid(&x, &z, &y, &e, estimand).context("fitting the quantile grid")?)
        }
        IpwConditioning::Arms => None,
    };
    let cells = arm_cells(&z);
    let solve = |e: &[f64], weights: Option<&[f64]>| -> sharpbounds::Result<EstimandBounds> {
        let rows;
        let conditioning = match &grid {
            Some(g) => {
                rows = ipw_quantile_rows(g, &x, &z, e, estimand);
                Conditioning::Predicted { rows: &rows, support: p.support }
            }
            None => Conditioning::Cells(&cells),
        };
        ipw_bounds_weighted(&z, &y, e, &sensitivity, estimand, conditioning, weights)
    };
    let bounds = solve(&e, None)?;
    let ci = bootstrap(z.len(), p.bootstrap, seed, |counts| {
        let m = one_step_update(&model, &x, &z, counts)?;
        solve(&m.predict(&x), Some(counts)).map(|b| b.interval())
    })?;
    let mut d = Diagnostics::new();
    d.insert("n", z.len().into());
    d.insert("n_treated", z.iter().filter(|&&v| v == 1.0).count().into());
    d.insert("propensity_min", e.iter().copied().fold(f64::INFINITY, f64::min).into());
    d.insert("propensity_max", e.iter().copied().fold(f64::NEG_INFINITY, f64::max).into());
    d.insert("propensity_coefficients", model.coefficients.clone().into());
    d.insert("propensity_converged", model.converged.into());
    d.insert("covariates", names.join(",").as_str().into());
    d.insert("bootstrap_draws", p.bootstrap.into());
    let name = match p.estimand {
        IpwTarget::Ate => "ate",
        IpwTarget::Apo1 => "apo1",
        IpwTarget::Apo0 => "apo0",
    };
    Ok(report(name, &bounds, ci.as_ref(), d))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RdTarget {
    #[default]
    Cate,
    Catt,
    Clate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RdParams {
    pub data: Option<PathBuf>,
    pub running: String,
    pub outcome: String,
    pub cutoff: f64,
    pub bandwidth: Option<f64>,
    pub lambda1_minus: f64,
    pub lambda1_plus: f64,
    pub lambda0_minus: f64,
    pub lambda0_plus: f64,
    /// Manipulation share; estimated from the density jump when absent.
    pub tau: Option<f64>,
    pub estimand: RdTarget,
    pub bootstrap: usize,
}

impl Default for RdParams {
    fn default() -> Self {
        Self {
            data: None,
            running: "x".into(),
            outcome: "y".into(),
            cutoff: 0.0,
            bandwidth: None,
            lambda1_minus: 1.0,
            lambda1_plus: 1.0,
            lambda0_minus: 1.0,
            lambda0_plus: 1.0,
            tau: None,
            estimand: RdTarget::Cate,
            bootstrap: 500,
        }
    }
}

pub fn run_rd(p: &RdParams, seed: u64) -> Result<Report> {
    let table = Table::from_path(data_path(&p.data)?)?;
    let x = table.column(&p.running)?.to_vec();
    let y = table.column(&p.outcome)?.to_vec();
    let Some(h) = p.bandwidth else {
        bail!("no bandwidth: pass --bandwidth or set `bandwidth` in the config");
    };
    let config = RdConfig {
        cutoff: p.cutoff,
        bandwidth: h,
        lambda1_minus: p.lambda1_minus,
        lambda1_plus: p.lambda1_plus,
        lambda0_minus: p.lambda0_minus,
        lambda0_plus: p.lambda0_plus,
        tau: p.tau,
    };
    let solve = |x: &[f64], y: &[f64]| -> sharpbounds::Result<RdBounds> {
        match p.estimand {
            RdTarget::Cate => rd_cate_bounds(x, y, &config),
            RdTarget::Catt => rd_catt_bounds(x, y, &config),
            RdTarget::Clate => rd_clate_bounds(x, y, &config),
        }
    };
    let fit = solve(&x, &y)?;
    let ci = bootstrap(x.len(), p.bootstrap, seed, |counts| {
        solve(&expand(&x, counts), &expand(&y, counts)).map(|b| b.bounds.interval())
    })?;
    let e = &fit.estimates;
    let mut d = Diagnostics::new();
    d.insert("tau", e.tau.into());
    d.insert("tau0", e.tau0.into());
    d.insert("tau_estimated", p.tau.is_none().into());
    d.insert("mean_above", e.mean_above.into());
    d.insert("mean_below", e.mean_below.into());
    d.insert("n_above", e.n_above.into());
    d.insert("n_below", e.n_below.into());
    d.insert("bootstrap_draws", p.bootstrap.into());
    let name = match p.estimand {
        RdTarget::Cate => "cate",
        RdTarget::Catt => "catt",
        RdTarget::Clate => "clate",
    };
    Ok(report(name, &fit.bounds, ci.as_ref(), d))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OlsParams {
    pub data: Option<PathBuf>,
    pub outcome: String,
    /// Regressor columns; every column starting with `x` when absent.
    pub regressors: Option<Vec<String>>,
    /// Prepend an intercept column.
    pub intercept: bool,
    /// Contrast over the regressors (excluding the intercept).
    pub delta: Vec<f64>,
    pub w_lower: f64,
    pub w_upper: f64,
    /// Numeric column defining conditioning cells; one cell when absent.
    pub groups: Option<String>,
    pub bootstrap: usize,
}

impl Default for OlsParams {
    fn default() -> Self {
        Self {
            data: None,
            outcome: "y".into(),
            regressors: None,
            intercept: true,
            delta: Vec::new(),
            w_lower: 1.0,
            w_upper: 1.0,
            groups: None,
            bootstrap: 500,
        }
    }
}

fn group_keys(values: &[f64]) -> Vec<usize> {
    let mut seen: Vec<u64> = Vec::new();
    values
        .iter()
        .map(|v| {
            let bits = v.to_bits();
            match seen.iter().position(|&b| b == bits) {
                Some(k) => k,
                None => {
                    seen.push(bits);
                    seen.len() - 1
                }
            }
        })
        .collect()
}

pub fn run_ols(p: &OlsParams, seed: u64) -> Result<Report> {
    let table = Table::from_path(data_path(&p.data)?)?;
    let y = table.column(&p.outcome)?.to_vec();
    let names = table.select(p.regressors.as_deref(), "x")?;
    if p.delta.len() != names.len() {
        bail!("delta has {} entries but there are {} regressors ({})", p.delta.len(), names.len(), names.join(", "));
    }
    let raw = table.matrix(&names)?;
    let offset = usize::from(p.intercept);
    let x = DMatrix::from_fn(raw.nrows(), raw.ncols() + offset, |i, j| {
        if j < offset { 1.0 } else { raw[(i, j - offset)] }
    });
    let mut delta = vec![0.0; offset];
    delta.extend(&p.delta);
    let config = OlsConfig {
        delta,
        intercept_column: p.intercept.then_some(0),
        w_lower: p.w_lower,
        w_upper: p.w_upper,
    };
    let groups = match &p.groups {
        Some(name) => Some(group_keys(table.column(name)?)),
        None => None,
    };
    let bounds = ols_bounds(&y, &x, &config, groups.as_deref())?;
    let rows: Vec<usize> = (0..y.len()).collect();
    let ci = bootstrap(y.len(), p.bootstrap, seed, |counts| {
        let idx = expand(&rows, counts);
        let xb = DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)]);
        let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let gb: Option<Vec<usize>> = groups.as_ref().map(|g| idx.iter().map(|&i| g[i]).collect());
        ols_bounds(&yb, &xb, &config, gb.as_deref()).map(|b| b.interval())
    })?;
    let mut d = Diagnostics::new();
    d.insert("n", y.len().into());
    d.insert("coefficients", ols_coefficients(&x, &y)?.into());
    d.insert("regressors", names.join(",").as_str().into());
    d.insert("intercept", p.intercept.into());
    d.insert("bootstrap_draws", p.bootstrap.into());
    Ok(report("contrast", &bounds, ci.as_ref(), d))
}
