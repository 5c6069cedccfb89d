//! Command-line driver: data analyses, the simulation study and solver checks.

mod analyze;
mod data;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sharpbounds::applications::OutcomeSupport;
use sharpbounds::simlab::{default_c_grid, ExperimentConfig, DEFAULT_ETA};

use analyze::{IpwConditioning, IpwParams, IpwTarget, OlsParams, RdParams, RdTarget};
use experiments::{OracleParams, TruthParams};
use output::{fmt_num, write_json, Manifest};

#[derive(Parser, Debug)]
#[command(name = "sharpbounds", version, about = "Sharp sensitivity bounds for linear causal estimands")]
struct Cli {
    /// JSON file with parameters for the command; flags take precedence.
    #[arg(long, global = true, env = "SHARPBOUNDS_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "SHARPBOUNDS_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "SHARPBOUNDS_OUT", default_value = ".")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SHARPBOUNDS_THREADS")]
    threads: Option<usize>,
    /// 1000 simulations and 1000 bootstrap draws.
    #[arg(long, global = true, env = "SHARPBOUNDS_PAPER_SCALE")]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bounds on an inverse-propensity-weighted estimand.
    AnalyzeIpw(IpwArgs),
    /// Bounds on a regression-discontinuity effect under manipulation.
    AnalyzeRd(RdArgs),
    /// Bounds on a linear contrast of OLS coefficients.
    AnalyzeOls(OlsArgs),
    /// Simulation study: per-simulation records plus both summary tables.
    Simulate(SimArgs),
    /// Simulation study: coverage table.
    Coverage(SimArgs),
    /// Simulation study: mean and median bound estimates against the truth.
    Figure1(SimArgs),
    /// True identified sets of the simulation design.
    Truth(TruthArgs),
    /// Compare the closed-form bounds with the linear-program oracle.
    OracleCheck(OracleArgs),
}

#[derive(Args, Debug)]
struct IpwArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, value_enum)]
    estimand: Option<IpwTarget>,
    #[arg(long, value_enum)]
    conditioning: Option<IpwConditioning>,
    #[arg(long, value_enum)]
    support: Option<SupportArg>,
    #[arg(long, env = "SHARPBOUNDS_BOOTSTRAP")]
    bootstrap: Option<usize>,
}

#[derive(Args, Debug)]
struct RdArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    lambda1_minus: Option<f64>,
    #[arg(long)]
    lambda1_plus: Option<f64>,
    #[arg(long)]
    lambda0_minus: Option<f64>,
    #[arg(long)]
    lambda0_plus: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    estimand: Option<RdTarget>,
    #[arg(long, env = "SHARPBOUNDS_BOOTSTRAP")]
    bootstrap: Option<usize>,
}

#[derive(Args, Debug)]
struct OlsArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated contrast over the regressors.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta: Option<Vec<f64>>,
    #[arg(long)]
    w_lower: Option<f64>,
    #[arg(long)]
    w_upper: Option<f64>,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    no_intercept: bool,
    #[arg(long, env = "SHARPBOUNDS_BOOTSTRAP")]
    bootstrap: Option<usize>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum SupportArg {
    Unbounded,
    Observed,
}

impl From<SupportArg> for OutcomeSupport {
    fn from(s: SupportArg) -> Self {
        match s {
            SupportArg::Unbounded => OutcomeSupport::Unbounded,
            SupportArg::Observed => OutcomeSupport::Observed,
        }
    }
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Comma-separated values of c.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long, env = "SHARPBOUNDS_SIMS")]
    sims: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, env = "SHARPBOUNDS_BOOTSTRAP")]
    bootstrap: Option<usize>,
    #[arg(long)]
    truth_draws: Option<usize>,
    #[arg(long, value_enum)]
    support: Option<SupportArg>,
}

#[derive(Args, Debug)]
struct TruthArgs {
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    instances: Option<u64>,
    #[arg(long, hide = true, allow_hyphen_values = true)]
    tau_offset: Option<f64>,
}

/// Simulation parameters as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct SimParams {
    c_grid: Vec<f64>,
    sims: usize,
    n: usize,
    bootstrap: usize,
    eta: f64,
    truth_draws: usize,
    support: OutcomeSupport,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            c_grid: default_c_grid(),
            sims: 500,
            n: 2000,
            bootstrap: 500,
            eta: DEFAULT_ETA,
            truth_draws: 1_000_000,
            support: OutcomeSupport::Unbounded,
        }
    }
}

/// A config file: command parameters plus an optional seed.
#[derive(Deserialize)]
struct ConfigFile<P> {
    seed: Option<u64>,
    #[serde(flatten)]
    params: P,
}

fn load<P: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(P, Option<u64>)> {
    let Some(path) = path else {
        return Ok((P::default(), None));
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let file: ConfigFile<P> =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    Ok((file.params, file.seed))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

const DEFAULT_SEED: u64 = 1;

struct Run<'a> {
    cli: &'a Cli,
    seed: u64,
    outputs: Vec<String>,
}

impl Run<'_> {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = write_json(&self.cli.out, name, value)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    fn record(&mut self, path: PathBuf) {
        self.outputs.push(path.display().to_string());
    }

    fn finish<P: Serialize>(mut self, command: &str, config: &P) -> Result<()> {
        let manifest_path = self.cli.out.join("manifest.json");
        self.outputs.push(manifest_path.display().to_string());
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            threads: self.cli.threads,
            paper_scale: self.cli.paper_scale,
            config,
            outputs: self.outputs,
        };
        write_json(&self.cli.out, "manifest.json", &manifest)?;
        Ok(())
    }
}

fn print_report(r: &output::Report) {
    println!("{}: [{}, {}]", r.estimand, fmt_num(r.lower.0), fmt_num(r.upper.0));
    println!("set CI: [{}, {}]", fmt_num(r.set_ci[0].0), fmt_num(r.set_ci[1].0));
}

fn sim_config(cli: &Cli, args: &SimArgs) -> Result<ExperimentConfig> {
    let (mut p, file_seed) = load::<SimParams>(cli.config.as_deref())?;
    if cli.paper_scale {
        p.sims = 1000;
        p.bootstrap = 1000;
    }
    set(&mut p.c_grid, args.c_grid.clone());
    set(&mut p.sims, args.sims);
    set(&mut p.n, args.n);
    set(&mut p.bootstrap, args.bootstrap);
    set(&mut p.truth_draws, args.truth_draws);
    set(&mut p.support, args.support.map(Into::into));
    Ok(ExperimentConfig {
        c_grid: p.c_grid,
        sims: p.sims,
        n: p.n,
        b: p.bootstrap,
        eta: p.eta,
        seed: resolve_seed(cli, file_seed),
        truth_draws: p.truth_draws,
        support: p.support,
    })
}

fn resolve_seed(cli: &Cli, file_seed: Option<u64>) -> u64 {
    cli.seed.or(file_seed).unwrap_or(DEFAULT_SEED)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let config_path = cli.config.as_deref();
    match &cli.command {
        Command::AnalyzeIpw(a) => {
            let (mut p, fs) = load::<IpwParams>(config_path)?;
            set(&mut p.data, a.data.clone().map(Some));
            set(&mut p.c, a.c);
            set(&mut p.estimand, a.estimand);
            set(&mut p.conditioning, a.conditioning);
            set(&mut p.support, a.support.map(Into::into));
            set(&mut p.bootstrap, a.bootstrap);
            let mut r = Run { cli, seed: resolve_seed(cli, fs), outputs: vec![] };
            let report = analyze::run_ipw(&p, r.seed)?;
            print_report(&report);
            r.json("report.json", &report)?;
            r.finish("analyze-ipw", &p)?;
        }
        Command::AnalyzeRd(a) => {
            let (mut p, fs) = load::<RdParams>(config_path)?;
            set(&mut p.data, a.data.clone().map(Some));
            set(&mut p.cutoff, a.cutoff);
            set(&mut p.bandwidth, a.bandwidth.map(Some));
            set(&mut p.lambda1_minus, a.lambda1_minus);
            set(&mut p.lambda1_plus, a.lambda1_plus);
            set(&mut p.lambda0_minus, a.lambda0_minus);
            set(&mut p.lambda0_plus, a.lambda0_plus);
            set(&mut p.tau, a.tau.map(Some));
            set(&mut p.estimand, a.estimand);
            set(&mut p.bootstrap, a.bootstrap);
            let mut r = Run { cli, seed: resolve_seed(cli, fs), outputs: vec![] };
            let report = analyze::run_rd(&p, r.seed)?;
            print_report(&report);
            r.json("report.json", &report)?;
            r.finish("analyze-rd", &p)?;
        }
        Command::AnalyzeOls(a) => {
            let (mut p, fs) = load::<OlsParams>(config_path)?;
            set(&mut p.data, a.data.clone().map(Some));
            set(&mut p.delta, a.delta.clone());
            set(&mut p.w_lower, a.w_lower);
            set(&mut p.w_upper, a.w_upper);
            set(&mut p.groups, a.groups.clone().map(Some));
            set(&mut p.bootstrap, a.bootstrap);
            if a.no_intercept {
                p.intercept = false;
            }
            let mut r = Run { cli, seed: resolve_seed(cli, fs), outputs: vec![] };
            let report = analyze::run_ols(&p, r.seed)?;
            print_report(&report);
            r.json("report.json", &report)?;
            r.finish("analyze-ols", &p)?;
        }
        Command::Simulate(a) | Command::Coverage(a) | Command::Figure1(a) => {
            let config = sim_config(cli, a)?;
            let run = experiments::simulate(&config)?;
            let mut r = Run { cli, seed: config.seed, outputs: vec![] };
            let (name, records, cov, fig) = match &cli.command {
                Command::Simulate(_) => ("simulate", true, true, true),
                Command::Coverage(_) => ("coverage", false, true, false),
                _ => ("figure1", false, false, true),
            };
            if records {
                r.record(experiments::write_records(&cli.out, &run)?);
            }
            if cov {
                let table = experiments::coverage(&run);
                experiments::print_coverage(&table);
                r.record(experiments::write_coverage(&cli.out, &table)?);
            }
            if fig {
                let table = experiments::figure1(&run);
                r.record(experiments::write_figure1(&cli.out, &table)?);
            }
            r.finish(name, &config)?;
        }
        Command::Truth(a) => {
            let (mut p, fs) = load::<TruthParams>(config_path)?;
            set(&mut p.c_grid, a.c_grid.clone());
            set(&mut p.draws, a.draws);
            let mut r = Run { cli, seed: resolve_seed(cli, fs), outputs: vec![] };
            let rows = experiments::truth(&p, r.seed)?;
            for t in &rows {
                println!("c = {}: [{}, {}]", t.c, fmt_num(t.psi_lower), fmt_num(t.psi_upper));
            }
            r.record(experiments::write_truth(&cli.out, &rows)?);
            r.finish("truth", &p)?;
        }
        Command::OracleCheck(a) => {
            let (mut p, fs) = load::<OracleParams>(config_path)?;
            set(&mut p.instances, a.instances);
            set(&mut p.tau_offset, a.tau_offset);
            let mut r = Run { cli, seed: resolve_seed(cli, fs), outputs: vec![] };
            let report = experiments::oracle_check(&p, r.seed)?;
            println!(
                "{} instances, max |closed form - LP| = {}",
                report.instances,
                fmt_num(report.max_discrepancy.0)
            );
            r.json("oracle_check.json", &report)?;
            r.finish("oracle-check", &p)?;
            if report.max_discrepancy.0 > experiments::ORACLE_TOL || report.max_discrepancy.0.is_nan() {
                eprintln!("discrepancy exceeds {}", experiments::ORACLE_TOL);
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
