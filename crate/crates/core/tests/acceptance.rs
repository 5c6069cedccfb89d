//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass `--paper-scale` for 1000 simulations with 1000
//! bootstrap draws.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharpbounds::applications::ipw::{ipw_ate_bounds, ipw_lambda, IpwEstimand, IpwSensitivity};
use sharpbounds::applications::ols::{ols_bounds, ols_coefficients, OlsConfig};
use sharpbounds::applications::rd::{rd_cate_bounds, RdConfig};
use sharpbounds::applications::Conditioning;
use sharpbounds::nuisance::{fit_logistic, fit_quantile_grid, GRID_SIZE};
use sharpbounds::oracle::{lp_sharp_bound, random_instance, CellBand};
use sharpbounds::simlab::truth::{bound_envelope_normal, true_bounds_c_dependence};
use sharpbounds::simlab::{coverage_table, dgp_sample_stream, figure1_table, run_simulations, ExperimentConfig, DEFAULT_ETA};
use sharpbounds::{optimal_weights, sharp_bound, BoundProblem, Direction, Grouping};

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: u32, pass: bool, what: &str, detail: String, started: Instant) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} criterion {id}: {what} | {detail} | {:.1}s",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
    }
}

fn criterion_1(r: &mut Report) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut tied = 0;
    let n = 1000;
    for seed in 0..n {
        let (dist, band) = random_instance(seed, 20, 10);
        if sharpbounds::oracle::has_ties(&dist) {
            tied += 1;
        }
        for dir in [Direction::Upper, Direction::Lower] {
            let p = dist.to_problem(&band, dir).unwrap();
            let cf = sharp_bound(&p, &p.exact_quantiles()).unwrap().value;
            let lp = lp_sharp_bound(&dist, &band, dir).unwrap();
            worst = worst.max((cf - lp).abs());
        }
    }
    r.record(
        1,
        worst <= 1e-9 && tied > 0,
        "closed form equals LP oracle",
        format!("{n} instances ({tied} with ties), max |diff| = {worst:.3e} (tol 1e-9)"),
        t,
    );
}

fn criterion_2(r: &mut Report) {
    let t = Instant::now();
    let s = dgp_sample_stream(2000, DEFAULT_ETA, 77, 0);
    let x = s.covariates();
    let e = fit_logistic(&x, &s.z).unwrap().predict(&x);
    let ate = ipw_lambda(&s.z, &e, IpwEstimand::Ate).iter().zip(&s.y).map(|(l, y)| l * y).sum::<f64>() / s.len() as f64;
    let keys: Vec<usize> = s.z.iter().map(|&z| z as usize).collect();
    let ipw = ipw_ate_bounds(&s.z, &s.y, &e, &IpwSensitivity::CDependence(0.0), Conditioning::Cells(&keys)).unwrap();
    let ipw_err = (ipw.lower.value - ate).abs().max((ipw.upper.value - ate).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rx: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ry: Vec<f64> = rx.iter().map(|&x| if x > 0.0 { 1.5 } else { 0.0 } + x + rng.random::<f64>()).collect();
    let rd = rd_cate_bounds(&rx, &ry, &RdConfig { tau: Some(0.0), ..RdConfig::exogenous(0.0, 0.5) }).unwrap();
    let diff = rd.estimates.mean_above - rd.estimates.mean_below;
    let rd_err = (rd.bounds.lower.value - diff).abs().max((rd.bounds.upper.value - diff).abs());

    let ox = DMatrix::from_fn(500, 3, |i, j| if j == 0 { 1.0 } else { ((i * (j + 3)) as f64 * 0.173).sin() });
    let oy: Vec<f64> = (0..500).map(|i| 1.0 + 2.0 * ox[(i, 1)] - ox[(i, 2)] + rng.random::<f64>()).collect();
    let beta = ols_coefficients(&ox, &oy).unwrap();
    let cfg = OlsConfig { delta: vec![0.0, 1.0, 2.0], intercept_column: Some(0), w_lower: 1.0, w_upper: 1.0 };
    let ols = ols_bounds(&oy, &ox, &cfg, None).unwrap();
    let target = beta[1] + 2.0 * beta[2];
    let ols_err = (ols.lower.value - target).abs().max((ols.upper.value - target).abs());

    let worst = ipw_err.max(rd_err).max(ols_err);
    r.record(
        2,
        worst <= 1e-10,
        "identity bands reproduce point estimates",
        format!("|err| ipw {ipw_err:.2e}, rd {rd_err:.2e}, ols {ols_err:.2e} (tol 1e-10)"),
        t,
    );
}

fn criterion_3(r: &mut Report) {
    let t = Instant::now();
    let draws = 1_000_000;
    let t0 = true_bounds_c_dependence(0.0, draws, 2024);
    let t10 = true_bounds_c_dependence(0.10, draws, 2024);
    let t11 = true_bounds_c_dependence(0.11, draws, 2024);
    let near = |v: f64, target: f64| (v - target).abs() <= 0.01;
    let pass = near(t0.psi_lower, 2.0)
        && near(t0.psi_upper, 2.0)
        && near(t10.psi_lower, 1.5)
        && near(t10.psi_upper, 2.5)
        && t11.infinite;
    r.record(
        3,
        pass,
        "true identified sets",
        format!(
            "c=0: ({:.4}, {:.4}) target (2.00, 2.00); c=0.10: ({:.4}, {:.4}) target (1.50, 2.50); c=0.11 infinite: {} (tol 0.01)",
            t0.psi_lower, t0.psi_upper, t10.psi_lower, t10.psi_upper, t11.infinite
        ),
        t,
    );
}

fn simulation_criteria(r: &mut Report, paper_scale: bool) {
    let t = Instant::now();
    let config = if paper_scale { ExperimentConfig::paper_scale(1) } else { ExperimentConfig::desk(1) };
    let run = run_simulations(&config).unwrap();
    let coverage = coverage_table(&run);
    let figure = figure1_table(&run);
    println!("coverage ({} sims, n = {}, B = {}):", config.sims, config.n, config.b);
    println!("   c    set     lb     ub  lb_1s  ub_1s  unb_est  unb_ci  failed");
    for row in &coverage {
        println!(
            "{:.2}  {:5.1}  {:5.1}  {:5.1}  {:5.1}  {:5.1}  {:7.1}  {:6.1}  {:6}",
            row.c, row.set, row.lb, row.ub, row.lb_one_sided, row.ub_one_sided, row.pct_unbounded_estimate,
            row.pct_unbounded_ci, row.n_failed
        );
    }
    println!("bound tracking:");
    println!("   c   mean_lb  mean_ub  med_lb  med_ub  true_lb  true_ub  pct_inf");
    for row in &figure {
        println!(
            "{:.2}  {:7.4}  {:7.4}  {:6.4}  {:6.4}  {:7.4}  {:7.4}  {:7.1}",
            row.c, row.mean_lb, row.mean_ub, row.median_lb, row.median_ub, row.true_lb, row.true_ub, row.pct_infinite
        );
    }
    let at = |c: f64| coverage.iter().find(|row| (row.c - c).abs() < 1e-12).unwrap();

    let targets = [(0.0, 94.1), (0.05, 94.9), (0.10, 98.3)];
    let pass4 = targets.iter().all(|&(c, target)| (at(c).set - target).abs() <= 2.5);
    let detail4 = targets
        .iter()
        .map(|&(c, target)| format!("c={c:.2}: {:.1} vs {target}", at(c).set))
        .collect::<Vec<_>>()
        .join(", ");
    r.record(4, pass4, "set CI coverage", format!("{detail4} (tol 2.5 pp)"), t);

    let rate = at(0.10).pct_unbounded_estimate;
    r.record(
        5,
        (rate - 20.6).abs() <= 5.0,
        "unbounded estimate rate at c = 0.10",
        format!("{rate:.1}% vs 20.6% (tol 5 pp)"),
        t,
    );

    let mut worst: f64 = 0.0;
    for row in figure.iter().filter(|row| row.c <= 0.06 + 1e-12) {
        worst = worst.max((row.median_lb - row.true_lb).abs()).max((row.median_ub - row.true_ub).abs());
    }
    r.record(
        6,
        worst <= 0.05,
        "median estimates track the truth for c <= 0.06",
        format!("max |median - truth| = {worst:.4} (tol 0.05)"),
        t,
    );
}

fn criterion_7(r: &mut Report) {
    let t = Instant::now();
    let draws = 200_000;
    let mut dominated = true;
    let mut slack = f64::INFINITY;
    for k in 1..=9 {
        let c = k as f64 / 100.0;
        let truth = true_bounds_c_dependence(c, draws, 7);
        for eps in [0.1, 0.5, 0.9] {
            let env = bound_envelope_normal(c, eps, draws, 7);
            let half = (truth.psi_upper - 2.0).max(2.0 - truth.psi_lower);
            dominated &= half <= env;
            slack = slack.min(env - half);
        }
    }
    let mut dichotomy = true;
    for k in 0..=20 {
        let c = k as f64 / 100.0;
        let truth = true_bounds_c_dependence(c, 10_000, 7);
        dichotomy &= truth.infinite == (c > 0.1 + 1e-12) && truth.psi_upper.is_finite() != truth.infinite;
    }
    r.record(
        7,
        dominated && dichotomy,
        "envelope dominance and finite/infinite dichotomy",
        format!("min envelope slack {slack:.4}; dichotomy over c in 0.00..0.20: {dichotomy}"),
        t,
    );
}

fn criterion_8(r: &mut Report) {
    let t = Instant::now();
    let mut failures = Vec::new();
    let cases = 300;
    for seed in 0..cases {
        let (dist, band) = random_instance(10_000 + seed, 20, 10);
        let wider: Vec<CellBand> = band
            .iter()
            .map(|b| CellBand {
                lower: b.lower.iter().map(|l| l * 0.7).collect(),
                upper: b.upper.iter().map(|u| 1.0 + (u - 1.0) * 1.5).collect(),
            })
            .collect();
        let solve = |band: &[CellBand], dir| dist.to_problem(band, dir).unwrap().solve_exact().unwrap().value;
        let (lo, hi) = (solve(&band, Direction::Lower), solve(&band, Direction::Upper));
        let (wlo, whi) = (solve(&wider, Direction::Lower), solve(&wider, Direction::Upper));
        if !(wlo <= lo + 1e-12 && whi >= hi - 1e-12) {
            failures.push(format!("monotonicity seed {seed}"));
        }
        let p = dist.to_problem(&band, Direction::Upper).unwrap();
        let neg = BoundProblem::new(
            p.lambda().iter().map(|l| -l).collect(),
            p.outcome().to_vec(),
            p.band().clone(),
            Direction::Lower,
            Grouping::Keys(p.groups().to_vec()),
        )
        .unwrap()
        .with_probabilities(p.probabilities().to_vec())
        .unwrap();
        if (neg.solve_exact().unwrap().value + hi).abs() > 1e-12 * (1.0 + hi.abs()) {
            failures.push(format!("duality seed {seed}"));
        }
        let w = optimal_weights(&p, &p.exact_quantiles()).unwrap();
        let contained = w.w_star.iter().enumerate().all(|(i, &x)| {
            let (l, u) = p.band().get(i);
            x >= l && x <= u
        });
        if !contained || w.group_means(&p).iter().any(|m| (m - 1.0).abs() > 1e-12) {
            failures.push(format!("feasibility seed {seed}"));
        }
        if dist.to_problem(&band, Direction::Upper).unwrap().solve_exact().unwrap().value.to_bits() != hi.to_bits() {
            failures.push(format!("rerun seed {seed}"));
        }
    }
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 120;
        let cells: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(n, 3, |i, j| match j {
            0 => (cells[i] == 0) as u8 as f64,
            1 => (cells[i] == 1) as u8 as f64,
            _ => rng.random_range(-2.0..2.0),
        });
        let y: Vec<f64> = (0..n).map(|i| x[(i, 2)] + rng.random_range(-1.0..1.0) * (1.0 + x[(i, 2)].abs())).collect();
        let model = fit_quantile_grid(&x, &y, &cells).unwrap();
        for probe in [-8.0, -1.0, 0.0, 3.0, 9.0] {
            for cell in 0..2 {
                let row = [(cell == 0) as u8 as f64, (cell == 1) as u8 as f64, probe];
                let q = model.predict_row(&row, cell);
                if (1..GRID_SIZE).any(|k| q[k - 1] > q[k]) {
                    failures.push(format!("grid monotonicity seed {seed}"));
                }
            }
        }
    }
    let a = sharpbounds::simlab::experiment::analyze_sample(&dgp_sample_stream(300, DEFAULT_ETA, 3, 0), &[0.0, 0.05], 30, 4, Default::default());
    let b = sharpbounds::simlab::experiment::analyze_sample(&dgp_sample_stream(300, DEFAULT_ETA, 3, 0), &[0.0, 0.05], 30, 4, Default::default());
    if format!("{a:?}") != format!("{b:?}") {
        failures.push("bootstrap rerun".into());
    }
    r.record(
        8,
        failures.is_empty(),
        "invariant suite",
        format!("{cases} band instances, 10 quantile grids, seeded reruns; violations: {:?}", failures),
        t,
    );
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    // cargo passes test-harness flags through; only ours matters
    let paper_scale = args.iter().any(|a| a == "--paper-scale");
    let mut report = Report { failures: 0 };
    criterion_1(&mut report);
    criterion_2(&mut report);
    criterion_3(&mut report);
    simulation_criteria(&mut report, paper_scale);
    criterion_7(&mut report);
    criterion_8(&mut report);
    if report.failures == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria fail", report.failures);
        ExitCode::FAILURE
    }
}
