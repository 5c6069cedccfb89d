//! Closed-form sharp bounds on `E_true[λ(R) Y]` when the likelihood ratio
//! `W = dP_true / dP_obs` is confined to a band `[w_lower(R), w_upper(R)]` and
//! satisfies `E[W | R] = 1`.
//!
//! The optimal adversarial weight caps `W` at `w_upper` above a conditional
//! quantile of `λY` and floors it at `w_lower` below. The quantile level is the
//! one that keeps the conditional mean of `W` at one. Bounds are evaluated with
//! the centered moment
//!
//! ```text
//! E[ λY + (λY - q) a(w_lower, w_upper, λY, q) ]
//! ```
//!
//! which stays valid with atoms at the quantile and with an unbounded upper cap.
//! Lower bounds are computed by negation: `lower(λY) = -upper(-λY)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Slack used when comparing probabilities accumulated in floating point.
const PROB_TOL: f64 = 1e-12;
/// Slack allowed on the mass-point mixing weight before a quantile is rejected.
const ALPHA_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upper,
    Lower,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Upper => Direction::Lower,
            Direction::Lower => Direction::Upper,
        }
    }
}

/// Quantile level at which the optimal weights switch caps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BalanceLevel {
    Level(f64),
    /// `w_lower = w_upper = 1`: the only feasible weight is one and no
    /// quantile is involved.
    Degenerate,
}

impl BalanceLevel {
    pub fn level(self) -> Option<f64> {
        match self {
            BalanceLevel::Level(t) => Some(t),
            BalanceLevel::Degenerate => None,
        }
    }
}

fn band_ok(lower: f64, upper: f64) -> bool {
    lower.is_finite() && (0.0..=1.0).contains(&lower) && upper >= 1.0 && !upper.is_nan()
}

/// Per-observation likelihood-ratio band. `upper` may be `+inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBand {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SensitivityBand {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("band upper", upper.len(), lower.len())?;
        for (index, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !band_ok(l, u) {
                return Err(Error::InvalidBand {
                    index,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    pub fn identity(n: usize) -> Self {
        Self {
            lower: vec![1.0; n],
            upper: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn get(&self, i: usize) -> (f64, f64) {
        (self.lower[i], self.upper[i])
    }

    pub fn has_infinite_cap(&self) -> bool {
        self.upper.iter().any(|u| u.is_infinite())
    }
}

/// Quantile level balancing `E[W | R] = 1`.
///
/// Upper direction: `(w_upper - 1) / (w_upper - w_lower)`, which is one when
/// `w_upper` is infinite. Lower direction: `(1 - w_lower) / (w_upper - w_lower)`.
pub fn tau_balance(w_lower: f64, w_upper: f64, direction: Direction) -> Result<BalanceLevel> {
    if !band_ok(w_lower, w_upper) {
        return Err(Error::InvalidBand {
            index: 0,
            lower: w_lower,
            upper: w_upper,
        });
    }
    Ok(balance_level_unchecked(w_lower, w_upper, direction))
}

fn balance_level_unchecked(w_lower: f64, w_upper: f64, direction: Direction) -> BalanceLevel {
    if w_lower == 1.0 && w_upper == 1.0 {
        return BalanceLevel::Degenerate;
    }
    let up = if w_upper.is_infinite() {
        1.0
    } else {
        (w_upper - 1.0) / (w_upper - w_lower)
    };
    match direction {
        Direction::Upper => BalanceLevel::Level(up),
        Direction::Lower => BalanceLevel::Level(if w_upper.is_infinite() {
            0.0
        } else {
            (1.0 - w_lower) / (w_upper - w_lower)
        }),
    }
}

/// Adversarial reweighting effect `W* - 1` for a finite band.
///
/// Upper: `(w_upper - w_lower) 1{λy > q} - (1 - w_lower)`.
/// Lower: `(w_upper - w_lower) 1{λy <= q} - (1 - w_lower)`.
pub fn adversarial_effect(
    w_lower: f64,
    w_upper: f64,
    lambda_y: f64,
    q: f64,
    direction: Direction,
) -> f64 {
    let switched = match direction {
        Direction::Upper => lambda_y > q,
        Direction::Lower => lambda_y <= q,
    };
    let jump = if switched { w_upper - w_lower } else { 0.0 };
    jump - (1.0 - w_lower)
}

/// Mixing weight `α` placed on `w_lower` at an atom sitting exactly on the
/// upper-direction balancing quantile `q`, chosen so the conditional mean of
/// the weights is one. Returns 0.5 when any `α` works (no atom at `q`, or a
/// band of zero width).
pub fn mass_point_alpha(
    values: &[f64],
    probs: &[f64],
    w_lower: f64,
    w_upper: f64,
    q: f64,
) -> Result<f64> {
    check_len("cell probabilities", probs.len(), values.len())?;
    if !band_ok(w_lower, w_upper) {
        return Err(Error::InvalidBand {
            index: 0,
            lower: w_lower,
            upper: w_upper,
        });
    }
    if w_upper.is_infinite() {
        return Err(Error::InfiniteCap);
    }
    if w_upper == w_lower {
        return Ok(0.5);
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Ok(0.5);
    }
    let mut below = 0.0;
    let mut at = 0.0;
    for (&v, &p) in values.iter().zip(probs) {
        if v < q {
            below += p;
        } else if v == q {
            at += p;
        }
    }
    below /= total;
    at /= total;
    let tau = (w_upper - 1.0) / (w_upper - w_lower);
    if at <= 0.0 {
        // q must then split the cell exactly at level tau
        if (below - tau).abs() > ALPHA_TOL {
            return Err(Error::InconsistentQuantile { q, tau });
        }
        return Ok(0.5);
    }
    let excess = w_lower * below + w_upper * (1.0 - below) - 1.0;
    let alpha = excess / ((w_upper - w_lower) * at);
    if !(-ALPHA_TOL..=1.0 + ALPHA_TOL).contains(&alpha) {
        return Err(Error::InconsistentQuantile { q, tau });
    }
    Ok(alpha.clamp(0.0, 1.0))
}

/// Weighted quantile `inf { x : F(x) >= level }` of a finite distribution.
/// Points with zero probability are ignored; level 0 yields the smallest
/// supported value. Returns `None` when no point carries probability.
pub fn discrete_quantile(values: &[f64], probs: &[f64], level: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = values
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&v, &p)| (v, p))
        .collect();
    if pts.is_empty() {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let target = level.clamp(0.0, 1.0) * total - PROB_TOL * total;
    let mut cum = 0.0;
    for &(v, p) in &pts {
        cum += p;
        if cum >= target {
            return Some(v);
        }
    }
    pts.last().map(|p| p.0)
}

/// How observations are partitioned into conditioning cells `R`.
#[derive(Clone, Debug, PartialEq)]
pub enum Grouping {
    /// The whole sample is one cell.
    Single,
    /// Every observation is its own cell; quantiles come from a model.
    PerObservation,
    /// Arbitrary cell keys, one per observation.
    Keys(Vec<usize>),
}

/// One instance of the bound problem: maximize (or minimize) `E[W λ Y]` over
/// weights in the band with unit conditional mean.
#[derive(Clone, Debug)]
pub struct BoundProblem {
    lambda: Vec<f64>,
    outcome: Vec<f64>,
    prob: Vec<f64>,
    band: SensitivityBand,
    direction: Direction,
    group: Vec<usize>,
    n_groups: usize,
}

impl BoundProblem {
    pub fn new(
        lambda: Vec<f64>,
        outcome: Vec<f64>,
        band: SensitivityBand,
        direction: Direction,
        grouping: Grouping,
    ) -> Result<Self> {
        let n = lambda.len();
        check_len("outcome", outcome.len(), n)?;
        check_len("band", band.len(), n)?;
        if n == 0 {
            return Err(Error::InvalidInput("bound problem needs observations".into()));
        }
        if let Some(i) = lambda.iter().position(|l| !l.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda[{i}] is not finite")));
        }
        if let Some(i) = outcome.iter().position(|y| !y.is_finite()) {
            return Err(Error::InvalidInput(format!("outcome[{i}] is not finite")));
        }
        let (group, n_groups) = match grouping {
            Grouping::Single => (vec![0; n], 1),
            Grouping::PerObservation => ((0..n).collect(), n),
            Grouping::Keys(keys) => {
                check_len("group keys", keys.len(), n)?;
                densify(&keys)
            }
        };
        let mut first: Vec<Option<usize>> = vec![None; n_groups];
        for (i, &g) in group.iter().enumerate() {
            match first[g] {
                None => first[g] = Some(i),
                Some(j) => {
                    if band.get(i) != band.get(j) {
                        return Err(Error::BandVariesWithinGroup { group: g });
                    }
                }
            }
        }
        Ok(Self {
            lambda,
            outcome,
            prob: vec![1.0 / n as f64; n],
            band,
            direction,
            group,
            n_groups,
        })
    }

    /// Replaces the default equal weighting by explicit probability masses
    /// (normalized to sum to one).
    pub fn with_probabilities(mut self, prob: Vec<f64>) -> Result<Self> {
        check_len("probabilities", prob.len(), self.len())?;
        if prob.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = prob.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("probabilities sum to zero".into()));
        }
        self.prob = prob.into_iter().map(|p| p / total).collect();
        Ok(self)
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    pub fn band(&self) -> &SensitivityBand {
        &self.band
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn groups(&self) -> &[usize] {
        &self.group
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn lambda_y(&self) -> Vec<f64> {
        self.lambda.iter().zip(&self.outcome).map(|(l, y)| l * y).collect()
    }

    /// Unweighted estimand `E[λY]`.
    pub fn plug_in(&self) -> f64 {
        self.lambda
            .iter()
            .zip(&self.outcome)
            .zip(&self.prob)
            .map(|((l, y), p)| p * l * y)
            .sum()
    }

    /// Band of each group, taken from its first member. Groups are never empty.
    pub fn group_bands(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(1.0, 1.0); self.n_groups];
        let mut seen = vec![false; self.n_groups];
        for (i, &g) in self.group.iter().enumerate() {
            if !seen[g] {
                seen[g] = true;
                out[g] = self.band.get(i);
            }
        }
        out
    }

    /// Balancing level of every group for this problem's direction.
    pub fn group_levels(&self) -> Vec<BalanceLevel> {
        self.group_bands()
            .into_iter()
            .map(|(l, u)| balance_level_unchecked(l, u, self.direction))
            .collect()
    }

    /// `(λY, probability)` pairs of each group, in observation order.
    pub fn group_cells(&self) -> Vec<Vec<(f64, f64)>> {
        let mut cells = vec![Vec::new(); self.n_groups];
        for i in 0..self.len() {
            cells[self.group[i]].push((self.lambda[i] * self.outcome[i], self.prob[i]));
        }
        cells
    }

    /// Exact conditional quantiles of `λY` at each group's balancing level,
    /// treating the observations as the full (discrete) distribution.
    pub fn exact_quantiles(&self) -> Vec<f64> {
        let levels = self.group_levels();
        self.group_cells()
            .into_iter()
            .zip(levels)
            .map(|(cell, level)| match level {
                BalanceLevel::Degenerate => 0.0,
                BalanceLevel::Level(t) => {
                    let (v, p): (Vec<f64>, Vec<f64>) = cell.into_iter().unzip();
                    discrete_quantile(&v, &p, t).unwrap_or(0.0)
                }
            })
            .collect()
    }

    /// Sharp bound of the empirical (discrete) distribution.
    pub fn solve_exact(&self) -> Result<BoundResult> {
        sharp_bound(self, &self.exact_quantiles())
    }
}

fn densify(keys: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let dense = keys
        .iter()
        .map(|k| {
            let next = map.len();
            *map.entry(*k).or_insert(next)
        })
        .collect();
    (dense, map.len())
}

/// Optimal adversarial weights for a finite band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalWeights {
    pub w_star: Vec<f64>,
    pub tau: Vec<BalanceLevel>,
    pub alpha: Vec<f64>,
    pub quantile_value: Vec<f64>,
}

impl OptimalWeights {
    /// `E[W* λ Y]` under the problem's probabilities.
    pub fn objective(&self, problem: &BoundProblem) -> f64 {
        (0..problem.len())
            .map(|i| problem.prob[i] * self.w_star[i] * problem.lambda[i] * problem.outcome[i])
            .sum()
    }

    /// Probability-weighted mean of `W*` within each group.
    pub fn group_means(&self, problem: &BoundProblem) -> Vec<f64> {
        let mut num = vec![0.0; problem.n_groups];
        let mut den = vec![0.0; problem.n_groups];
        for i in 0..problem.len() {
            let g = problem.group[i];
            num[g] += problem.prob[i] * self.w_star[i];
            den[g] += problem.prob[i];
        }
        num.iter().zip(&den).map(|(n, d)| n / d).collect()
    }
}

/// Diagnostics and value of one bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub direction: Direction,
    pub value: f64,
    pub finite: bool,
    /// `E[λY]` under the same probabilities.
    pub plug_in: f64,
    /// Smallest and largest balancing level over non-degenerate groups.
    pub tau_range: Option<(f64, f64)>,
    /// Probability mass placed at `w_lower` and at `w_upper`.
    pub cap_fractions: (f64, f64),
}

impl BoundResult {
    fn from_value(
        direction: Direction,
        value: f64,
        plug_in: f64,
        tau_range: Option<(f64, f64)>,
        cap_fractions: (f64, f64),
    ) -> Self {
        Self {
            direction,
            value,
            finite: value.is_finite(),
            plug_in,
            tau_range,
            cap_fractions,
        }
    }
}

/// Sign applied to `λY` and `q` so that every direction becomes an upper problem.
fn orientation(direction: Direction) -> f64 {
    match direction {
        Direction::Upper => 1.0,
        Direction::Lower => -1.0,
    }
}

/// Centered upper-bound integrand `v + (v - q) a(·)` at a single observation.
/// Infinite caps and infinite quantiles follow the `-inf * 0 = 0` convention.
pub(crate) fn upper_term(v: f64, q: f64, w_lower: f64, w_upper: f64) -> f64 {
    if w_lower == 1.0 && w_upper == 1.0 {
        return v;
    }
    if w_upper.is_infinite() {
        if v > q {
            return f64::INFINITY;
        }
        if w_lower == 1.0 || v == q {
            return v;
        }
        if q == f64::INFINITY {
            return f64::INFINITY;
        }
        return w_lower * v + (1.0 - w_lower) * q;
    }
    let a = adversarial_effect(w_lower, w_upper, v, q, Direction::Upper);
    if a == 0.0 || v == q {
        return v;
    }
    v + (v - q) * a
}

/// Cap classification of one observation in oriented (upper) coordinates:
/// `-1` floor, `1` cap, `0` neither.
fn cap_side(v: f64, q: f64, w_lower: f64, w_upper: f64) -> i8 {
    if w_lower == 1.0 && w_upper == 1.0 {
        0
    } else if v > q {
        1
    } else if v < q {
        -1
    } else {
        0
    }
}

fn tau_range(problem: &BoundProblem) -> Option<(f64, f64)> {
    let mut mass = vec![0.0; problem.n_groups];
    for i in 0..problem.len() {
        mass[problem.group[i]] += problem.prob[i];
    }
    problem
        .group_levels()
        .into_iter()
        .zip(mass)
        .filter(|(_, m)| *m > 0.0)
        .filter_map(|(l, _)| l.level())
        .fold(None, |acc, t| match acc {
            None => Some((t, t)),
            Some((lo, hi)) => Some((lo.min(t), hi.max(t))),
        })
}

/// Sharp bound `E[λY + (λY - q)a]` with one quantile per group.
///
/// With the exact balancing quantiles this is the sharp bound, including
/// atoms at the quantile and infinite caps (where `q` must be the group's
/// supremum, or infimum for the lower direction). With estimated quantiles it
/// is the plug-in estimator; the upper value never falls below `E[λY]`
/// regardless of `q`, and the lower value never exceeds it.
pub fn sharp_bound(problem: &BoundProblem, quantiles: &[f64]) -> Result<BoundResult> {
    check_len("quantiles", quantiles.len(), problem.n_groups)?;
    let sign = orientation(problem.direction);
    let mut total = 0.0;
    let mut at_lower = 0.0;
    let mut at_upper = 0.0;
    for i in 0..problem.len() {
        let p = problem.prob[i];
        if p == 0.0 {
            continue;
        }
        let (wl, wu) = problem.band.get(i);
        let v = sign * problem.lambda[i] * problem.outcome[i];
        let q = sign * quantiles[problem.group[i]];
        total += p * upper_term(v, q, wl, wu);
        match cap_side(v, q, wl, wu) {
            -1 => at_lower += p,
            1 => at_upper += p,
            _ => {}
        }
    }
    Ok(BoundResult::from_value(
        problem.direction,
        sign * total,
        problem.plug_in(),
        tau_range(problem),
        (at_lower, at_upper),
    ))
}

/// Uncentered form `E[λY + λY a]`, valid only for finite caps without atoms
/// at the balancing quantile.
pub fn uncentered_bound(problem: &BoundProblem, quantiles: &[f64]) -> Result<f64> {
    check_len("quantiles", quantiles.len(), problem.n_groups)?;
    if problem.band.has_infinite_cap() {
        return Err(Error::InfiniteCap);
    }
    let mut total = 0.0;
    for i in 0..problem.len() {
        let (wl, wu) = problem.band.get(i);
        let v = problem.lambda[i] * problem.outcome[i];
        let q = quantiles[problem.group[i]];
        let a = if wl == 1.0 && wu == 1.0 {
            0.0
        } else {
            adversarial_effect(wl, wu, v, q, problem.direction)
        };
        total += problem.prob[i] * (v + v * a);
    }
    Ok(total)
}

/// Optimal weights `W*` including the mixing weight at atoms on the
/// balancing quantile. Caps must be finite.
pub fn optimal_weights(problem: &BoundProblem, quantiles: &[f64]) -> Result<OptimalWeights> {
    check_len("quantiles", quantiles.len(), problem.n_groups)?;
    if problem.band.has_infinite_cap() {
        return Err(Error::InfiniteCap);
    }
    let sign = orientation(problem.direction);
    let bands = problem.group_bands();
    let cells = problem.group_cells();
    let mut alpha = Vec::with_capacity(problem.n_groups);
    for (g, cell) in cells.iter().enumerate() {
        let (wl, wu) = bands[g];
        let (v, p): (Vec<f64>, Vec<f64>) = cell.iter().map(|&(v, p)| (sign * v, p)).unzip();
        alpha.push(mass_point_alpha(&v, &p, wl, wu, sign * quantiles[g])?);
    }
    let w_star = (0..problem.len())
        .map(|i| {
            let g = problem.group[i];
            let (wl, wu) = bands[g];
            let v = sign * problem.lambda[i] * problem.outcome[i];
            let q = sign * quantiles[g];
            if v > q {
                wu
            } else if v < q {
                wl
            } else {
                alpha[g] * wl + (1.0 - alpha[g]) * wu
            }
        })
        .collect();
    Ok(OptimalWeights {
        w_star,
        tau: problem.group_levels(),
        alpha,
        quantile_value: quantiles.to_vec(),
    })
}

/// Bound under an unbounded upper cap: `E[w_lower λY + (1 - w_lower) Q]`,
/// where `Q` is each group's supremum of `λY` (infimum for the lower
/// direction). Infinite whenever a group with `w_lower < 1` has an infinite
/// `Q`.
pub fn bound_infinite_cap(problem: &BoundProblem, extreme: &[f64]) -> Result<BoundResult> {
    check_len("group extremes", extreme.len(), problem.n_groups)?;
    if problem.band.upper().iter().any(|u| u.is_finite()) {
        return Err(Error::InvalidInput(
            "bound_infinite_cap requires w_upper = +inf for every observation".into(),
        ));
    }
    let tau_edge = match problem.direction {
        Direction::Upper => 1.0,
        Direction::Lower => 0.0,
    };
    let mut total = 0.0;
    let mut at_lower = 0.0;
    for i in 0..problem.len() {
        let p = problem.prob[i];
        if p == 0.0 {
            continue;
        }
        let wl = problem.band.lower()[i];
        let v = problem.lambda[i] * problem.outcome[i];
        let q = extreme[problem.group[i]];
        let beyond = match problem.direction {
            Direction::Upper => v > q,
            Direction::Lower => v < q,
        };
        if beyond {
            return Err(Error::InconsistentQuantile { q, tau: tau_edge });
        }
        let term = if wl == 1.0 || v == q {
            v
        } else if q.is_infinite() {
            q
        } else {
            wl * v + (1.0 - wl) * q
        };
        if v != q {
            at_lower += p;
        }
        total += p * term;
    }
    Ok(BoundResult::from_value(
        problem.direction,
        total,
        problem.plug_in(),
        tau_range(problem),
        (at_lower, 0.0),
    ))
}
