//! Exact solver for the weighting problem on finite-support distributions.
//!
//! Each cell is a small linear program: optimize `Σ p_i w_i v_i` over the box
//! `l_i <= w_i <= u_i` subject to `Σ p_i w_i = 1`. Every vertex of that
//! polytope has at most one coordinate strictly inside its box, and an
//! optimal vertex assigns the upper end to the largest values. Sorting the
//! support and sweeping the split point therefore visits every candidate
//! optimum. No quantile formula is used.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{BoundProblem, Direction, Grouping, SensitivityBand};
use crate::error::{check_len, Error, Result};

const FEAS_TOL: f64 = 1e-12;

/// One conditioning cell: its probability and the conditional law of `λY`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub prob: f64,
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDist {
    pub cells: Vec<Cell>,
}

/// Weight band for every support point of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellBand {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CellBand {
    pub fn constant(n: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; n],
            upper: vec![upper; n],
        }
    }
}

impl DiscreteDist {
    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for cell in &self.cells {
            check_len("cell probabilities", cell.probs.len(), cell.values.len())?;
            if cell.prob < 0.0 || cell.probs.iter().any(|p| *p < 0.0) {
                return Err(Error::InvalidInput("negative probability".into()));
            }
            let s: f64 = cell.probs.iter().sum();
            if (s - 1.0).abs() > FEAS_TOL * 1e3 {
                return Err(Error::InvalidInput(format!(
                    "cell probabilities sum to {s}"
                )));
            }
            total += cell.prob;
        }
        if (total - 1.0).abs() > FEAS_TOL * 1e3 {
            return Err(Error::InvalidInput(format!(
                "group probabilities sum to {total}"
            )));
        }
        Ok(())
    }

    /// `E[λY]` without reweighting.
    pub fn mean(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.prob * c.values.iter().zip(&c.probs).map(|(v, p)| v * p).sum::<f64>())
            .sum()
    }

    /// Flattens the distribution into a weighted [`BoundProblem`] with one
    /// group per cell. Bands must be constant within each cell.
    pub fn to_problem(&self, band: &[CellBand], direction: Direction) -> Result<BoundProblem> {
        check_len("cell bands", band.len(), self.cells.len())?;
        let mut outcome = Vec::new();
        let mut prob = Vec::new();
        let mut keys = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for (g, (cell, b)) in self.cells.iter().zip(band).enumerate() {
            check_len("band lower", b.lower.len(), cell.values.len())?;
            check_len("band upper", b.upper.len(), cell.values.len())?;
            for i in 0..cell.values.len() {
                outcome.push(cell.values[i]);
                prob.push(cell.prob * cell.probs[i]);
                keys.push(g);
                lower.push(b.lower[i]);
                upper.push(b.upper[i]);
            }
        }
        let n = outcome.len();
        BoundProblem::new(
            vec![1.0; n],
            outcome,
            SensitivityBand::new(lower, upper)?,
            direction,
            Grouping::Keys(keys),
        )?
        .with_probabilities(prob)
    }
}

/// Best objective of one cell, or `None` when no weight vector is feasible.
pub fn lp_cell_value(
    values: &[f64],
    probs: &[f64],
    lower: &[f64],
    upper: &[f64],
    direction: Direction,
) -> Option<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    match direction {
        Direction::Upper => order.sort_by(|&a, &b| values[a].total_cmp(&values[b])),
        Direction::Lower => order.sort_by(|&a, &b| values[b].total_cmp(&values[a])),
    }
    // prefix sums of floor mass and suffix sums of cap mass in sorted order
    let mut floor_mass = vec![0.0; n + 1];
    let mut floor_obj = vec![0.0; n + 1];
    for (k, &i) in order.iter().enumerate() {
        floor_mass[k + 1] = floor_mass[k] + probs[i] * lower[i];
        floor_obj[k + 1] = floor_obj[k] + probs[i] * lower[i] * values[i];
    }
    let mut cap_mass = vec![0.0; n + 1];
    let mut cap_obj = vec![0.0; n + 1];
    for k in (0..n).rev() {
        let i = order[k];
        cap_mass[k] = cap_mass[k + 1] + probs[i] * upper[i];
        cap_obj[k] = cap_obj[k + 1] + probs[i] * upper[i] * values[i];
    }

    let better = |a: f64, b: f64| match direction {
        Direction::Upper => a > b,
        Direction::Lower => a < b,
    };
    let mut best: Option<f64> = None;
    let mut consider = |val: f64| {
        if best.is_none_or(|b| better(val, b)) {
            best = Some(val);
        }
    };

    // every weight at a bound: first k floored, the rest capped
    for k in 0..=n {
        if (floor_mass[k] + cap_mass[k] - 1.0).abs() <= FEAS_TOL {
            consider(floor_obj[k] + cap_obj[k]);
        }
    }
    // one interior weight at sorted position k
    for (k, &i) in order.iter().enumerate() {
        if probs[i] <= 0.0 {
            continue;
        }
        let rest = floor_mass[k] + cap_mass[k + 1];
        let w = (1.0 - rest) / probs[i];
        if w < lower[i] - FEAS_TOL || w > upper[i] + FEAS_TOL {
            continue;
        }
        let w = w.clamp(lower[i], upper[i]);
        consider(floor_obj[k] + cap_obj[k + 1] + probs[i] * w * values[i]);
    }
    best
}

/// Exact optimum of the weighting problem: the probability-weighted sum of
/// per-cell linear-program optima.
pub fn lp_sharp_bound(dist: &DiscreteDist, band: &[CellBand], direction: Direction) -> Result<f64> {
    check_len("cell bands", band.len(), dist.cells.len())?;
    let mut total = 0.0;
    for (g, (cell, b)) in dist.cells.iter().zip(band).enumerate() {
        check_len("band lower", b.lower.len(), cell.values.len())?;
        check_len("band upper", b.upper.len(), cell.values.len())?;
        for (index, (&l, &u)) in b.lower.iter().zip(&b.upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && (0.0..=1.0).contains(&l) && u >= 1.0) {
                return Err(Error::InvalidBand { index, lower: l, upper: u });
            }
        }
        let v = lp_cell_value(&cell.values, &cell.probs, &b.lower, &b.upper, direction)
            .ok_or(Error::Infeasible(g))?;
        total += cell.prob * v;
    }
    Ok(total)
}

/// Deterministic random instance with finite, cell-constant bands. Roughly
/// a third of cells draw `λy` from a small integer grid so that ties occur.
pub fn random_instance(seed: u64, max_groups: usize, max_support: usize) -> (DiscreteDist, Vec<CellBand>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_groups = rng.random_range(1..=max_groups.max(1));
    let mut cells = Vec::with_capacity(n_groups);
    let mut bands = Vec::with_capacity(n_groups);
    let mut group_w = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let n = rng.random_range(1..=max_support.max(1));
        let tied = rng.random_bool(0.35);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if tied {
                    rng.random_range(-3..=3) as f64
                } else {
                    rng.random_range(-5.0..5.0)
                }
            })
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let probs = raw.iter().map(|p| p / s).collect();
        let lower = match rng.random_range(0..10) {
            0 => 1.0,
            1 => 0.0,
            _ => rng.random_range(0.0..1.0),
        };
        let upper = match rng.random_range(0..10) {
            0 => 1.0,
            1 => rng.random_range(10.0..1000.0),
            _ => rng.random_range(1.0..5.0),
        };
        bands.push(CellBand::constant(n, lower, upper));
        cells.push(Cell { prob: 0.0, values, probs });
        group_w.push(rng.random_range(0.05..1.0));
    }
    let s: f64 = group_w.iter().sum();
    for (cell, w) in cells.iter_mut().zip(group_w) {
        cell.prob = w / s;
    }
    (DiscreteDist { cells }, bands)
}

/// Whether some cell has two support points with equal `λy`.
pub fn has_ties(dist: &DiscreteDist) -> bool {
    dist.cells.iter().any(|c| {
        let mut v = c.values.clone();
        v.sort_by(f64::total_cmp);
        v.windows(2).any(|w| w[0] == w[1])
    })
}
