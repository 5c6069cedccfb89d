//! Identified sets of the simulation design under c-dependence, from the
//! conditionally normal closed form averaged over draws of `X`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::dgp::{outcome_mean, propensity, DEFAULT_ETA};
use crate::applications::ipw::IpwSensitivity;
use crate::bounds::tau_balance;

/// Slack on the knife-edge comparison `c > min propensity margin`.
const EDGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthResult {
    pub c: f64,
    pub psi_lower: f64,
    pub psi_upper: f64,
    pub mc_draws: usize,
    /// The identified set is the whole real line.
    pub infinite: bool,
}

/// Adversarial shift `(w̄ - w̲) φ(Φ⁻¹(τ))` of a unit-variance normal mean
/// under band `[w̲, w̄]`. Equals `(1-w̲) φ(q_τ) / (1-τ)`, the inverse-Mills form.
pub fn normal_shift(w_lower: f64, w_upper: f64) -> f64 {
    if w_upper.is_infinite() {
        return if w_lower < 1.0 { f64::INFINITY } else { 0.0 };
    }
    if w_upper == w_lower || w_lower == 1.0 || w_upper == 1.0 {
        return 0.0;
    }
    let tau = tau_balance(w_lower, w_upper, crate::bounds::Direction::Upper)
        .ok()
        .and_then(|l| l.level())
        .unwrap_or(0.5);
    let n = Normal::standard();
    (w_upper - w_lower) * n.pdf(n.inverse_cdf(tau))
}

/// Smallest propensity margin `min(e(-η), 1 - e(η))` of the design.
pub fn propensity_margin(eta: f64) -> f64 {
    propensity(-eta).min(1.0 - propensity(eta))
}

/// Per-`X` half-width of the ATE identified set: the treated upper shift plus
/// the control lower shift.
pub fn conditional_half_width(x: f64, c: f64) -> f64 {
    let e = propensity(x);
    let s = IpwSensitivity::CDependence(c);
    let (l1, u1) = s.band(1.0, e).expect("valid c");
    let (l0, u0) = s.band(0.0, e).expect("valid c");
    normal_shift(l1, u1) + normal_shift(l0, u0)
}

/// Identified set of `E[Y(1) - Y(0)]` under the default design, averaging
/// the closed form over `draws` uniform draws of `X`.
pub fn true_bounds_c_dependence(c: f64, draws: usize, seed: u64) -> TruthResult {
    true_bounds_c_dependence_eta(c, DEFAULT_ETA, draws, seed)
}

pub fn true_bounds_c_dependence_eta(c: f64, eta: f64, draws: usize, seed: u64) -> TruthResult {
    let infinite = c > propensity_margin(eta) + EDGE_TOL;
    if infinite {
        return TruthResult {
            c,
            psi_lower: f64::NEG_INFINITY,
            psi_upper: f64::INFINITY,
            mc_draws: 0,
            infinite,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centre = 0.0;
    let mut half = 0.0;
    for _ in 0..draws {
        let x = rng.random_range(-eta..=eta);
        centre += outcome_mean(x, 1.0) - outcome_mean(x, 0.0);
        half += conditional_half_width(x, c);
    }
    let (centre, half) = (centre / draws as f64, half / draws as f64);
    TruthResult {
        c,
        psi_lower: centre - half,
        psi_upper: centre + half,
        mc_draws: draws,
        infinite: !half.is_finite(),
    }
}

/// Upper envelope of the identified-set half-width for a unit-variance
/// normal outcome, with tuning constant `epsilon` in (0, 1).
pub fn envelope_term(w_lower: f64, w_upper: f64, epsilon: f64) -> f64 {
    let slack = 1.0 - w_lower;
    if slack == 0.0 {
        return 0.0;
    }
    let e = std::f64::consts::E;
    slack
        * ((2.0 * w_upper.ln()).sqrt()
            + (2.0 / std::f64::consts::PI).sqrt()
            + slack.powf(epsilon) * (1.0 / (e * epsilon)).sqrt())
}

/// Envelope half-width of the ATE identified set averaged over draws of `X`.
pub fn bound_envelope_normal(c: f64, epsilon: f64, draws: usize, seed: u64) -> f64 {
    bound_envelope_normal_eta(c, epsilon, DEFAULT_ETA, draws, seed)
}

pub fn bound_envelope_normal_eta(c: f64, epsilon: f64, eta: f64, draws: usize, seed: u64) -> f64 {
    let s = IpwSensitivity::CDependence(c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..draws {
        let e = propensity(rng.random_range(-eta..=eta));
        for z in [1.0, 0.0] {
            let (l, u) = s.band(z, e).expect("valid c");
            total += envelope_term(l, u, epsilon);
        }
    }
    total / draws as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_matches_inverse_mills_form() {
        let (wl, wu) = (0.6, 1.8);
        let tau = (wu - 1.0) / (wu - wl);
        let n = Normal::standard();
        let q = n.inverse_cdf(tau);
        let mills = (1.0 - wl) * n.pdf(q) / (1.0 - tau);
        assert!((normal_shift(wl, wu) - mills).abs() < 1e-12);
    }

    #[test]
    fn shift_matches_simulation() {
        // E[W* Y] for Y ~ N(0,1) by direct numerical integration on a fine grid
        let (wl, wu) = (0.5, 2.0);
        let n = Normal::standard();
        let q = n.inverse_cdf((wu - 1.0) / (wu - wl));
        let h = 1e-4;
        let mut s = 0.0;
        let mut y = -10.0;
        while y < 10.0 {
            let w = if y > q { wu } else { wl };
            s += w * y * n.pdf(y) * h;
            y += h;
        }
        assert!((normal_shift(wl, wu) - s).abs() < 1e-4);
    }

    #[test]
    fn identity_band_has_no_width() {
        assert_eq!(conditional_half_width(0.3, 0.0), 0.0);
        assert_eq!(envelope_term(1.0, 1.0, 0.5), 0.0);
    }

    #[test]
    fn truth_at_zero_is_the_ate() {
        let t = true_bounds_c_dependence(0.0, 100_000, 1);
        assert!((t.psi_lower - 2.0).abs() < 0.01 && (t.psi_upper - 2.0).abs() < 0.01);
        assert!((t.psi_upper - t.psi_lower).abs() < 1e-12);
    }

    #[test]
    fn knife_edge() {
        assert!(!true_bounds_c_dependence(0.1, 1000, 1).infinite);
        assert!(true_bounds_c_dependence(0.11, 1000, 1).infinite);
    }

    #[test]
    fn envelope_shrinks_with_band() {
        let a = envelope_term(0.5, 3.0, 0.5);
        let b = envelope_term(0.7, 2.0, 0.5);
        let c = envelope_term(0.9, 1.2, 0.5);
        assert!(a >= b && b >= c && c >= 0.0);
    }
}
