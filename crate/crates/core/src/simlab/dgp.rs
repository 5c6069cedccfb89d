use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Half-width `ln 9` puts the propensity support at `[0.1, 0.9]`.
pub const DEFAULT_ETA: f64 = 2.197_224_577_336_219_6;

/// `X ~ U[-η, η]`, `Z | X ~ Bern(1 / (1 + e^{-X}))`, `Y | X, Z ~ N((2 + X)(Z - 1), 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub seed: u64,
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Covariates as a one-column design matrix.
    pub fn covariates(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.x.len(), 1, &self.x)
    }
}

pub fn propensity(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Conditional mean of `Y(z)` given `X = x`.
pub fn outcome_mean(x: f64, z: f64) -> f64 {
    (2.0 + x) * (z - 1.0)
}

/// Draws a sample from stream `stream` of `seed`.
pub fn dgp_sample_stream(n: usize, eta: f64, seed: u64, stream: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut s = Sample {
        x: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let x = rng.random_range(-eta..=eta);
        let z = if rng.random::<f64>() < propensity(x) { 1.0 } else { 0.0 };
        let noise: f64 = StandardNormal.sample(&mut rng);
        s.x.push(x);
        s.z.push(z);
        s.y.push(outcome_mean(x, z) + noise);
    }
    s
}

pub fn dgp_sample(config: &DgpConfig) -> Sample {
    dgp_sample_stream(config.n, config.eta, config.seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_matches_log_nine() {
        assert_eq!(DEFAULT_ETA, 9f64.ln());
        assert!((propensity(-DEFAULT_ETA) - 0.1).abs() < 1e-15);
        assert!((propensity(DEFAULT_ETA) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn moments_match_design() {
        let s = dgp_sample(&DgpConfig { n: 200_000, eta: DEFAULT_ETA, seed: 1 });
        let (mut sum1, mut n1) = (0.0, 0.0);
        for i in 0..s.len() {
            if s.z[i] == 1.0 {
                sum1 += s.y[i];
                n1 += 1.0;
            }
        }
        assert!((sum1 / n1).abs() < 0.02);
        // inverse-propensity ATE with the true propensity
        let ate: f64 = (0..s.len())
            .map(|i| {
                let e = propensity(s.x[i]);
                s.z[i] * s.y[i] / e - (1.0 - s.z[i]) * s.y[i] / (1.0 - e)
            })
            .sum::<f64>()
            / s.len() as f64;
        assert!((ate - 2.0).abs() < 0.05, "{ate}");
        let e: Vec<f64> = s.x.iter().map(|&x| propensity(x)).collect();
        assert!(e.iter().all(|&p| (0.1 - 1e-12..=0.9 + 1e-12).contains(&p)));
    }

    #[test]
    fn deterministic_in_seed() {
        let c = DgpConfig { n: 50, eta: DEFAULT_ETA, seed: 4 };
        assert_eq!(dgp_sample(&c), dgp_sample(&c));
        assert_ne!(dgp_sample_stream(50, DEFAULT_ETA, 4, 1), dgp_sample(&c));
    }
}
