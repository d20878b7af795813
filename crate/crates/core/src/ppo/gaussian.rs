//! Gaussian exploration around the network's action mean.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// Log-density of `N(mu, sigma^2)` at `a`.
pub fn log_prob<T: Scalar>(a: T, mu: T, sigma: T) -> T {
    let z = (a - mu) / sigma;
    let half = T::lit(0.5);
    -half * z * z - sigma.ln() - T::lit(0.5 * (2.0 * std::f64::consts::PI).ln())
}

/// Differential entropy of `N(mu, sigma^2)`; independent of `mu`.
pub fn entropy<T: Scalar>(sigma: T) -> T {
    T::lit(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()) + sigma.ln()
}

/// A sampled action: `draw` is the raw Gaussian sample the log-density
/// refers to, `action` is that sample clamped to `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampled<T> {
    pub action: T,
    pub draw: T,
    pub logp: T,
}

/// Draws from `N(mu, sigma^2)`. With `sigma = 0` the draw is `mu` itself and
/// the reported log-density is `+inf` (a point mass).
pub fn sample_action<T: Scalar, R: Rng + ?Sized>(mu: T, sigma: T, rng: &mut R) -> Sampled<T> {
    debug_assert!(sigma >= T::zero());
    if sigma == T::zero() {
        return Sampled { action: deterministic_action(mu), draw: mu, logp: T::infinity() };
    }
    let z: f64 = StandardNormal.sample(rng);
    let draw = mu + sigma * T::lit(z);
    Sampled {
        action: draw.max(-T::one()).min(T::one()),
        draw,
        logp: log_prob(draw, mu, sigma),
    }
}

/// Most likely action of the policy.
pub fn deterministic_action<T: Scalar>(mu: T) -> T {
    mu
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_sigma_returns_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_action(0.3, 0.0, &mut rng).action, 0.3);
        for i in 0..=20 {
            let mu = i as f64 / 10.0 - 1.0;
            assert_eq!(sample_action(mu, 0.0, &mut rng).action, deterministic_action(mu));
        }
        assert_eq!(deterministic_action(0.7), 0.7);
        assert_eq!(deterministic_action(-1.0), -1.0);
    }

    #[test]
    fn draws_are_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let s = sample_action(0.95, 0.5, &mut rng);
            assert!((-1.0..=1.0).contains(&s.action));
        }
    }

    #[test]
    fn sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_action(0.0, 0.1, &mut rng).action).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.003, "mean {mean}");
        assert!((var.sqrt() - 0.1).abs() < 0.005, "std {}", var.sqrt());
    }

    #[test]
    fn log_prob_matches_density() {
        let p = log_prob(0.4, 0.1, 0.2_f64).exp();
        let expected = (-(0.3_f64 / 0.2).powi(2) / 2.0).exp() / (0.2 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn entropy_increases_with_sigma() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..100 {
            let e = entropy(i as f64 * 0.01);
            assert!(e > prev);
            prev = e;
        }
    }
}
