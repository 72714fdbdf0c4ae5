use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // float methods come from std when it is linked
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::log1p_gap;

/// Product of independent Bernoulli marginals, `probs[i] = P[x_i = 1]`.
///
/// Only interior points `0 < probs[i] < 1` are representable.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliParams {
    probs: Vec<f64>,
}

impl BernoulliParams {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("Bernoulli dimension must be at least 1"));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Degenerate(format!(
                "Bernoulli probability {i} = {p} is outside (0, 1)"
            )));
        }
        Ok(Self { probs })
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn log_density(&self, x: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(x)
            .map(|(&p, &xi)| if xi == 1.0 { p.ln() } else { (-p).ln_1p() })
            .sum()
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                self.probs
                    .iter()
                    .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    pub(crate) fn kl_divergence(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(&p, &q)| kl_term(p, q))
            .sum()
    }

    pub(crate) fn fisher_information(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                let p = self.probs[i];
                1.0 / (p * (1.0 - p))
            } else {
                0.0
            }
        })
    }
}

/// One coordinate of `KL(Bern(p) || Bern(q))`.
///
/// Written as `p g(a) + (1-p) g(b)` with `g(u) = u - ln(1+u)`,
/// `a = (q-p)/p`, `b = (p-q)/(1-p)`, which is non-negative term by term
/// and keeps full relative precision when `q` is close to `p`.
pub(crate) fn kl_term(p: f64, q: f64) -> f64 {
    let delta = q - p;
    p * log1p_gap(delta / p) + (1.0 - p) * log1p_gap(-delta / (1.0 - p))
}

/// `(ln(q/p), ln((1-q)/(1-p)))` computed from the difference `q - p`.
pub(crate) fn log_ratio(p: f64, q: f64) -> (f64, f64) {
    let delta = q - p;
    ((delta / p).ln_1p(), (-delta / (1.0 - p)).ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use alloc::vec;

    #[test]
    fn rejects_boundary_probabilities() {
        assert!(matches!(BernoulliParams::new(vec![0.0, 0.5]), Err(Error::Degenerate(_))));
        assert!(BernoulliParams::new(vec![1.0]).is_err());
        assert!(BernoulliParams::new(vec![f64::NAN]).is_err());
        assert!(BernoulliParams::new(vec![]).is_err());
    }

    #[test]
    fn log_density_examples() {
        let u = BernoulliParams::new(vec![0.5, 0.5]).unwrap();
        for x in [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] {
            assert!((u.log_density(&x) - 0.25f64.ln()).abs() < 1e-15);
        }
        let p = BernoulliParams::new(vec![0.3]).unwrap();
        assert!((p.log_density(&[1.0]) - 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_examples() {
        let half = BernoulliParams::new(vec![0.5]).unwrap();
        let quarter = BernoulliParams::new(vec![0.25]).unwrap();
        assert_eq!(half.kl_divergence(&half), 0.0);
        // 0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75)
        let oracle = 0.5 * 2.0f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((half.kl_divergence(&quarter) - oracle).abs() < 1e-15);
        assert!((oracle - 0.143841).abs() < 1e-6);
    }

    #[test]
    fn kl_term_matches_naive_form_away_from_cancellation() {
        for &(p, q) in &[(0.2, 0.7), (0.9, 0.1), (0.5, 0.55), (0.01, 0.02)] {
            let naive = p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
            assert!((kl_term(p, q) - naive).abs() < 1e-14, "{p} {q}");
        }
    }

    #[test]
    fn kl_term_small_displacement_is_quadratic() {
        // KL ~ delta^2 / (2 p (1 - p)) as delta -> 0
        let p = 0.3;
        let delta = 1e-9;
        let got = kl_term(p, p + delta);
        let want = delta * delta / (2.0 * p * (1.0 - p));
        assert!((got / want - 1.0).abs() < 1e-6);
    }

    #[test]
    fn near_deterministic_marginals_sample_ones() {
        let p = BernoulliParams::new(vec![1.0 - 1e-9; 4]).unwrap();
        let xs = p.sample(&mut rng::master(3), 3);
        assert!(xs.iter().all(|x| x.iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn sample_mean_concentrates() {
        let p = BernoulliParams::new(vec![0.5]).unwrap();
        let xs = p.sample(&mut rng::master(11), 100_000);
        let mean = xs.iter().map(|x| x[0]).sum::<f64>() / xs.len() as f64;
        assert!((0.494..=0.506).contains(&mean), "{mean}");
    }
}
