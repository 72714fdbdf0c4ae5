//! Quantile-based selection.
//!
//! A selection scheme is a non-increasing weight function `w` on `[0, 1]`
//! with unit integral. Finite populations use the per-rank weights
//! `bar_i = integral of w over ((i-1)/lambda, i/lambda]`, averaged over
//! ties through the rank bounds `rk- < rk+`. On finite distributions the
//! same scheme yields the exact weighted preference `W(x)`.
//!
//! Ties are decided by exact floating-point equality; values that differ
//! in the last bit are distinct fitness levels.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)] // float methods come from std when it is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::oracle::FiniteDist;

/// q-truncation: `w(u) = 1[u <= q] / q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationScheme {
    q: f64,
}

impl TruncationScheme {
    pub fn new(q: f64) -> Result<Self> {
        if q > 0.0 && q < 1.0 {
            Ok(Self { q })
        } else {
            Err(Error::invalid(format!("truncation quantile q = {q} must lie in (0, 1)")))
        }
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectionScheme {
    Truncation(TruncationScheme),
    /// `w = 1`: every point gets the same weight.
    Uniform,
    /// Step function given by `L` non-increasing per-rank weights summing
    /// to one; `w(u) = L * bar_k` on `((k-1)/L, k/L]`.
    Tabulated(Vec<f64>),
}

impl SelectionScheme {
    pub fn truncation(q: f64) -> Result<Self> {
        TruncationScheme::new(q).map(SelectionScheme::Truncation)
    }

    /// Builds a tabulated scheme from user-designed rank weights.
    pub fn tabulated(bar: Vec<f64>) -> Result<Self> {
        if bar.is_empty() {
            return Err(Error::invalid("tabulated weights must be non-empty"));
        }
        if bar.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("tabulated weights must be finite and non-negative"));
        }
        if bar.windows(2).any(|p| p[1] > p[0]) {
            return Err(Error::invalid("tabulated weights must be non-increasing"));
        }
        let total: f64 = bar.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("tabulated weights sum to {total}, not 1")));
        }
        Ok(SelectionScheme::Tabulated(bar))
    }

    /// The truncation quantile, if this is a truncation scheme.
    pub fn q(&self) -> Option<f64> {
        match self {
            SelectionScheme::Truncation(t) => Some(t.q),
            _ => None,
        }
    }

    /// Point value `w(u)`.
    pub fn weight_at(&self, u: f64) -> f64 {
        match self {
            SelectionScheme::Truncation(t) => {
                if u <= t.q {
                    1.0 / t.q
                } else {
                    0.0
                }
            }
            SelectionScheme::Uniform => 1.0,
            SelectionScheme::Tabulated(bar) => {
                let len = bar.len();
                let k = (u * len as f64).ceil().clamp(1.0, len as f64) as usize;
                len as f64 * bar[k - 1]
            }
        }
    }

    /// `integral of w over [a, b]`, `0 <= a <= b <= 1`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            SelectionScheme::Truncation(t) => (b.min(t.q) - a.min(t.q)) / t.q,
            SelectionScheme::Uniform => b - a,
            SelectionScheme::Tabulated(bar) => {
                let len = bar.len() as f64;
                bar.iter()
                    .enumerate()
                    .map(|(k, w)| {
                        let lo = k as f64 / len;
                        let hi = (k + 1) as f64 / len;
                        let overlap = b.min(hi) - a.max(lo);
                        if overlap > 0.0 {
                            w * len * overlap
                        } else {
                            0.0
                        }
                    })
                    .sum()
            }
        }
    }

    /// Weighted preference of a level with lower and upper quantiles
    /// `a = q-` and `b = q+`: `w(b)` when `a == b`, the mean of `w` over
    /// `[a, b]` otherwise.
    pub fn interval_average(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return self.weight_at(b);
        }
        match self {
            SelectionScheme::Truncation(t) => {
                if b <= t.q {
                    1.0 / t.q
                } else if a >= t.q {
                    0.0
                } else {
                    (t.q - a) / (t.q * (b - a))
                }
            }
            SelectionScheme::Uniform => 1.0,
            SelectionScheme::Tabulated(_) => self.integral(a, b) / (b - a),
        }
    }

    /// Per-rank weights `bar_1 .. bar_lambda`.
    pub fn bar_weights(&self, lambda: usize) -> Vec<f64> {
        let n = lambda as f64;
        match self {
            SelectionScheme::Truncation(t) => (1..=lambda)
                .map(|i| {
                    let hi = (i as f64 / n).min(t.q);
                    let lo = ((i - 1) as f64 / n).min(t.q);
                    (hi - lo) / t.q
                })
                .collect(),
            SelectionScheme::Uniform => vec![1.0 / n; lambda],
            SelectionScheme::Tabulated(bar) if bar.len() == lambda => bar.clone(),
            SelectionScheme::Tabulated(_) => (1..=lambda)
                .map(|i| self.integral((i - 1) as f64 / n, i as f64 / n))
                .collect(),
        }
    }
}

/// Rank bounds of a population: `rk-` counts strictly better samples,
/// `rk+` better-or-equal samples (including the sample itself).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankBounds {
    pub minus: Vec<usize>,
    pub plus: Vec<usize>,
}

impl RankBounds {
    pub fn len(&self) -> usize {
        self.minus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minus.is_empty()
    }
}

/// Tie-averaged sample weights `w_hat`; non-negative and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights(Vec<f64>);

impl SampleWeights {
    /// Wraps externally computed weights after checking non-negativity
    /// and unit sum (within `1e-12`).
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("sample weights must be finite and non-negative"));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("sample weights sum to {total}, not 1")));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shannon entropy (nats) of the weight vector.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|w| **w > 0.0).map(|w| w * w.ln()).sum::<f64>()
    }
}

fn check_fitness(fitness: &[f64]) -> Result<()> {
    if fitness.is_empty() {
        return Err(Error::invalid("empty fitness sequence"));
    }
    if let Some(i) = fitness.iter().position(|f| !f.is_finite()) {
        return Err(Error::invalid(format!("fitness value {i} is {} (must be finite)", fitness[i])));
    }
    Ok(())
}

/// Indices sorted by fitness (ascending), grouped into runs of equal values.
fn tie_groups(fitness: &[f64]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[a].partial_cmp(&fitness[b]).unwrap_or(Ordering::Equal));
    let mut groups = Vec::new();
    let mut start = 0;
    for k in 1..=order.len() {
        if k == order.len() || fitness[order[k]] != fitness[order[start]] {
            groups.push((start, k));
            start = k;
        }
    }
    (order, groups)
}

pub fn rank_bounds(fitness: &[f64]) -> Result<RankBounds> {
    check_fitness(fitness)?;
    let (order, groups) = tie_groups(fitness);
    let mut minus = vec![0; fitness.len()];
    let mut plus = vec![0; fitness.len()];
    for (lo, hi) in groups {
        for &i in &order[lo..hi] {
            minus[i] = lo;
            plus[i] = hi;
        }
    }
    Ok(RankBounds { minus, plus })
}

/// `w_hat_i = (sum of bar_j for rk-(i) < j <= rk+(i)) / (rk+(i) - rk-(i))`
/// with `lambda = fitness.len()`.
pub fn sample_weights(fitness: &[f64], scheme: &SelectionScheme) -> Result<SampleWeights> {
    check_fitness(fitness)?;
    let bar = scheme.bar_weights(fitness.len());
    let (order, groups) = tie_groups(fitness);
    let mut w = vec![0.0; fitness.len()];
    for (lo, hi) in groups {
        let avg = bar[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        for &i in &order[lo..hi] {
            w[i] = avg;
        }
    }
    Ok(SampleWeights(w))
}

/// Distinct fitness levels of a weighted finite set, with the mass
/// strictly below (`q-`) and at-or-below (`q+`) each level.
#[derive(Debug, Clone)]
pub(crate) struct Levels {
    pub values: Vec<f64>,
    pub below: Vec<f64>,
    pub upto: Vec<f64>,
    pub level_of: Vec<usize>,
}

impl Levels {
    pub fn new(masses: &[f64], fitness: &[f64]) -> Result<Self> {
        check_fitness(fitness)?;
        if masses.len() != fitness.len() {
            return Err(Error::DimensionMismatch {
                expected: masses.len(),
                got: fitness.len(),
            });
        }
        let (order, groups) = tie_groups(fitness);
        let mut values = Vec::with_capacity(groups.len());
        let mut below = Vec::with_capacity(groups.len());
        let mut upto = Vec::with_capacity(groups.len());
        let mut level_of = vec![0; fitness.len()];
        let mut acc = 0.0;
        for (g, (lo, hi)) in groups.into_iter().enumerate() {
            values.push(fitness[order[lo]]);
            below.push(acc);
            for &i in &order[lo..hi] {
                acc += masses[i];
                level_of[i] = g;
            }
            upto.push(acc);
        }
        Ok(Self {
            values,
            below,
            upto,
            level_of,
        })
    }

    /// Index of the largest level `m` with `P[f <= m] >= q` and
    /// `P[f < m] <= q` (equivalently `P[f >= m] >= 1 - q`).
    pub fn quantile_level(&self, q: f64) -> usize {
        (0..self.values.len())
            .rev()
            .find(|&g| self.upto[g] >= q && self.below[g] <= q)
            .unwrap_or(self.values.len() - 1)
    }

    pub fn preference(&self, scheme: &SelectionScheme) -> Vec<f64> {
        let per_level: Vec<f64> = self
            .below
            .iter()
            .zip(&self.upto)
            .map(|(&a, &b)| scheme.interval_average(a.clamp(0.0, 1.0), b.clamp(0.0, 1.0)))
            .collect();
        self.level_of.iter().map(|&g| per_level[g]).collect()
    }
}

/// Exact weighted preference `W(x)` of every support point of `dist`.
pub fn preference_exact(
    dist: &FiniteDist,
    fitness: &[f64],
    scheme: &SelectionScheme,
) -> Result<Vec<f64>> {
    preference_from_masses(dist.probs(), fitness, scheme)
}

/// [`preference_exact`] for an arbitrary list of point masses.
pub fn preference_from_masses(
    masses: &[f64],
    fitness: &[f64],
    scheme: &SelectionScheme,
) -> Result<Vec<f64>> {
    if masses.is_empty() {
        return Err(Error::invalid("empty support"));
    }
    Ok(Levels::new(masses, fitness)?.preference(scheme))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trunc(q: f64) -> SelectionScheme {
        SelectionScheme::truncation(q).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn truncation_requires_interior_q() {
        assert!(SelectionScheme::truncation(0.0).is_err());
        assert!(SelectionScheme::truncation(1.0).is_err());
        assert!(SelectionScheme::truncation(f64::NAN).is_err());
    }

    #[test]
    fn bar_weight_examples() {
        assert!(close(&trunc(0.5).bar_weights(4), &[0.5, 0.5, 0.0, 0.0], 1e-15));
        assert!(close(&trunc(0.5).bar_weights(3), &[2.0 / 3.0, 1.0 / 3.0, 0.0], 1e-15));
        assert!(close(&SelectionScheme::Uniform.bar_weights(2), &[0.5, 0.5], 0.0));
    }

    #[test]
    fn bar_weights_sum_to_one() {
        for lambda in 1..60 {
            for q in [0.01, 0.1, 0.25, 0.333, 0.5, 0.9, 0.99] {
                let s: f64 = trunc(q).bar_weights(lambda).iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "lambda={lambda} q={q}: {s}");
            }
        }
    }

    #[test]
    fn rank_bound_examples() {
        let r = rank_bounds(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((r.minus, r.plus), (vec![2, 0, 1], vec![3, 1, 2]));
        let r = rank_bounds(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!((r.minus, r.plus), (vec![0, 0, 2], vec![2, 2, 3]));
        let r = rank_bounds(&[5.0, 5.0]).unwrap();
        assert_eq!((r.minus, r.plus), (vec![0, 0], vec![2, 2]));
    }

    #[test]
    fn nan_fitness_is_rejected() {
        assert!(matches!(rank_bounds(&[1.0, f64::NAN]), Err(Error::InvalidInput(_))));
        assert!(sample_weights(&[f64::NAN], &trunc(0.5)).is_err());
    }

    #[test]
    fn signed_zeros_tie() {
        let r = rank_bounds(&[0.0, -0.0]).unwrap();
        assert_eq!(r.plus, vec![2, 2]);
    }

    #[test]
    fn sample_weight_examples() {
        let q = trunc(0.5);
        let w = sample_weights(&[1.0, 1.0, 2.0, 3.0], &q).unwrap();
        assert!(close(w.as_slice(), &[0.5, 0.5, 0.0, 0.0], 1e-15));
        let w = sample_weights(&[1.0, 2.0, 2.0, 3.0], &q).unwrap();
        assert!(close(w.as_slice(), &[0.5, 0.25, 0.25, 0.0], 1e-15));
        let w = sample_weights(&[1.0, 2.0], &q).unwrap();
        assert!(close(w.as_slice(), &[1.0, 0.0], 0.0));
    }

    #[test]
    fn tabulated_scheme_validation() {
        assert!(SelectionScheme::tabulated(vec![0.2, 0.8]).is_err());
        assert!(SelectionScheme::tabulated(vec![0.8, 0.3]).is_err());
        assert!(SelectionScheme::tabulated(vec![-0.1, 1.1]).is_err());
        let s = SelectionScheme::tabulated(vec![0.6, 0.3, 0.1]).unwrap();
        assert_eq!(s.bar_weights(3), vec![0.6, 0.3, 0.1]);
        let six = s.bar_weights(6);
        assert!(close(&six, &[0.3, 0.3, 0.15, 0.15, 0.05, 0.05], 1e-15));
    }

    #[test]
    fn preference_examples() {
        let q = trunc(0.5);
        // d = 1, theta = 0.5, f(x) = x; support (0), (1)
        let w = preference_from_masses(&[0.5, 0.5], &[0.0, 1.0], &q).unwrap();
        assert!(close(&w, &[2.0, 0.0], 0.0));
        // d = 2, theta = (0.5, 0.5), f = sum x
        let w = preference_from_masses(&[0.25; 4], &[0.0, 1.0, 1.0, 2.0], &q).unwrap();
        assert!(close(&w, &[2.0, 1.0, 1.0, 0.0], 1e-15));
        let u = preference_from_masses(&[0.25; 4], &[0.0, 1.0, 1.0, 2.0], &SelectionScheme::Uniform)
            .unwrap();
        assert_eq!(u, vec![1.0; 4]);
    }

    #[test]
    fn empty_support_is_rejected() {
        assert!(preference_from_masses(&[], &[], &trunc(0.5)).is_err());
    }

    #[test]
    fn zero_mass_level_uses_point_value() {
        let q = trunc(0.5);
        let w = preference_from_masses(&[0.5, 0.0, 0.5], &[0.0, 1.0, 2.0], &q).unwrap();
        // level 1 has q- = q+ = 0.5 -> w(0.5) = 2
        assert_eq!(w, vec![2.0, 2.0, 0.0]);
    }
}
