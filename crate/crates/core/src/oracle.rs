//! Exact infinite-population computations on `{0,1}^d`, `d <= 16`.
//!
//! Every expectation under a product Bernoulli distribution is evaluated
//! by enumerating all `2^d` points in lexicographic order (`x_1` most
//! significant), so results are deterministic and bit-reproducible.
//! Objectives enter as a fitness table indexed the same way.
//!
//! Differences between nearby distributions (`J - 1`, expected-reward
//! changes) are computed from per-point likelihood ratios with `expm1`
//! and `ln_1p`, so they keep relative precision even when the two
//! distributions agree to many digits.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from std when it is linked
use num_traits::Float;

use crate::error::{check_dim, Error, Result};
use crate::exp_family::{kl_term, log_ratio, BernoulliParams};
use crate::objectives::Fitness;
use crate::selection::{Levels, SelectionScheme};
use crate::updates;

/// Largest enumerable dimension.
pub const MAX_DIM: usize = 16;

/// Exact finite distribution over `{0,1}^d` in lexicographic support order.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDist {
    dim: usize,
    probs: Vec<f64>,
}

impl FiniteDist {
    /// Wraps explicit probabilities over the `2^dim` support points.
    pub fn new(dim: usize, probs: Vec<f64>) -> Result<Self> {
        check_capacity(dim)?;
        check_dim(1 << dim, probs.len())?;
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { dim, probs })
    }

    /// All `2^d` points with their product probabilities.
    pub fn enumerate(params: &BernoulliParams) -> Result<Self> {
        let dim = params.dim();
        check_capacity(dim)?;
        let mut probs = Vec::with_capacity(1 << dim);
        probs.push(1.0);
        for &p in params.probs() {
            probs = probs.iter().flat_map(|&m| [m * (1.0 - p), m * p]).collect();
        }
        Ok(Self { dim, probs })
    }

    pub fn from_eta(eta: &[f64]) -> Result<Self> {
        Self::enumerate(&BernoulliParams::new(eta.to_vec())?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Coordinate `i` of support point `k`.
    pub fn bit(&self, k: usize, i: usize) -> bool {
        (k >> (self.dim - 1 - i)) & 1 == 1
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        (0..self.dim).map(|i| if self.bit(k, i) { 1.0 } else { 0.0 }).collect()
    }

    /// Support points in order.
    pub fn support(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |k| self.point(k))
    }

    /// `E[g(x)]` for a table `g` over the support.
    pub fn expect(&self, table: &[f64]) -> f64 {
        self.probs.iter().zip(table).map(|(p, g)| p * g).sum()
    }

    /// `E[g(x) x]`, one entry per coordinate.
    pub fn weighted_mean(&self, table: &[f64]) -> Vec<f64> {
        let mut acc = alloc::vec![0.0; self.dim];
        for (k, (p, g)) in self.probs.iter().zip(table).enumerate() {
            let m = p * g;
            if m == 0.0 {
                continue;
            }
            for (i, a) in acc.iter_mut().enumerate() {
                if self.bit(k, i) {
                    *a += m;
                }
            }
        }
        acc
    }
}

fn check_capacity(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if dim > MAX_DIM {
        return Err(Error::Capacity { dim, max: MAX_DIM });
    }
    Ok(())
}

/// Fitness of every support point of `{0,1}^dim`.
pub fn tabulate<F: Fitness + ?Sized>(dim: usize, f: &F) -> Result<Vec<f64>> {
    check_capacity(dim)?;
    let shell = FiniteDist {
        dim,
        probs: alloc::vec![0.0; 1 << dim],
    };
    Ok(shell.support().map(|x| f.value(&x)).collect())
}

/// The q-quantile `Q` (largest admissible value) and its masses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileReport {
    pub value: f64,
    /// `P[f <= value]`
    pub lower_mass: f64,
    /// `P[f >= value]`
    pub upper_mass: f64,
}

/// Largest `m` with `P[f <= m] >= q` and `P[f >= m] >= 1 - q`.
///
/// `P[f >= m]` is taken as `1 - P[f < m]`.
pub fn exact_quantile(dist: &FiniteDist, fitness: &[f64], q: f64) -> Result<QuantileReport> {
    check_dim(dist.len(), fitness.len())?;
    quantile_of_masses(dist.probs(), fitness, q)
}

pub(crate) fn quantile_of_masses(masses: &[f64], fitness: &[f64], q: f64) -> Result<QuantileReport> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("quantile level q = {q} must lie in (0, 1)")));
    }
    let levels = Levels::new(masses, fitness)?;
    let g = levels.quantile_level(q);
    Ok(QuantileReport {
        value: levels.values[g],
        lower_mass: levels.upto[g],
        upper_mass: 1.0 - levels.below[g],
    })
}

/// Quantile of `table` under the Bernoulli distribution `eta`.
pub fn quantile_at(eta: &[f64], table: &[f64], q: f64) -> Result<QuantileReport> {
    exact_quantile(&FiniteDist::from_eta(eta)?, table, q)
}

/// `P_eta[f = value]`.
pub fn level_mass(eta: &[f64], table: &[f64], value: f64) -> Result<f64> {
    let dist = FiniteDist::from_eta(eta)?;
    check_dim(dist.len(), table.len())?;
    Ok(dist
        .probs()
        .iter()
        .zip(table)
        .filter(|(_, f)| **f == value)
        .map(|(p, _)| p)
        .sum())
}

/// `W(x)` under `P_eta` for every support point.
pub fn exact_preference(eta: &[f64], table: &[f64], scheme: &SelectionScheme) -> Result<Vec<f64>> {
    let dist = FiniteDist::from_eta(eta)?;
    check_dim(dist.len(), table.len())?;
    crate::selection::preference_exact(&dist, table, scheme)
}

/// One exact infinite-population IGO step,
/// `eta + dt E[W(x) (x - eta)]`.
pub fn exact_infinite_population_step(
    eta: &[f64],
    table: &[f64],
    scheme: &SelectionScheme,
    dt: f64,
) -> Result<Vec<f64>> {
    updates::check_step(dt)?;
    let dist = FiniteDist::from_eta(eta)?;
    check_dim(dist.len(), table.len())?;
    let w = crate::selection::preference_exact(&dist, table, scheme)?;
    let mass = dist.expect(&w);
    let first = dist.weighted_mean(&w);
    let next: Vec<f64> = eta
        .iter()
        .zip(&first)
        .map(|(e, m)| e + dt * (m - e * mass))
        .collect();
    BernoulliParams::new(next.clone()).map_err(Error::into_domain_exit)?;
    Ok(next)
}

/// One exact blockwise IGO-ML step over coordinate blocks.
///
/// `blocks` partitions `0..d`; block `j` is updated with step
/// `dts[j]` while the other coordinates stay frozen. Every block uses
/// the preference `W` of the starting distribution.
pub fn exact_blockwise_step(
    eta: &[f64],
    table: &[f64],
    scheme: &SelectionScheme,
    blocks: &[Vec<usize>],
    dts: &[f64],
) -> Result<Vec<f64>> {
    let dist = FiniteDist::from_eta(eta)?;
    check_dim(dist.len(), table.len())?;
    check_dim(blocks.len(), dts.len())?;
    updates::check_partition(eta.len(), blocks)?;
    let w = crate::selection::preference_exact(&dist, table, scheme)?;
    let target = dist.weighted_mean(&w);
    let mut current = eta.to_vec();
    for (block, &dt) in blocks.iter().zip(dts) {
        updates::check_step(dt)?;
        // the frozen-coordinate cross-entropy term is maximized at the
        // block's current marginals, so the restricted argmax is a
        // convex combination
        for &i in block {
            current[i] = (1.0 - dt) * current[i] + dt * target[i];
        }
        BernoulliParams::new(current.clone()).map_err(Error::into_domain_exit)?;
    }
    Ok(current)
}

/// `J(eval) = E_eval[W_base(x)]`.
pub fn exact_j(eval: &[f64], base: &[f64], table: &[f64], scheme: &SelectionScheme) -> Result<f64> {
    check_dim(base.len(), eval.len())?;
    let w = exact_preference(base, table, scheme)?;
    Ok(FiniteDist::from_eta(eval)?.expect(&w))
}

/// Per-point `ln p_eval(x) - ln p_base(x)`, accurate for nearby points.
fn log_likelihood_ratios(eval: &[f64], base: &[f64]) -> Vec<f64> {
    let d = base.len();
    let ratios: Vec<(f64, f64)> = base.iter().zip(eval).map(|(&p, &q)| log_ratio(p, q)).collect();
    (0..1usize << d)
        .map(|k| {
            (0..d)
                .map(|i| {
                    let (one, zero) = ratios[i];
                    if (k >> (d - 1 - i)) & 1 == 1 {
                        one
                    } else {
                        zero
                    }
                })
                .sum()
        })
        .collect()
}

/// `E_base[g(x) (p_eval(x)/p_base(x) - 1)] = E_eval[g] - E_base[g]`.
fn expectation_change(eval: &[f64], base: &[f64], table: &[f64]) -> Result<f64> {
    check_dim(base.len(), eval.len())?;
    BernoulliParams::new(eval.to_vec())?;
    let dist = FiniteDist::from_eta(base)?;
    check_dim(dist.len(), table.len())?;
    let s = log_likelihood_ratios(eval, base);
    Ok(dist
        .probs()
        .iter()
        .zip(table)
        .zip(&s)
        .map(|((p, g), s)| p * g * s.exp_m1())
        .sum())
}

/// `J(eval) - 1`, computed without cancellation.
///
/// Uses `E_base[W] = 1`; exact up to the normalisation of `W`.
pub fn exact_j_excess(
    eval: &[f64],
    base: &[f64],
    table: &[f64],
    scheme: &SelectionScheme,
) -> Result<f64> {
    let w = exact_preference(base, table, scheme)?;
    expectation_change(eval, base, &w)
}

/// Weighted cross-entropy `H_base(eval) = E_base[W_base(x) ln p_eval(x)]`.
pub fn exact_h(eval: &[f64], base: &[f64], table: &[f64], scheme: &SelectionScheme) -> Result<f64> {
    check_dim(base.len(), eval.len())?;
    let dist = FiniteDist::from_eta(base)?;
    let w = crate::selection::preference_exact(&dist, table, scheme)?;
    let logp = log_probs(eval)?;
    Ok(dist
        .probs()
        .iter()
        .zip(&w)
        .zip(&logp)
        .map(|((p, w), l)| if *w == 0.0 { 0.0 } else { p * w * l })
        .sum())
}

/// `ln p_eta(x)` over the support.
pub fn log_probs(eta: &[f64]) -> Result<Vec<f64>> {
    BernoulliParams::new(eta.to_vec())?;
    check_capacity(eta.len())?;
    let mut out = Vec::with_capacity(1 << eta.len());
    out.push(0.0);
    for &p in eta {
        let (l0, l1) = ((-p).ln_1p(), p.ln());
        out = out.iter().flat_map(|&acc| [acc + l0, acc + l1]).collect();
    }
    Ok(out)
}

/// `E_eta[g(x)]`.
pub fn exact_expected_fitness(eta: &[f64], table: &[f64]) -> Result<f64> {
    let dist = FiniteDist::from_eta(eta)?;
    check_dim(dist.len(), table.len())?;
    Ok(dist.expect(table))
}

/// `E_new[g] - E_old[g]`, computed without cancellation.
pub fn exact_expected_change(new: &[f64], old: &[f64], table: &[f64]) -> Result<f64> {
    expectation_change(new, old, table)
}

/// Fitness-proportional step `eta + dt E[(r / E[r]) (x - eta)]`.
pub fn exact_fitness_proportional_step(eta: &[f64], rewards: &[f64], dt: f64) -> Result<Vec<f64>> {
    let dist = FiniteDist::from_eta(eta)?;
    let model = crate::Model::bernoulli(eta.len());
    updates::fitness_proportional_step(
        model,
        eta,
        updates::RewardSource::Exact {
            dist: &dist,
            rewards,
        },
        dt,
    )
    .map(|e| e.into_vec())
}

/// `KL(P_p || P_q)` for Bernoulli expectation points.
pub fn bernoulli_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    check_dim(p.len(), q.len())?;
    BernoulliParams::new(p.to_vec())?;
    BernoulliParams::new(q.to_vec())?;
    Ok(p.iter().zip(q).map(|(&a, &b)| kl_term(a, b)).sum())
}
