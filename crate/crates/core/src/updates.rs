//! Parameter updates in expectation parameters.
//!
//! Every update returns a new [`ExpectationPoint`] or fails with
//! [`Error::DomainExit`] when the result is not a valid distribution;
//! nothing is clipped or projected. [`safeguarded`] retries a step with
//! halved step sizes for callers that prefer progress over fidelity.
//!
//! Weighted sums over samples are accumulated in index order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::exp_family::{ExpectationPoint, Model};
use crate::linalg::{outer, pack_upper, unpack_symmetric};
use crate::oracle::FiniteDist;
use crate::selection::SampleWeights;

/// Largest number of halvings tried by [`safeguarded`].
pub const MAX_HALVINGS: u32 = 30;

pub(crate) fn check_step(dt: f64) -> Result<()> {
    if dt.is_finite() && dt >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("step size {dt} must be finite and non-negative")))
    }
}

pub(crate) fn check_partition(dim: usize, blocks: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; dim];
    for &i in blocks.iter().flatten() {
        if i >= dim || seen[i] {
            return Err(Error::invalid(format!(
                "blocks must partition 0..{dim}; coordinate {i} is out of range or repeated"
            )));
        }
        seen[i] = true;
    }
    if seen.iter().all(|&s| s) {
        Ok(())
    } else {
        Err(Error::invalid(format!("blocks do not cover 0..{dim}")))
    }
}

fn check_samples(model: Model, eta: &[f64], samples: &[Vec<f64>], weights: usize) -> Result<()> {
    check_dim(model.stat_len(), eta.len())?;
    check_dim(weights, samples.len())?;
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    for x in samples {
        model.check_point(x)?;
    }
    Ok(())
}

fn accept(model: Model, eta: Vec<f64>) -> Result<ExpectationPoint> {
    model.validate(&eta).map_err(Error::into_domain_exit)?;
    Ok(ExpectationPoint::new(eta))
}

/// `sum_i w_i T(x_i)`.
fn weighted_statistics(model: Model, samples: &[Vec<f64>], w: &[f64]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; model.stat_len()];
    for (x, &wi) in samples.iter().zip(w) {
        let t = model.sufficient_statistics(x)?;
        for (a, ti) in acc.iter_mut().zip(t.iter()) {
            *a += wi * ti;
        }
    }
    Ok(acc)
}

/// The three single-distribution updates of [`proposal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// `eta + dt sum_i w_i (T(x_i) - eta)`
    Igo,
    /// `(1 - dt) eta + dt sum_i w_i T(x_i)`
    IgoMl,
    /// `(1 - dt) eta + dt eta_ml` with `eta_ml` the weighted
    /// maximum-likelihood fit
    SmoothedCe,
}

/// Unvalidated result of `rule`; it may lie outside the domain.
pub fn proposal(
    rule: Rule,
    model: Model,
    eta: &[f64],
    samples: &[Vec<f64>],
    weights: &SampleWeights,
    dt: f64,
) -> Result<Vec<f64>> {
    check_step(dt)?;
    check_samples(model, eta, samples, weights.len())?;
    model.validate(eta)?;
    let w = weights.as_slice();
    Ok(match rule {
        Rule::Igo => {
            let mut drift = vec![0.0; eta.len()];
            for (x, &wi) in samples.iter().zip(w) {
                let g = model.natural_grad_log_density(eta, x)?;
                for (a, gi) in drift.iter_mut().zip(&g) {
                    *a += wi * gi;
                }
            }
            eta.iter().zip(&drift).map(|(e, g)| e + dt * g).collect()
        }
        Rule::IgoMl => {
            let target = weighted_statistics(model, samples, w)?;
            eta.iter()
                .zip(&target)
                .map(|(e, t)| (1.0 - dt) * e + dt * t)
                .collect()
        }
        Rule::SmoothedCe => {
            let ml = weighted_ml_expectation(model, samples, w);
            eta.iter()
                .zip(&ml)
                .map(|(e, t)| (1.0 - dt) * e + dt * t)
                .collect()
        }
    })
}

/// IGO step `eta + dt sum_i w_i (T(x_i) - eta)`.
pub fn igo_step(
    model: Model,
    eta: &[f64],
    samples: &[Vec<f64>],
    weights: &SampleWeights,
    dt: f64,
) -> Result<ExpectationPoint> {
    accept(model, proposal(Rule::Igo, model, eta, samples, weights, dt)?)
}

/// IGO-ML step: the maximizer of
/// `(1 - dt) E_eta[ln p] + dt sum_i w_i ln p(x_i)`, which in expectation
/// parameters is `(1 - dt) eta + dt sum_i w_i T(x_i)`.
pub fn igo_ml_step(
    model: Model,
    eta: &[f64],
    samples: &[Vec<f64>],
    weights: &SampleWeights,
    dt: f64,
) -> Result<ExpectationPoint> {
    accept(model, proposal(Rule::IgoMl, model, eta, samples, weights, dt)?)
}

/// Weighted maximum-likelihood estimate in the model's natural
/// coordinates, mapped back to expectation parameters. The Gaussian
/// covariance may be singular here.
fn weighted_ml_expectation(model: Model, samples: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let d = model.dim();
    let mut mean = DVector::zeros(d);
    for (x, &wi) in samples.iter().zip(w) {
        mean += DVector::from_column_slice(x) * wi;
    }
    match model {
        Model::Bernoulli { .. } => mean.iter().copied().collect(),
        Model::Gaussian { .. } => {
            let mut cov = DMatrix::zeros(d, d);
            for (x, &wi) in samples.iter().zip(w) {
                cov += outer(&(DVector::from_column_slice(x) - &mean)) * wi;
            }
            gaussian_expectation(&mean, &cov)
        }
    }
}

/// Smoothed cross-entropy step `(1 - dt) eta + dt eta_ml`, where
/// `eta_ml` is the weighted maximum-likelihood fit of the samples.
pub fn smoothed_ce_step(
    model: Model,
    eta: &[f64],
    samples: &[Vec<f64>],
    weights: &SampleWeights,
    dt: f64,
) -> Result<ExpectationPoint> {
    accept(model, proposal(Rule::SmoothedCe, model, eta, samples, weights, dt)?)
}

/// Ordered partition of the parameters for blockwise IGO-ML.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockDecomposition {
    /// Gaussian: covariance with the mean frozen, then the mean.
    CovarianceThenMean,
    /// Gaussian: mean first, then covariance around the new mean. This
    /// order behaves like EMNA and tends to shrink the covariance early.
    MeanThenCovariance,
    /// Bernoulli: disjoint groups of coordinates, updated in order.
    Coordinates(Vec<Vec<usize>>),
}

impl BlockDecomposition {
    /// `(C, m)` for Gaussians, one block per coordinate for Bernoulli.
    pub fn default_for(model: Model) -> Self {
        match model {
            Model::Gaussian { .. } => BlockDecomposition::CovarianceThenMean,
            Model::Bernoulli { dim } => {
                BlockDecomposition::Coordinates((0..dim).map(|i| vec![i]).collect())
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BlockDecomposition::Coordinates(blocks) => blocks.len(),
            _ => 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, model: Model) -> Result<()> {
        match (self, model) {
            (BlockDecomposition::Coordinates(blocks), Model::Bernoulli { dim }) => {
                check_partition(dim, blocks)
            }
            (BlockDecomposition::Coordinates(_), _) => {
                Err(Error::invalid("coordinate blocks apply to Bernoulli models"))
            }
            (_, Model::Gaussian { .. }) => Ok(()),
            _ => Err(Error::invalid("mean/covariance blocks apply to Gaussian models")),
        }
    }
}

/// Blockwise IGO-ML: each block is replaced by the IGO-ML maximizer with
/// the other blocks frozen, reusing the same samples and weights.
///
/// For Gaussians the covariance block gives
/// `C* = C + dt_C sum_i w_i ((x_i - m)(x_i - m)^T - C)` and the mean block
/// `m* = m + dt_m sum_i w_i (x_i - m)`.
pub fn blockwise_igo_ml_step(
    model: Model,
    eta: &[f64],
    samples: &[Vec<f64>],
    weights: &SampleWeights,
    decomposition: &BlockDecomposition,
    dt_per_block: &[f64],
) -> Result<ExpectationPoint> {
    check_samples(model, eta, samples, weights.len())?;
    decomposition.check(model)?;
    check_dim(decomposition.len(), dt_per_block.len())?;
    for &dt in dt_per_block {
        check_step(dt)?;
    }
    let params = model.params(eta)?;
    let w = weights.as_slice();
    match decomposition {
        BlockDecomposition::Coordinates(blocks) => {
            let target = weighted_statistics(model, samples, w)?;
            let mut current = eta.to_vec();
            for (block, &dt) in blocks.iter().zip(dt_per_block) {
                for &i in block {
                    current[i] = (1.0 - dt) * current[i] + dt * target[i];
                }
                model.validate(&current).map_err(Error::into_domain_exit)?;
            }
            Ok(ExpectationPoint::new(current))
        }
        order => {
            let crate::Params::Gaussian(g) = params else {
                unreachable!("decomposition checked against the model")
            };
            let points: Vec<DVector<f64>> =
                samples.iter().map(|x| DVector::from_column_slice(x)).collect();
            let mut mean = g.mean().clone();
            let mut cov = g.cov().clone();
            let cov_block = |mean: &DVector<f64>, cov: &DMatrix<f64>, dt: f64| {
                let mut scatter = DMatrix::zeros(cov.nrows(), cov.ncols());
                for (x, &wi) in points.iter().zip(w) {
                    scatter += outer(&(x - mean)) * wi;
                }
                cov + (scatter - cov) * dt
            };
            let mean_block = |mean: &DVector<f64>, dt: f64| {
                let mut shift = DVector::zeros(mean.len());
                for (x, &wi) in points.iter().zip(w) {
                    shift += (x - mean) * wi;
                }
                mean + shift * dt
            };
            let (dt_first, dt_second) = (dt_per_block[0], dt_per_block[1]);
            if *order == BlockDecomposition::CovarianceThenMean {
                cov = cov_block(&mean, &cov, dt_first);
                accept(model, gaussian_expectation(&mean, &cov))?;
                mean = mean_block(&mean, dt_second);
            } else {
                mean = mean_block(&mean, dt_first);
                accept(model, gaussian_expectation(&mean, &cov))?;
                cov = cov_block(&mean, &cov, dt_second);
            }
            accept(model, gaussian_expectation(&mean, &cov))
        }
    }
}

fn gaussian_expectation(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Vec<f64> {
    let mut eta: Vec<f64> = mean.iter().copied().collect();
    eta.extend(pack_upper(&(cov + outer(mean))));
    eta
}

/// Where the expectations of a fitness-proportional step come from.
#[derive(Debug, Clone, Copy)]
pub enum RewardSource<'a> {
    /// Exact expectation over an enumerated distribution; `rewards` is
    /// indexed like its support and the distribution must be the one at
    /// `eta`.
    Exact {
        dist: &'a FiniteDist,
        rewards: &'a [f64],
    },
    /// Monte Carlo estimate with weights `1/lambda`.
    Samples {
        samples: &'a [Vec<f64>],
        rewards: &'a [f64],
    },
}

fn check_rewards(rewards: &[f64]) -> Result<f64> {
    if rewards.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::invalid("rewards must be finite and non-negative"));
    }
    if rewards.iter().all(|&r| r == 0.0) {
        return Err(Error::invalid("rewards are all zero"));
    }
    Ok(rewards.iter().sum())
}

/// Natural-gradient step on `ln E[r]`:
/// `eta + dt E[(r(x) / E[r]) (T(x) - eta)]`.
///
/// With `dt = 1` on Bernoulli models this is the relative payoff
/// procedure `eta' = E[x r] / E[r]`.
pub fn fitness_proportional_step(
    model: Model,
    eta: &[f64],
    source: RewardSource<'_>,
    dt: f64,
) -> Result<ExpectationPoint> {
    check_step(dt)?;
    check_dim(model.stat_len(), eta.len())?;
    model.validate(eta)?;
    let target = match source {
        RewardSource::Exact { dist, rewards } => {
            if !model.is_bernoulli() {
                return Err(Error::invalid("exact rewards need a Bernoulli model"));
            }
            check_dim(model.dim(), dist.dim())?;
            check_dim(dist.len(), rewards.len())?;
            check_rewards(rewards)?;
            let mass = dist.expect(rewards);
            if mass <= 0.0 {
                return Err(Error::invalid("expected reward is zero"));
            }
            dist.weighted_mean(rewards).into_iter().map(|m| m / mass).collect()
        }
        RewardSource::Samples { samples, rewards } => {
            check_samples(model, eta, samples, rewards.len())?;
            let total = check_rewards(rewards)?;
            let w: Vec<f64> = rewards.iter().map(|r| r / total).collect();
            weighted_statistics(model, samples, &w)?
        }
    };
    let next = eta
        .iter()
        .zip(&target)
        .map(|(e, t)| e + dt * (t - e))
        .collect();
    accept(model, next)
}

/// Stochastic-relaxation step on `E[f]` (minimization):
/// `eta - dt c sum_i f(x_i) (T(x_i) - eta)` with `c = 1/lambda` when
/// `normalized`, else `c = 1`.
pub fn malago_step(
    model: Model,
    eta: &[f64],
    samples: &[Vec<f64>],
    fitness: &[f64],
    dt: f64,
    normalized: bool,
) -> Result<ExpectationPoint> {
    check_step(dt)?;
    check_samples(model, eta, samples, fitness.len())?;
    model.validate(eta)?;
    if fitness.iter().any(|f| !f.is_finite()) {
        return Err(Error::invalid("fitness values must be finite"));
    }
    let scale = if normalized {
        1.0 / samples.len() as f64
    } else {
        1.0
    };
    let mut drift = vec![0.0; eta.len()];
    for (x, &f) in samples.iter().zip(fitness) {
        let g = model.natural_grad_log_density(eta, x)?;
        for (a, gi) in drift.iter_mut().zip(&g) {
            *a += f * gi;
        }
    }
    let next = eta
        .iter()
        .zip(&drift)
        .map(|(e, g)| e - dt * scale * g)
        .collect();
    accept(model, next)
}

/// Result of a [`safeguarded`] step.
#[derive(Debug, Clone, PartialEq)]
pub struct Safeguarded<T> {
    pub value: T,
    /// Multiplier finally applied to the step sizes, `2^-halvings`.
    pub scale: f64,
    pub halvings: u32,
}

/// Runs `step(scale)` with `scale = 1, 1/2, 1/4, ...` until it stops
/// exiting the domain, at most [`MAX_HALVINGS`] times. Other errors are
/// returned immediately.
pub fn safeguarded<T>(mut step: impl FnMut(f64) -> Result<T>) -> Result<Safeguarded<T>> {
    let mut scale = 1.0;
    let mut halvings = 0;
    loop {
        match step(scale) {
            Ok(value) => {
                return Ok(Safeguarded {
                    value,
                    scale,
                    halvings,
                })
            }
            Err(e) if e.is_domain_exit() && halvings < MAX_HALVINGS => {
                scale *= 0.5;
                halvings += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// `(m, C)` of a Gaussian expectation point, without validation.
pub fn gaussian_moments(dim: usize, eta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dim(Model::gaussian(dim).stat_len(), eta.len())?;
    let mean = DVector::from_column_slice(&eta[..dim]);
    let cov = unpack_symmetric(dim, &eta[dim..]) - outer(&mean);
    Ok((mean, cov))
}
