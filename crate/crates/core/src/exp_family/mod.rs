//! Exponential-family search distributions in expectation parameters.
//!
//! Two families are supported:
//!
//! - product Bernoulli on `{0,1}^d` with `T(x) = x`, so the expectation
//!   parameter is the vector of marginal probabilities;
//! - multivariate Gaussian on `R^d` with `T(x) = (x, x x^T)`, so the
//!   expectation parameter is `(m, m m^T + C)`.
//!
//! Expectation points use one flat layout. For the Gaussian the `d` mean
//! entries come first, followed by the second-moment block in packed
//! row-major upper-triangular order (`d(d+1)/2` entries). Search points
//! are `&[f64]`; Bernoulli points use `0.0` and `1.0`.
//!
//! Natural parameters are never stored: every update in this crate works
//! on expectation parameters, and `T(x) - eta` is the natural gradient of
//! `ln p(x)` in that parametrization.

mod bernoulli;
mod gaussian;

use alloc::vec::Vec;
use core::ops::Deref;

use nalgebra::DMatrix;
use rand::Rng;

pub use bernoulli::BernoulliParams;
pub use gaussian::GaussianParams;

pub(crate) use bernoulli::{kl_term, log_ratio};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{packed_len, pack_upper};

/// Point of the expectation-parameter manifold, `eta = E[T(x)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationPoint(Vec<f64>);

impl ExpectationPoint {
    pub fn new(eta: Vec<f64>) -> Self {
        Self(eta)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ExpectationPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ExpectationPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// `T(x)` in the same flat layout as [`ExpectationPoint`].
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats(Vec<f64>);

impl SufficientStats {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for SufficientStats {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A family of search distributions together with its search-space dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Bernoulli { dim: usize },
    Gaussian { dim: usize },
}

impl Model {
    pub fn bernoulli(dim: usize) -> Self {
        Model::Bernoulli { dim }
    }

    pub fn gaussian(dim: usize) -> Self {
        Model::Gaussian { dim }
    }

    /// Dimension `d` of the search space.
    pub fn dim(&self) -> usize {
        match *self {
            Model::Bernoulli { dim } | Model::Gaussian { dim } => dim,
        }
    }

    /// Length of `T(x)` and of an expectation point.
    pub fn stat_len(&self) -> usize {
        match *self {
            Model::Bernoulli { dim } => dim,
            Model::Gaussian { dim } => dim + packed_len(dim),
        }
    }

    pub fn is_bernoulli(&self) -> bool {
        matches!(self, Model::Bernoulli { .. })
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        match self {
            Model::Bernoulli { .. } => {
                if x.iter().all(|&v| v == 0.0 || v == 1.0) {
                    Ok(())
                } else {
                    Err(Error::invalid("Bernoulli search points must have 0/1 entries"))
                }
            }
            Model::Gaussian { .. } => {
                if x.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::invalid("Gaussian search points must be finite"))
                }
            }
        }
    }

    /// `T(x)` in the model's flat layout.
    pub fn sufficient_statistics(&self, x: &[f64]) -> Result<SufficientStats> {
        self.check_point(x)?;
        let mut t = Vec::with_capacity(self.stat_len());
        t.extend_from_slice(x);
        if let Model::Gaussian { dim } = *self {
            for i in 0..dim {
                for j in i..dim {
                    t.push(x[i] * x[j]);
                }
            }
        }
        Ok(SufficientStats(t))
    }

    /// Inverse of [`Params::expectation`].
    ///
    /// Fails with [`Error::Degenerate`] when `eta` does not describe a
    /// distribution in the open manifold.
    pub fn params(&self, eta: &[f64]) -> Result<Params> {
        check_dim(self.stat_len(), eta.len())?;
        match *self {
            Model::Bernoulli { .. } => Ok(Params::Bernoulli(BernoulliParams::new(eta.to_vec())?)),
            Model::Gaussian { dim } => {
                Ok(Params::Gaussian(GaussianParams::from_expectation(dim, eta)?))
            }
        }
    }

    /// Succeeds iff `eta` lies in the open manifold.
    pub fn validate(&self, eta: &[f64]) -> Result<()> {
        self.params(eta).map(|_| ())
    }

    /// Natural gradient of `ln p(x)` in expectation parameters: `T(x) - eta`.
    pub fn natural_grad_log_density(&self, eta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.stat_len(), eta.len())?;
        let t = self.sufficient_statistics(x)?;
        Ok(t.iter().zip(eta).map(|(t, e)| t - e).collect())
    }

    /// Fisher information matrix in expectation parameters.
    ///
    /// Bernoulli uses the closed form `diag(1 / (eta (1 - eta)))`. The
    /// Gaussian matrix is the central-difference Hessian of
    /// `delta -> KL(eta || eta + delta)` at zero; it fails with
    /// [`Error::IllConditioned`] if the result is not positive definite.
    pub fn fisher_information(&self, eta: &[f64]) -> Result<DMatrix<f64>> {
        match self.params(eta)? {
            Params::Bernoulli(p) => Ok(p.fisher_information()),
            Params::Gaussian(_) => gaussian::numerical_fisher(*self, eta),
        }
    }

    /// Draws `count` i.i.d. points from the distribution at `eta`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        eta: &[f64],
        rng: &mut R,
        count: usize,
    ) -> Result<Vec<Vec<f64>>> {
        Ok(self.params(eta)?.sample(rng, count))
    }
}

/// A valid distribution of one of the supported families.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Bernoulli(BernoulliParams),
    Gaussian(GaussianParams),
}

impl Params {
    pub fn model(&self) -> Model {
        match self {
            Params::Bernoulli(p) => Model::bernoulli(p.dim()),
            Params::Gaussian(p) => Model::gaussian(p.dim()),
        }
    }

    /// Expectation parameters `E[T(x)]`.
    pub fn expectation(&self) -> ExpectationPoint {
        match self {
            Params::Bernoulli(p) => ExpectationPoint(p.probs().to_vec()),
            Params::Gaussian(p) => {
                let m = p.mean();
                let second = p.cov() + m * m.transpose();
                let mut eta = Vec::with_capacity(self.model().stat_len());
                eta.extend(m.iter().copied());
                eta.extend(pack_upper(&second));
                ExpectationPoint(eta)
            }
        }
    }

    /// `ln p(x)` w.r.t. counting (Bernoulli) or Lebesgue (Gaussian) measure.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.model().check_point(x)?;
        Ok(match self {
            Params::Bernoulli(p) => p.log_density(x),
            Params::Gaussian(p) => p.log_density(x),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<Vec<f64>> {
        match self {
            Params::Bernoulli(p) => p.sample(rng, count),
            Params::Gaussian(p) => p.sample(rng, count),
        }
    }

    /// `KL(self || other)`, closed form.
    pub fn kl_divergence(&self, other: &Params) -> Result<f64> {
        match (self, other) {
            (Params::Bernoulli(p), Params::Bernoulli(q)) => {
                check_dim(p.dim(), q.dim())?;
                Ok(p.kl_divergence(q))
            }
            (Params::Gaussian(p), Params::Gaussian(q)) => {
                check_dim(p.dim(), q.dim())?;
                Ok(p.kl_divergence(q))
            }
            _ => Err(Error::invalid("KL divergence between different families")),
        }
    }
}

/// `KL(P_eta || P_other)` for two expectation points of `model`.
pub fn kl_divergence(model: Model, eta: &[f64], other: &[f64]) -> Result<f64> {
    model.params(eta)?.kl_divergence(&model.params(other)?)
}
