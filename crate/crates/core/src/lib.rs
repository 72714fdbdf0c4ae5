//! Information-geometric optimization (IGO) over exponential families.
//!
//! The crate is `no_std` and only needs `alloc`. It provides:
//!
//! - [`exp_family`]: product Bernoulli and multivariate Gaussian search
//!   distributions in expectation parameters, with sampling, densities,
//!   Fisher information and closed-form KL divergence.
//! - [`selection`]: quantile-based selection schemes, rank bounds and
//!   tie-averaged sample weights, plus the exact weighted preference on
//!   finite distributions.
//! - [`updates`]: the IGO, IGO-ML, smoothed cross-entropy, blockwise
//!   IGO-ML, fitness-proportional and stochastic-relaxation updates.
//! - [`oracle`]: exact infinite-population computations on `{0,1}^d`.
//! - [`objectives`], [`algorithms`] and [`diagnostics`]: benchmark
//!   functions, named algorithm loops (PBIL, rank-mu CMA-ES, CE/ML, RPP)
//!   and statistical cross-checks.
//!
//! Everything operates on [`ExpectationPoint`]s; the `(m, C)` view of a
//! Gaussian is available through [`Params`].

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod algorithms;
pub mod diagnostics;
pub mod error;
pub mod exp_family;
pub mod linalg;
mod numeric;
pub mod objectives;
pub mod oracle;
pub mod rng;
pub mod selection;
pub mod updates;

pub use error::{Error, Result};
pub use exp_family::{
    BernoulliParams, ExpectationPoint, GaussianParams, Model, Params, SufficientStats,
};
pub use objectives::{Direction, Objective, ObjectiveId};
pub use oracle::{FiniteDist, QuantileReport};
pub use selection::{RankBounds, SampleWeights, SelectionScheme, TruncationScheme};
