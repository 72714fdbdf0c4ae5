//! Named algorithms as iteration loops over [`crate::updates`].
//!
//! - PBIL: [`updates::igo_step`] on Bernoulli models.
//! - Pure rank-mu CMA-ES: [`updates::blockwise_igo_ml_step`] with the
//!   covariance block first and separate mean and covariance rates. No
//!   evolution paths or step-size control.
//! - CE/ML: [`updates::smoothed_ce_step`].
//! - RPP: [`updates::fitness_proportional_step`], classic with `dt = 1`,
//!   smoothed otherwise.
//! - Generic IGO: [`updates::igo_step`] on any model.
//!
//! [`run`] is deterministic given the configuration: all randomness comes
//! from [`rng::master`] of the seed.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;
#[allow(unused_imports)] // float methods come from std when it is linked
use num_traits::Float;
use rand::Rng;

use crate::diagnostics::empirical_quantile;
use crate::error::{Error, Result};
use crate::exp_family::{kl_divergence, ExpectationPoint, Model, Params};
use crate::objectives::{Direction, Fitness, Objective, ObjectiveId, Space};
use crate::oracle::{self, FiniteDist};
use crate::rng;
use crate::selection::{sample_weights, SampleWeights, SelectionScheme};
use crate::updates::{self, BlockDecomposition, RewardSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmId {
    Pbil,
    CmaRankMu,
    CeMl,
    Rpp,
    IgoGeneric,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 5] = [
        AlgorithmId::Pbil,
        AlgorithmId::CmaRankMu,
        AlgorithmId::CeMl,
        AlgorithmId::Rpp,
        AlgorithmId::IgoGeneric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::Pbil => "pbil",
            AlgorithmId::CmaRankMu => "cma_rank_mu",
            AlgorithmId::CeMl => "ce_ml",
            AlgorithmId::Rpp => "rpp",
            AlgorithmId::IgoGeneric => "igo_generic",
        }
    }

    /// Whether the update consumes rank-based sample weights.
    pub fn is_rank_based(self) -> bool {
        self != AlgorithmId::Rpp
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("algo", format!("unknown algorithm `{s}`")))
    }
}

/// What to do when an update leaves the parameter domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainExitPolicy {
    /// Stop the run and report the failed step.
    Halt,
    /// Retry the step with halved step sizes (at most
    /// [`updates::MAX_HALVINGS`] times), reusing the same samples.
    Safeguard,
}

impl DomainExitPolicy {
    pub fn name(self) -> &'static str {
        match self {
            DomainExitPolicy::Halt => "halt",
            DomainExitPolicy::Safeguard => "safeguard",
        }
    }
}

impl fmt::Display for DomainExitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainExitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "halt" => Ok(DomainExitPolicy::Halt),
            "safeguard" => Ok(DomainExitPolicy::Safeguard),
            _ => Err(Error::config("domain-exit", format!("unknown policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    pub algorithm: AlgorithmId,
    pub objective: ObjectiveId,
    pub dim: usize,
    pub lambda: usize,
    pub scheme: SelectionScheme,
    pub dt: f64,
    /// Mean rate for CMA; defaults to `dt`.
    pub dt_m: Option<f64>,
    /// Covariance rate for CMA; defaults to `dt`.
    pub dt_c: Option<f64>,
    pub max_steps: usize,
    pub seed: u64,
    /// Stop once the best sampled fitness reaches this value (in the
    /// objective's own direction).
    pub target: Option<f64>,
    pub domain_exit: DomainExitPolicy,
    /// Allows step sizes above 1.
    pub uncertified: bool,
    /// RPP: exact expectations by enumeration instead of Monte Carlo.
    pub exact_rewards: bool,
    /// Record an importance-sampling estimate of `J` for each step.
    pub track_j: bool,
    /// Initial Gaussian mean (every coordinate).
    pub init_mean: f64,
    /// Initial Gaussian standard deviation (isotropic).
    pub init_sigma: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmId::Pbil,
            objective: ObjectiveId::OneMax,
            dim: 10,
            lambda: 100,
            scheme: SelectionScheme::Truncation(
                crate::selection::TruncationScheme::new(0.25).expect("0.25 is in (0, 1)"),
            ),
            dt: 0.5,
            dt_m: None,
            dt_c: None,
            max_steps: 100,
            seed: 0,
            target: None,
            domain_exit: DomainExitPolicy::Halt,
            uncertified: false,
            exact_rewards: true,
            track_j: false,
            init_mean: 1.0,
            init_sigma: 1.0,
        }
    }
}

fn check_rate(field: &str, dt: f64, uncertified: bool) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config(field, format!("{dt} must be a positive finite step size")));
    }
    if dt > 1.0 && !uncertified {
        return Err(Error::config(
            field,
            format!(
                "{dt} exceeds 1; the monotone quantile-improvement guarantee requires \
                 dt <= 1 (pass --uncertified to run anyway)"
            ),
        ));
    }
    Ok(())
}

impl AlgorithmConfig {
    pub fn model(&self) -> Model {
        match self.objective.space() {
            Space::Binary => Model::bernoulli(self.dim),
            Space::Continuous => Model::gaussian(self.dim),
        }
    }

    pub fn dt_m(&self) -> f64 {
        self.dt_m.unwrap_or(self.dt)
    }

    pub fn dt_c(&self) -> f64 {
        self.dt_c.unwrap_or(self.dt)
    }

    /// Field-level validation; every error is [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        let space = self.objective.space();
        let direction = self.objective.direction();
        match self.algorithm {
            AlgorithmId::Pbil if space != Space::Binary => {
                return Err(Error::config("objective", "pbil needs a binary objective"));
            }
            AlgorithmId::CmaRankMu if space != Space::Continuous => {
                return Err(Error::config(
                    "objective",
                    "cma_rank_mu needs a continuous objective",
                ));
            }
            AlgorithmId::Rpp if space != Space::Binary || direction != Direction::Maximize => {
                return Err(Error::config(
                    "objective",
                    "rpp needs a non-negative binary reward (onemax-reward, random-reward)",
                ));
            }
            _ => {}
        }
        if self.algorithm == AlgorithmId::Rpp && self.exact_rewards && self.dim > oracle::MAX_DIM
        {
            return Err(Error::config(
                "dim",
                format!("exact rewards enumerate 2^dim points; dim must be <= {}", oracle::MAX_DIM),
            ));
        }
        let min_lambda = if self.algorithm.is_rank_based() { 2 } else { 1 };
        if self.lambda < min_lambda {
            return Err(Error::config(
                "lambda",
                format!("must be at least {min_lambda} for {}", self.algorithm),
            ));
        }
        check_rate("dt", self.dt, self.uncertified)?;
        if self.algorithm == AlgorithmId::CmaRankMu {
            check_rate("dt-m", self.dt_m(), self.uncertified)?;
            check_rate("dt-c", self.dt_c(), self.uncertified)?;
        } else if self.dt_m.is_some() || self.dt_c.is_some() {
            return Err(Error::config("dt-m", "separate rates only apply to cma_rank_mu"));
        }
        if !self.init_mean.is_finite() {
            return Err(Error::config("init-mean", "must be finite"));
        }
        if !(self.init_sigma.is_finite() && self.init_sigma > 0.0) {
            return Err(Error::config("init-sigma", "must be positive and finite"));
        }
        if let Some(t) = self.target {
            if !t.is_finite() {
                return Err(Error::config("target", "must be finite"));
            }
        }
        Ok(())
    }

    /// Starting point: all probabilities 1/2, or `N(init_mean, init_sigma^2 I)`.
    pub fn initial_eta(&self) -> Result<ExpectationPoint> {
        let d = self.dim;
        match self.model() {
            Model::Bernoulli { .. } => Ok(ExpectationPoint::new(vec![0.5; d])),
            Model::Gaussian { .. } => {
                let cov = DMatrix::identity(d, d) * (self.init_sigma * self.init_sigma);
                let params = crate::GaussianParams::new(vec![self.init_mean; d], cov)?;
                Ok(Params::Gaussian(params).expectation())
            }
        }
    }
}

/// Source of wall-clock readings for traces.
pub trait Clock {
    fn now_ns(&mut self) -> u64;
}

/// A clock that always reads zero, keeping traces reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ns(&mut self) -> u64 {
        0
    }
}

/// One executed step.
///
/// Sample statistics refer to the population drawn from the parameters
/// before the update; `eta` is the parameters after it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based iteration index.
    pub step: usize,
    pub eta: Vec<f64>,
    /// Best sampled fitness, in the objective's own direction.
    pub best_f: f64,
    /// Empirical q-quantile of the sampled fitness (rank-based schemes
    /// with a truncation level only).
    pub emp_quantile: Option<f64>,
    pub weight_entropy: Option<f64>,
    /// Importance-sampling estimate `sum_i w_i p_new(x_i) / p_old(x_i)`.
    pub j_estimate: Option<f64>,
    /// `KL(P_old || P_new)`.
    pub kl_prev: f64,
    pub elapsed_ns: u64,
    /// Step-size multiplier applied after safeguarding (1 if none).
    pub step_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    MaxSteps,
    TargetReached { step: usize },
    /// The update at `step` left the domain and the policy gave up.
    DomainExit { step: usize, message: String },
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::MaxSteps => "max_steps",
            Termination::TargetReached { .. } => "target_reached",
            Termination::DomainExit { .. } => "domain_exit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub algorithm: AlgorithmId,
    pub seed: u64,
    pub policy: DomainExitPolicy,
    pub uncertified: bool,
    pub initial: ExpectationPoint,
    pub records: Vec<StepRecord>,
    pub final_eta: ExpectationPoint,
    pub termination: Termination,
    /// Sum of halvings over all safeguarded steps.
    pub halvings: u32,
}

impl Trace {
    /// Best fitness over all recorded steps, in the objective's direction.
    pub fn best_fitness(&self, direction: Direction) -> Option<f64> {
        let it = self.records.iter().map(|r| r.best_f);
        match direction {
            Direction::Minimize => it.reduce(f64::min),
            Direction::Maximize => it.reduce(f64::max),
        }
    }
}

/// Samples, their minimization-convention fitness and weights.
#[derive(Debug, Clone)]
struct Population {
    samples: Vec<Vec<f64>>,
    fitness: Vec<f64>,
    weights: SampleWeights,
}

fn draw<R: Rng + ?Sized>(
    model: Model,
    eta: &[f64],
    f: &dyn Fitness,
    lambda: usize,
    scheme: &SelectionScheme,
    rng: &mut R,
) -> Result<Population> {
    let samples = model.sample(eta, rng, lambda)?;
    let fitness: Vec<f64> = samples.iter().map(|x| f.value(x)).collect();
    let weights = sample_weights(&fitness, scheme)?;
    Ok(Population {
        samples,
        fitness,
        weights,
    })
}

fn rank_update(
    algorithm: AlgorithmId,
    model: Model,
    eta: &[f64],
    pop: &Population,
    dt: f64,
    dt_m: f64,
    dt_c: f64,
) -> Result<ExpectationPoint> {
    let (s, w) = (&pop.samples, &pop.weights);
    match algorithm {
        AlgorithmId::Pbil | AlgorithmId::IgoGeneric => updates::igo_step(model, eta, s, w, dt),
        AlgorithmId::CeMl => updates::smoothed_ce_step(model, eta, s, w, dt),
        AlgorithmId::CmaRankMu => updates::blockwise_igo_ml_step(
            model,
            eta,
            s,
            w,
            &BlockDecomposition::CovarianceThenMean,
            &[dt_c, dt_m],
        ),
        AlgorithmId::Rpp => unreachable!("rpp is not rank based"),
    }
}

/// One PBIL step: sample `lambda` points, weight them and apply
/// [`updates::igo_step`].
pub fn pbil_step<R: Rng + ?Sized>(
    eta: &[f64],
    f: &dyn Fitness,
    lambda: usize,
    scheme: &SelectionScheme,
    dt: f64,
    rng: &mut R,
) -> Result<ExpectationPoint> {
    let model = Model::bernoulli(eta.len());
    let pop = draw(model, eta, f, lambda, scheme, rng)?;
    rank_update(AlgorithmId::Pbil, model, eta, &pop, dt, dt, dt)
}

/// One pure rank-mu CMA-ES step on a Gaussian of dimension `dim`:
/// `C' = (1 - dt_c) C + dt_c sum_i w_i (x_i - m)(x_i - m)^T`, then
/// `m' = m + dt_m sum_i w_i (x_i - m)`.
#[allow(clippy::too_many_arguments)]
pub fn cma_rank_mu_step<R: Rng + ?Sized>(
    dim: usize,
    eta: &[f64],
    f: &dyn Fitness,
    lambda: usize,
    scheme: &SelectionScheme,
    dt_m: f64,
    dt_c: f64,
    rng: &mut R,
) -> Result<ExpectationPoint> {
    let model = Model::gaussian(dim);
    let pop = draw(model, eta, f, lambda, scheme, rng)?;
    rank_update(AlgorithmId::CmaRankMu, model, eta, &pop, dt_m, dt_m, dt_c)
}

/// One exact RPP step: `eta + dt (E[x r] / E[r] - eta)`, with `rewards`
/// indexed like the support of [`FiniteDist`].
pub fn rpp_step(eta: &[f64], rewards: &[f64], dt: f64) -> Result<ExpectationPoint> {
    let dist = FiniteDist::from_eta(eta)?;
    updates::fitness_proportional_step(
        Model::bernoulli(eta.len()),
        eta,
        RewardSource::Exact {
            dist: &dist,
            rewards,
        },
        dt,
    )
}

/// Monte Carlo RPP step from `lambda` samples.
pub fn rpp_step_sampled<R: Rng + ?Sized>(
    eta: &[f64],
    reward: &dyn Fitness,
    lambda: usize,
    dt: f64,
    rng: &mut R,
) -> Result<ExpectationPoint> {
    let model = Model::bernoulli(eta.len());
    let samples = model.sample(eta, rng, lambda)?;
    let rewards: Vec<f64> = samples.iter().map(|x| reward.value(x)).collect();
    updates::fitness_proportional_step(
        model,
        eta,
        RewardSource::Samples {
            samples: &samples,
            rewards: &rewards,
        },
        dt,
    )
}

/// Runs `config` on its registered objective without timing.
pub fn run(config: &AlgorithmConfig) -> Result<Trace> {
    run_with_clock(config, &mut NoClock)
}

pub fn run_with_clock(config: &AlgorithmConfig, clock: &mut dyn Clock) -> Result<Trace> {
    config.validate()?;
    let objective = Objective::new(config.objective, config.dim, config.seed)?;
    run_with(config, &objective, objective.direction(), clock)
}

/// Runs `config` against an arbitrary fitness function given in the
/// stated direction. Rank-based algorithms minimize (they negate
/// maximized fitness); RPP treats the values as non-negative rewards.
pub fn run_with(
    config: &AlgorithmConfig,
    f: &dyn Fitness,
    direction: Direction,
    clock: &mut dyn Clock,
) -> Result<Trace> {
    config.validate()?;
    let model = config.model();
    let mut rng = rng::master(config.seed);
    let initial = config.initial_eta()?;
    let mut eta = initial.clone();
    let minimized = |x: &[f64]| match direction {
        Direction::Minimize => f.value(x),
        Direction::Maximize => -f.value(x),
    };
    let reward_table = if config.algorithm == AlgorithmId::Rpp && config.exact_rewards {
        Some(oracle::tabulate(config.dim, f)?)
    } else {
        None
    };

    let mut records = Vec::with_capacity(config.max_steps);
    let mut halvings = 0;
    let mut termination = Termination::MaxSteps;
    for step in 1..=config.max_steps {
        let start = clock.now_ns();
        let pop = draw(model, &eta, &minimized, config.lambda, &config.scheme, &mut rng)?;
        let attempt = |scale: f64| {
            let dt = config.dt * scale;
            match config.algorithm {
                AlgorithmId::Rpp => {
                    let rewards: Vec<f64> = pop.fitness.iter().map(|v| -v).collect();
                    let source = match &reward_table {
                        Some(table) => {
                            let dist = FiniteDist::from_eta(&eta)?;
                            return updates::fitness_proportional_step(
                                model,
                                &eta,
                                RewardSource::Exact {
                                    dist: &dist,
                                    rewards: table,
                                },
                                dt,
                            );
                        }
                        None => RewardSource::Samples {
                            samples: &pop.samples,
                            rewards: &rewards,
                        },
                    };
                    updates::fitness_proportional_step(model, &eta, source, dt)
                }
                alg => rank_update(
                    alg,
                    model,
                    &eta,
                    &pop,
                    dt,
                    config.dt_m() * scale,
                    config.dt_c() * scale,
                ),
            }
        };
        let result = match config.domain_exit {
            DomainExitPolicy::Halt => attempt(1.0).map(|value| updates::Safeguarded {
                value,
                scale: 1.0,
                halvings: 0,
            }),
            DomainExitPolicy::Safeguard => updates::safeguarded(attempt),
        };
        let (next, scale) = match result {
            Ok(s) => {
                halvings += s.halvings;
                (s.value, s.scale)
            }
            Err(e) if e.is_domain_exit() => {
                termination = Termination::DomainExit {
                    step,
                    message: e.to_string(),
                };
                break;
            }
            Err(e) => return Err(e),
        };
        let best_min = pop.fitness.iter().copied().fold(f64::INFINITY, f64::min);
        let best_f = match direction {
            Direction::Minimize => best_min,
            Direction::Maximize => -best_min,
        };
        let emp_quantile = match (config.algorithm.is_rank_based(), config.scheme.q()) {
            (true, Some(q)) => Some(empirical_quantile(&pop.fitness, q)?),
            _ => None,
        };
        let weight_entropy = config
            .algorithm
            .is_rank_based()
            .then(|| pop.weights.entropy());
        let j_estimate = if config.track_j && config.algorithm.is_rank_based() {
            Some(importance_j(model, &eta, &next, &pop)?)
        } else {
            None
        };
        let kl_prev = kl_divergence(model, &eta, &next)?;
        let elapsed_ns = clock.now_ns().saturating_sub(start);
        records.push(StepRecord {
            step,
            eta: next.as_slice().to_vec(),
            best_f,
            emp_quantile,
            weight_entropy,
            j_estimate,
            kl_prev,
            elapsed_ns,
            step_scale: scale,
        });
        eta = next;
        if let Some(target) = config.target {
            let reached = match direction {
                Direction::Minimize => best_f <= target,
                Direction::Maximize => best_f >= target,
            };
            if reached {
                termination = Termination::TargetReached { step };
                break;
            }
        }
    }
    Ok(Trace {
        algorithm: config.algorithm,
        seed: config.seed,
        policy: config.domain_exit,
        uncertified: config.uncertified,
        initial,
        records,
        final_eta: eta,
        termination,
        halvings,
    })
}

fn importance_j(model: Model, old: &[f64], new: &[f64], pop: &Population) -> Result<f64> {
    let p_old = model.params(old)?;
    let p_new = model.params(new)?;
    let mut acc = 0.0;
    for (x, w) in pop.samples.iter().zip(pop.weights.as_slice()) {
        if *w > 0.0 {
            acc += w * (p_new.log_density(x)? - p_old.log_density(x)?).exp();
        }
    }
    Ok(acc)
}
