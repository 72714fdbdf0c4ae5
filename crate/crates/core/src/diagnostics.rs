//! Numerical and statistical cross-checks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // float methods come from std when it is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::exp_family::{kl_divergence, Model};
use crate::objectives::{point_index, Fitness};
use crate::oracle;
use crate::rng;
use crate::selection::{sample_weights, Levels, SelectionScheme};
use crate::updates;

/// Parameters closer than this (max-norm) count as unchanged.
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Sup-form q-quantile of the empirical distribution of `fitness`.
pub fn empirical_quantile(fitness: &[f64], q: f64) -> Result<f64> {
    if fitness.is_empty() {
        return Err(Error::invalid("empirical quantile of an empty sample"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("quantile level q = {q} must lie in (0, 1)")));
    }
    // unit masses keep the cumulative counts exact
    let levels = Levels::new(&vec![1.0; fitness.len()], fitness)?;
    Ok(levels.values[levels.quantile_level(q * fitness.len() as f64)])
}

type Preference<'a> = alloc::boxed::Box<dyn Fn(&[f64]) -> f64 + 'a>;
type QuantileFn<'a> = alloc::boxed::Box<dyn Fn(&[f64]) -> Result<f64> + 'a>;

/// How [`estimate_j`] evaluates `W` of the base distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreferenceSource {
    /// Exact preference by enumeration (Bernoulli, `d <= 16`).
    Exact,
    /// Preference induced by a reference sample of this size drawn from
    /// the base distribution.
    Reference(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of `J(eval) = E_eval[W_base(x)]` from `n` draws.
#[allow(clippy::too_many_arguments)]
pub fn estimate_j<R: Rng + ?Sized>(
    model: Model,
    eval: &[f64],
    base: &[f64],
    f: &dyn Fitness,
    scheme: &SelectionScheme,
    source: PreferenceSource,
    n: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if n < 100 {
        return Err(Error::invalid(format!("estimate_j needs at least 100 draws, got {n}")));
    }
    check_dim(model.stat_len(), eval.len())?;
    check_dim(model.stat_len(), base.len())?;
    let preference: Preference<'_> = match source {
        PreferenceSource::Exact => {
            if !model.is_bernoulli() {
                return Err(Error::invalid("exact preference needs a Bernoulli model"));
            }
            let table = oracle::tabulate(model.dim(), f)?;
            let w = oracle::exact_preference(base, &table, scheme)?;
            alloc::boxed::Box::new(move |x| w[point_index(x)])
        }
        PreferenceSource::Reference(size) => {
            if size == 0 {
                return Err(Error::invalid("empty reference sample"));
            }
            let mut reference: Vec<f64> = model
                .sample(base, rng, size)?
                .iter()
                .map(|x| f.value(x))
                .collect();
            reference.sort_by(|a, b| a.total_cmp(b));
            let scheme = scheme.clone();
            alloc::boxed::Box::new(move |x| {
                let v = f.value(x);
                let n = reference.len() as f64;
                let below = reference.partition_point(|r| *r < v) as f64 / n;
                let upto = reference.partition_point(|r| *r <= v) as f64 / n;
                scheme.interval_average(below, upto)
            })
        }
    };
    let draws = model.sample(eval, rng, n)?;
    let values: Vec<f64> = draws.iter().map(|x| preference(x)).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(Estimate {
        value: mean,
        std_error: (var / n as f64).sqrt(),
    })
}

/// Check of `J(eta_next) > exp(((1 - dt) / dt) KL(eta_t || eta_next))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub j_value: f64,
    pub kl_value: f64,
    pub bound: f64,
    /// Strict inequality, decided on `J - 1` against `bound - 1` so
    /// that steps near convergence keep full relative precision.
    pub satisfied: bool,
    /// `J - 1` and `bound - 1` as compared.
    pub j_excess: f64,
    pub bound_excess: f64,
    /// The parameters did not move (within [`FIXED_POINT_TOL`]).
    pub fixed_point: bool,
}

/// Exact progress bound on Bernoulli models; `table` holds the fitness of
/// every support point.
pub fn progress_bound(
    eta_t: &[f64],
    eta_next: &[f64],
    table: &[f64],
    scheme: &SelectionScheme,
    dt: f64,
) -> Result<BoundReport> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(Error::invalid(format!("progress bound needs dt in (0, 1], got {dt}")));
    }
    let j_excess = oracle::exact_j_excess(eta_next, eta_t, table, scheme)?;
    let kl_value = oracle::bernoulli_kl(eta_t, eta_next)?;
    let rate = (1.0 - dt) / dt;
    let bound_excess = (rate * kl_value).exp_m1();
    let fixed_point = max_abs_diff(eta_t, eta_next) <= FIXED_POINT_TOL;
    Ok(BoundReport {
        j_value: 1.0 + j_excess,
        kl_value,
        bound: 1.0 + bound_excess,
        satisfied: j_excess > bound_excess,
        j_excess,
        bound_excess,
        fixed_point,
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Per-step quantile movement counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ImprovementStats {
    pub steps_total: usize,
    /// Strict decrease of the quantile.
    pub steps_improved: usize,
    pub steps_equal: usize,
    pub steps_worsened: usize,
}

impl ImprovementStats {
    /// Fraction of steps with `Q' <= Q`, i.e. quantile improvement in the
    /// non-strict sense the monotonicity guarantee uses.
    pub fn improvement_rate(&self) -> f64 {
        self.ratio(self.steps_improved + self.steps_equal)
    }

    /// Fraction of steps with `Q' < Q`.
    pub fn strict_rate(&self) -> f64 {
        self.ratio(self.steps_improved)
    }

    fn ratio(&self, k: usize) -> f64 {
        if self.steps_total == 0 {
            0.0
        } else {
            k as f64 / self.steps_total as f64
        }
    }

    pub fn record(&mut self, before: f64, after: f64) {
        self.steps_total += 1;
        if after < before {
            self.steps_improved += 1;
        } else if after == before {
            self.steps_equal += 1;
        } else {
            self.steps_worsened += 1;
        }
    }

    pub fn merge(&mut self, other: &ImprovementStats) {
        self.steps_total += other.steps_total;
        self.steps_improved += other.steps_improved;
        self.steps_equal += other.steps_equal;
        self.steps_worsened += other.steps_worsened;
    }
}

/// Finite-population IGO runs whose quantile is tracked exactly
/// (Bernoulli) or on a frozen holdout sample (Gaussian).
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementConfig {
    pub model: Model,
    pub initial: Vec<f64>,
    pub lambda: usize,
    pub scheme: SelectionScheme,
    /// Quantile level being tracked.
    pub q: f64,
    pub dt: f64,
    pub steps: usize,
    /// Gaussian holdout size; at least `10^5`.
    pub holdout: usize,
}

/// Runs `config.steps` IGO steps from `config.initial` for `seed` and
/// counts quantile movements. Domain exits are safeguarded by halving.
pub fn finite_population_improvement(
    config: &ImprovementConfig,
    f: &dyn Fitness,
    seed: u64,
) -> Result<ImprovementStats> {
    let model = config.model;
    model.validate(&config.initial)?;
    if config.lambda < 2 {
        return Err(Error::invalid("lambda must be at least 2"));
    }
    let quantile: QuantileFn<'_> = match model {
        Model::Bernoulli { dim } => {
            let table = oracle::tabulate(dim, f)?;
            let q = config.q;
            alloc::boxed::Box::new(move |eta| Ok(oracle::quantile_at(eta, &table, q)?.value))
        }
        Model::Gaussian { dim } => {
            if config.holdout < 100_000 {
                return Err(Error::invalid("Gaussian holdout must have at least 1e5 points"));
            }
            // common random numbers: the same standard-normal draws are
            // mapped through every distribution
            let mut hold_rng = rng::stream(seed, 1);
            let z: Vec<DVector<f64>> = (0..config.holdout)
                .map(|_| DVector::from_fn(dim, |_, _| hold_rng.sample(StandardNormal)))
                .collect();
            let q = config.q;
            alloc::boxed::Box::new(move |eta| {
                let (mean, cov) = updates::gaussian_moments(dim, eta)?;
                let l = crate::linalg::cholesky(&cov)
                    .ok_or_else(|| Error::Degenerate("covariance not positive definite".into()))?
                    .l();
                let values: Vec<f64> = z
                    .iter()
                    .map(|zi| f.value((&mean + &l * zi).as_slice()))
                    .collect();
                empirical_quantile(&values, q)
            })
        }
    };
    let mut rng = rng::master(seed);
    let mut eta = config.initial.clone();
    let mut q_now = quantile(&eta)?;
    let mut stats = ImprovementStats::default();
    for _ in 0..config.steps {
        let samples = model.sample(&eta, &mut rng, config.lambda)?;
        let fitness: Vec<f64> = samples.iter().map(|x| f.value(x)).collect();
        let w = sample_weights(&fitness, &config.scheme)?;
        let next = updates::safeguarded(|s| {
            updates::igo_step(model, &eta, &samples, &w, config.dt * s)
        })?
        .value;
        let q_next = quantile(&next)?;
        stats.record(q_now, q_next);
        eta = next.into_vec();
        q_now = q_next;
    }
    Ok(stats)
}

/// `|KL(eta || eta + delta/2^k) - (delta/2^k)^T F (delta/2^k) / 2|` for
/// `k = 0..=halvings`.
pub fn check_kl_expansion(
    model: Model,
    eta: &[f64],
    delta: &[f64],
    halvings: usize,
) -> Result<Vec<f64>> {
    check_dim(model.stat_len(), eta.len())?;
    check_dim(eta.len(), delta.len())?;
    let fim = model.fisher_information(eta)?;
    let shifted: Vec<f64> = eta.iter().zip(delta).map(|(e, d)| e + d).collect();
    model.validate(&shifted).map_err(Error::into_domain_exit)?;
    let mut errors = Vec::with_capacity(halvings + 1);
    let mut scale = 1.0;
    for _ in 0..=halvings {
        let step = DVector::from_iterator(delta.len(), delta.iter().map(|d| d * scale));
        let other: Vec<f64> = eta.iter().zip(step.iter()).map(|(e, d)| e + d).collect();
        let kl = kl_divergence(model, eta, &other)?;
        let quad = 0.5 * step.dot(&(&fim * &step));
        errors.push((kl - quad).abs());
        scale *= 0.5;
    }
    Ok(errors)
}

/// Comparison of `F^-1 grad ln p(x)` (central differences) with the
/// closed form `T(x) - eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalGradientCheck {
    pub numeric: Vec<f64>,
    pub exact: Vec<f64>,
    pub rel_error: f64,
}

pub fn natural_gradient_check(
    model: Model,
    eta: &[f64],
    x: &[f64],
    h: f64,
) -> Result<NaturalGradientCheck> {
    let exact = model.natural_grad_log_density(eta, x)?;
    let grad = central_gradient(eta, h, |e| model.params(e)?.log_density(x))?;
    let numeric = solve_fisher(&model.fisher_information(eta)?, &grad)?;
    let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff = numeric
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(NaturalGradientCheck {
        numeric,
        exact,
        rel_error: diff / norm.max(f64::MIN_POSITIVE),
    })
}

fn central_gradient(
    eta: &[f64],
    h: f64,
    g: impl Fn(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut point = eta.to_vec();
    let mut grad = Vec::with_capacity(eta.len());
    for i in 0..eta.len() {
        let hi = h * eta[i].abs().max(1.0);
        point[i] = eta[i] + hi;
        let up = g(&point)?;
        point[i] = eta[i] - hi;
        let down = g(&point)?;
        point[i] = eta[i];
        grad.push((up - down) / (2.0 * hi));
    }
    Ok(grad)
}

fn solve_fisher(fim: &DMatrix<f64>, v: &[f64]) -> Result<Vec<f64>> {
    let chol = crate::linalg::cholesky(fim).ok_or(Error::IllConditioned {
        condition: crate::linalg::condition_number(fim),
    })?;
    Ok(chol.solve(&DVector::from_column_slice(v)).iter().copied().collect())
}

/// Angle (radians) between the exact infinite-population IGO
/// displacement at step `dt` and `F^-1 grad J`, with the gradient of
/// `J(theta) = E_theta[W_eta(x)]` taken by central differences at `eta`.
pub fn direction_angle(
    eta: &[f64],
    table: &[f64],
    scheme: &SelectionScheme,
    dt: f64,
    h: f64,
) -> Result<f64> {
    let next = oracle::exact_infinite_population_step(eta, table, scheme, dt)?;
    let displacement: Vec<f64> = next.iter().zip(eta).map(|(a, b)| a - b).collect();
    let grad = central_gradient(eta, h, |e| oracle::exact_j(e, eta, table, scheme))?;
    let model = Model::bernoulli(eta.len());
    let natural = solve_fisher(&model.fisher_information(eta)?, &grad)?;
    let a = DVector::from_vec(displacement);
    let b = DVector::from_vec(natural);
    let cos = a.dot(&b) / (a.norm() * b.norm());
    Ok(cos.clamp(-1.0, 1.0).acos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_quantile_examples() {
        assert_eq!(empirical_quantile(&[3.0, 1.0, 2.0, 4.0], 0.25).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&[5.0, 5.0, 5.0], 0.3).unwrap(), 5.0);
        assert_eq!(empirical_quantile(&[1.0, 2.0], 0.5).unwrap(), 2.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
    }

    #[test]
    fn progress_bound_examples() {
        let table = [0.0, 1.0, 1.0, 2.0];
        let q = SelectionScheme::truncation(0.5).unwrap();
        let r = progress_bound(&[0.5, 0.5], &[0.375, 0.375], &table, &q, 0.5).unwrap();
        assert!((r.j_value - 1.25).abs() < 1e-12);
        assert!((r.kl_value - 0.064539).abs() < 1e-6);
        assert!((r.bound - 1.06667).abs() < 1e-5);
        assert!(r.satisfied && !r.fixed_point);
        let same = progress_bound(&[0.5, 0.5], &[0.5, 0.5], &table, &q, 0.5).unwrap();
        assert_eq!(same.j_value, 1.0);
        assert_eq!(same.bound, 1.0);
        assert!(!same.satisfied && same.fixed_point);
        let full = progress_bound(&[0.5, 0.5], &[0.375, 0.375], &table, &q, 1.0).unwrap();
        assert_eq!(full.bound, 1.0);
        assert!(full.satisfied);
    }

    #[test]
    fn kl_expansion_examples() {
        let m = Model::bernoulli(1);
        let e0 = check_kl_expansion(m, &[0.5], &[0.1], 0).unwrap();
        assert!((e0[0] - 4.11e-4).abs() < 1e-6);
        let e1 = check_kl_expansion(m, &[0.5], &[0.05], 0).unwrap();
        assert!((e1[0] - 2.52e-5).abs() < 1e-7);
        assert_eq!(check_kl_expansion(m, &[0.5], &[0.0], 2).unwrap(), [0.0; 3]);
    }

    #[test]
    fn improvement_stats_counts() {
        let mut s = ImprovementStats::default();
        s.record(3.0, 2.0);
        s.record(2.0, 2.0);
        s.record(2.0, 2.5);
        assert_eq!(s.steps_total, 3);
        assert!((s.improvement_rate() - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.strict_rate() - 1.0 / 3.0).abs() < 1e-15);
    }
}
