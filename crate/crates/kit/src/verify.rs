//! Verification suites.
//!
//! Each suite runs a fixed, seeded set of cases and returns a report
//! that serializes to JSON. Cases run in parallel on the pool from
//! [`crate::pool`]; results are collected in case order, so reports are
//! identical for any thread count.

use std::fmt;
use std::str::FromStr;

use igo_core::diagnostics::{self, max_abs_diff, ImprovementConfig, ImprovementStats};
use igo_core::exp_family::{Model, Params};
use igo_core::linalg::outer;
use igo_core::objectives::{Objective, ObjectiveId};
use igo_core::oracle;
use igo_core::rng;
use igo_core::selection::{sample_weights, SelectionScheme};
use igo_core::updates::{self, BlockDecomposition, Rule};
use igo_core::GaussianParams;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

/// Quantile comparisons and fixed-point detection use this tolerance.
pub const TOL: f64 = 1e-12;

pub const SUITES: [&str; 9] = [
    "quantile-improvement",
    "blockwise",
    "fitness-proportional",
    "progress-bound",
    "equivalence",
    "cma-recovery",
    "kl-expansion",
    "natural-gradient",
    "finite-population",
];

/// Seeds of the finite-population suite.
pub const COMMITTED_SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSize {
    Small,
    Full,
}

impl GridSize {
    pub fn cases(self) -> usize {
        match self {
            GridSize::Small => 200,
            GridSize::Full => 1000,
        }
    }
}

impl FromStr for GridSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "small" => Ok(GridSize::Small),
            "full" => Ok(GridSize::Full),
            _ => Err(format!("unknown grid `{s}` (expected small or full)")),
        }
    }
}

impl fmt::Display for GridSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridSize::Small => "small",
            GridSize::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub grid: GridSize,
    pub seed: u64,
    pub steps: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            grid: GridSize::Small,
            seed: 1,
            steps: 100,
        }
    }
}

/// A finished suite.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: String,
    pub passed: bool,
    pub summary: serde_json::Value,
    pub cases: serde_json::Value,
}

pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<Report, String> {
    let report = match name {
        "quantile-improvement" => {
            let r = quantile_improvement(opts).map_err(|e| e.to_string())?;
            let s = &r.summary;
            let passed = s.q_increases == 0 && s.unexplained_stalls == 0;
            finish(name, passed, s, &r.cases)
        }
        "blockwise" => {
            let r = blockwise(opts).map_err(|e| e.to_string())?;
            finish(name, r.summary.q_increases == 0, &r.summary, &r.cases)
        }
        "fitness-proportional" => {
            let r = fitness_proportional(opts).map_err(|e| e.to_string())?;
            finish(name, r.summary.passed(), &r.summary, &r.cases)
        }
        "progress-bound" => {
            let r = progress_bound(opts).map_err(|e| e.to_string())?;
            finish(name, r.passed(), &r, &r.worked)
        }
        "equivalence" => {
            let r = equivalence(opts.seed, 1000).map_err(|e| e.to_string())?;
            finish(name, r.passed(), &r, &serde_json::Value::Null)
        }
        "cma-recovery" => {
            let r = cma_recovery(opts.seed, 500).map_err(|e| e.to_string())?;
            finish(name, r.passed(), &r, &serde_json::Value::Null)
        }
        "kl-expansion" => {
            let r = kl_expansion().map_err(|e| e.to_string())?;
            finish(name, r.passed, &r, &r.cases)
        }
        "natural-gradient" => {
            let r = natural_gradient(opts.seed, 200).map_err(|e| e.to_string())?;
            finish(name, r.passed(), &r, &serde_json::Value::Null)
        }
        "finite-population" => {
            let r = finite_population(&COMMITTED_SEEDS).map_err(|e| e.to_string())?;
            finish(name, r.passed(), &r, &r.per_seed)
        }
        other => return Err(format!("unknown suite `{other}`; known: {}", SUITES.join(", "))),
    };
    Ok(report)
}

fn finish<S: Serialize, C: Serialize>(suite: &str, passed: bool, summary: &S, cases: &C) -> Report {
    Report {
        suite: suite.to_string(),
        passed,
        summary: serde_json::to_value(summary).expect("reports serialize"),
        cases: serde_json::to_value(cases).expect("reports serialize"),
    }
}

// ---------------------------------------------------------------------------
// exact grids

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridObjective {
    OneMax,
    BinVal,
    RandomTable,
}

/// One configuration of the exact quantile-improvement grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridCase {
    pub id: usize,
    pub dim: usize,
    pub objective: GridObjective,
    pub table_seed: u64,
    pub q: f64,
    pub dt: f64,
    pub eta0: Vec<f64>,
}

impl GridCase {
    pub fn table(&self) -> igo_core::Result<Vec<f64>> {
        let id = match self.objective {
            GridObjective::OneMax => ObjectiveId::OneMax,
            GridObjective::BinVal => ObjectiveId::BinVal,
            GridObjective::RandomTable => ObjectiveId::RandomTable,
        };
        let objective = Objective::new(id, self.dim, self.table_seed)?;
        oracle::tabulate(self.dim, &objective)
    }

    pub fn scheme(&self) -> SelectionScheme {
        SelectionScheme::truncation(self.q).expect("grid q values are interior")
    }
}

const GRID_Q: [f64; 3] = [0.1, 0.25, 0.5];
const GRID_DT: [f64; 3] = [0.1, 0.5, 1.0];

/// The seeded grid: dimensions 1..=10, initial probabilities in
/// `[0.05, 0.95]`, and every (objective, q, dt) combination in turn.
pub fn grid(size: GridSize, seed: u64) -> Vec<GridCase> {
    let mut rng = rng::stream(seed, 0x6772_6964);
    (0..size.cases())
        .map(|id| {
            let dim = rng.random_range(1..=10);
            let eta0 = (0..dim).map(|_| rng.random_range(0.05..=0.95)).collect();
            let objective = match id % 3 {
                0 => GridObjective::OneMax,
                1 => GridObjective::BinVal,
                _ => GridObjective::RandomTable,
            };
            GridCase {
                id,
                dim,
                objective,
                table_seed: seed.wrapping_mul(1_000_003).wrapping_add(id as u64),
                q: GRID_Q[(id / 3) % 3],
                dt: GRID_DT[(id / 9) % 3],
                eta0,
            }
        })
        .collect()
}

/// Per-case outcome of an exact quantile run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct QuantileOutcome {
    pub id: usize,
    pub steps_run: usize,
    /// Step at which the update reached the boundary of the domain.
    pub boundary_step: Option<usize>,
    pub q_increases: usize,
    pub max_q_increase: f64,
    pub stalls: usize,
    pub stalls_fixed_point: usize,
    pub unexplained_stalls: usize,
    pub fixed_points: usize,
    /// Progress-bound checks on moving steps with `dt < 1`.
    pub bound_checks: usize,
    pub bound_failures: usize,
    /// Smallest `(J - 1) / (bound - 1)` seen (moving steps, `dt < 1`).
    pub min_bound_ratio: Option<f64>,
    /// `J > 1` checks on moving steps with `dt = 1`.
    pub unit_step_checks: usize,
    pub unit_step_failures: usize,
    pub initial_quantile: f64,
    pub final_quantile: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct QuantileSummary {
    pub grid: String,
    pub seed: u64,
    pub configs: usize,
    pub steps_per_config: usize,
    pub steps_run: usize,
    pub q_increases: usize,
    pub stalls: usize,
    pub unexplained_stalls: usize,
    pub fixed_points: usize,
    pub boundary_terminations: usize,
    pub bound_checks: usize,
    pub bound_failures: usize,
    pub min_bound_ratio: Option<f64>,
    pub unit_step_checks: usize,
    pub unit_step_failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantileReport {
    pub summary: QuantileSummary,
    pub cases: Vec<QuantileOutcome>,
}

fn summarize(
    opts: &VerifyOptions,
    cases: Vec<QuantileOutcome>,
) -> QuantileReport {
    let mut s = QuantileSummary {
        grid: opts.grid.to_string(),
        seed: opts.seed,
        configs: cases.len(),
        steps_per_config: opts.steps,
        ..Default::default()
    };
    for c in &cases {
        s.steps_run += c.steps_run;
        s.q_increases += c.q_increases;
        s.stalls += c.stalls;
        s.unexplained_stalls += c.unexplained_stalls;
        s.fixed_points += c.fixed_points;
        s.boundary_terminations += usize::from(c.boundary_step.is_some());
        s.bound_checks += c.bound_checks;
        s.bound_failures += c.bound_failures;
        s.unit_step_checks += c.unit_step_checks;
        s.unit_step_failures += c.unit_step_failures;
        if let Some(r) = c.min_bound_ratio {
            s.min_bound_ratio = Some(s.min_bound_ratio.map_or(r, |m: f64| m.min(r)));
        }
    }
    QuantileReport { summary: s, cases }
}

/// How a grid case moves from one step to the next.
enum Stepper {
    Full,
    Blocks { blocks: Vec<Vec<usize>>, dts: Vec<f64> },
}

fn run_quantile_case(
    case: &GridCase,
    steps: usize,
    stepper: &Stepper,
    check_bound: bool,
) -> igo_core::Result<QuantileOutcome> {
    let table = case.table()?;
    let scheme = case.scheme();
    let mut eta = case.eta0.clone();
    let mut q_now = oracle::quantile_at(&eta, &table, case.q)?.value;
    let mut out = QuantileOutcome {
        id: case.id,
        initial_quantile: q_now,
        ..Default::default()
    };
    for step in 1..=steps {
        let next = match stepper {
            Stepper::Full => oracle::exact_infinite_population_step(&eta, &table, &scheme, case.dt),
            Stepper::Blocks { blocks, dts } => {
                oracle::exact_blockwise_step(&eta, &table, &scheme, blocks, dts)
            }
        };
        let next = match next {
            Ok(n) => n,
            Err(e) if e.is_domain_exit() => {
                out.boundary_step = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        out.steps_run += 1;
        let q_next = oracle::quantile_at(&next, &table, case.q)?.value;
        let fixed = max_abs_diff(&eta, &next) <= TOL;
        out.fixed_points += usize::from(fixed);
        if q_next > q_now + TOL {
            out.q_increases += 1;
            out.max_q_increase = out.max_q_increase.max(q_next - q_now);
        } else if q_next >= q_now - TOL {
            out.stalls += 1;
            if fixed {
                out.stalls_fixed_point += 1;
            } else if oracle::level_mass(&next, &table, q_next)? <= 0.0 {
                out.unexplained_stalls += 1;
            }
        }
        if check_bound && !fixed {
            let report = diagnostics::progress_bound(&eta, &next, &table, &scheme, case.dt)?;
            if case.dt < 1.0 {
                out.bound_checks += 1;
                out.bound_failures += usize::from(!report.satisfied);
                let ratio = report.j_excess / report.bound_excess;
                out.min_bound_ratio = Some(out.min_bound_ratio.map_or(ratio, |m| m.min(ratio)));
            } else {
                out.unit_step_checks += 1;
                out.unit_step_failures += usize::from(!report.satisfied);
            }
        }
        eta = next;
        q_now = q_next;
    }
    out.final_quantile = q_now;
    Ok(out)
}

fn par_cases<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> igo_core::Result<R> + Sync + Send,
) -> igo_core::Result<Vec<R>> {
    crate::pool().install(|| items.par_iter().map(f).collect())
}

/// Exact infinite-population IGO on the grid: the q-quantile never
/// increases, and every stall is a fixed point or has positive mass on
/// the quantile level. Also evaluates the progress bound.
pub fn quantile_improvement(opts: &VerifyOptions) -> igo_core::Result<QuantileReport> {
    let cases = grid(opts.grid, opts.seed);
    let out = par_cases(&cases, |c| run_quantile_case(c, opts.steps, &Stepper::Full, true))?;
    Ok(summarize(opts, out))
}

/// Blockwise variant of the grid: a random ordered partition of the
/// coordinates and a step size in `(0, 1]` per block.
pub fn blockwise(opts: &VerifyOptions) -> igo_core::Result<QuantileReport> {
    let cases = grid(opts.grid, opts.seed);
    let out = par_cases(&cases, |c| {
        let mut rng = rng::stream(opts.seed, 0x626c_6f63_6b00 + c.id as u64);
        let mut coords: Vec<usize> = (0..c.dim).collect();
        coords.shuffle(&mut rng);
        let k = rng.random_range(1..=c.dim);
        let mut blocks = vec![Vec::new(); k];
        for (j, i) in coords.into_iter().enumerate() {
            // the first k coordinates seed the k blocks
            let b = if j < k { j } else { rng.random_range(0..k) };
            blocks[b].push(i);
        }
        let dts = (0..k).map(|_| 1.0 - rng.random::<f64>()).collect();
        run_quantile_case(c, opts.steps, &Stepper::Blocks { blocks, dts }, false)
    })?;
    Ok(summarize(opts, out))
}

#[derive(Debug, Clone, Serialize)]
pub struct WorkedBound {
    pub j_value: f64,
    pub kl_value: f64,
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundSuite {
    pub grid: QuantileSummary,
    pub worked: WorkedBound,
}

impl BoundSuite {
    pub fn passed(&self) -> bool {
        self.grid.bound_failures == 0
            && (self.worked.j_value - 1.25).abs() <= 1e-6
            && (self.worked.bound - 16.0 / 15.0).abs() <= 1e-6
            && self.worked.satisfied
    }
}

/// The grid's progress-bound statistics plus the two-bit worked example.
pub fn progress_bound(opts: &VerifyOptions) -> igo_core::Result<BoundSuite> {
    let grid = quantile_improvement(opts)?.summary;
    let table = [0.0, 1.0, 1.0, 2.0];
    let scheme = SelectionScheme::truncation(0.5)?;
    let next = oracle::exact_infinite_population_step(&[0.5, 0.5], &table, &scheme, 0.5)?;
    let r = diagnostics::progress_bound(&[0.5, 0.5], &next, &table, &scheme, 0.5)?;
    Ok(BoundSuite {
        grid,
        worked: WorkedBound {
            j_value: r.j_value,
            kl_value: r.kl_value,
            bound: r.bound,
            satisfied: r.satisfied,
        },
    })
}

// ---------------------------------------------------------------------------
// fitness-proportional

#[derive(Debug, Clone, Default, Serialize)]
pub struct RewardOutcome {
    pub id: usize,
    pub dim: usize,
    pub dt: f64,
    pub steps_run: usize,
    pub boundary_step: Option<usize>,
    pub decreases: usize,
    /// Most negative accurate change of expected reward.
    pub min_change: f64,
    pub equal_steps: usize,
    pub equal_not_fixed: usize,
    /// `|step - E[x r]/E[r]|` on the first step (`dt = 1` only).
    pub rpp_error: Option<f64>,
    pub initial_reward: f64,
    pub final_reward: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RewardSummary {
    pub configs: usize,
    pub steps_run: usize,
    pub decreases: usize,
    pub min_change: f64,
    pub equal_not_fixed: usize,
    pub boundary_terminations: usize,
    pub rpp_checks: usize,
    pub max_rpp_error: f64,
}

impl RewardSummary {
    pub fn passed(&self) -> bool {
        self.decreases == 0 && self.equal_not_fixed == 0 && self.max_rpp_error <= 1e-12
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RewardReport {
    pub summary: RewardSummary,
    pub cases: Vec<RewardOutcome>,
}

/// `E[x r] / E[r]` by direct summation over the support.
pub fn rpp_target(eta: &[f64], rewards: &[f64]) -> Vec<f64> {
    let d = eta.len();
    let mut num = vec![0.0; d];
    let mut den = 0.0;
    for (k, r) in rewards.iter().enumerate() {
        let mut p = 1.0;
        for (i, &e) in eta.iter().enumerate() {
            let bit = (k >> (d - 1 - i)) & 1 == 1;
            p *= if bit { e } else { 1.0 - e };
        }
        den += p * r;
        for (i, n) in num.iter_mut().enumerate() {
            if (k >> (d - 1 - i)) & 1 == 1 {
                *n += p * r;
            }
        }
    }
    num.into_iter().map(|n| n / den).collect()
}

/// Exact fitness-proportional steps on random non-negative reward
/// tables: the expected reward never decreases and only stays equal at
/// fixed points; `dt = 1` matches `E[x r] / E[r]`.
pub fn fitness_proportional(opts: &VerifyOptions) -> igo_core::Result<RewardReport> {
    const DTS: [f64; 3] = [0.25, 0.5, 1.0];
    let mut rng = rng::stream(opts.seed, 0x7265_7761_7264);
    let cases: Vec<(usize, Vec<f64>, Vec<f64>, f64)> = (0..opts.grid.cases())
        .map(|id| {
            let dim = rng.random_range(1..=10);
            let eta0: Vec<f64> = (0..dim).map(|_| rng.random_range(0.05..=0.95)).collect();
            let mut rewards: Vec<f64> = (0..1usize << dim)
                .map(|_| {
                    if rng.random::<f64>() < 0.2 {
                        0.0
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            if rewards.iter().all(|&r| r == 0.0) {
                rewards[0] = 1.0;
            }
            (id, eta0, rewards, DTS[id % 3])
        })
        .collect();
    let steps = opts.steps;
    let out = par_cases(&cases, |(id, eta0, rewards, dt)| {
        let mut eta = eta0.clone();
        let mut out = RewardOutcome {
            id: *id,
            dim: eta.len(),
            dt: *dt,
            initial_reward: oracle::exact_expected_fitness(&eta, rewards)?,
            ..Default::default()
        };
        for step in 1..=steps {
            let next = match oracle::exact_fitness_proportional_step(&eta, rewards, *dt) {
                Ok(n) => n,
                Err(e) if e.is_domain_exit() => {
                    out.boundary_step = Some(step);
                    break;
                }
                Err(e) => return Err(e),
            };
            if step == 1 && *dt == 1.0 {
                out.rpp_error = Some(max_abs_diff(&next, &rpp_target(&eta, rewards)));
            }
            out.steps_run += 1;
            let change = oracle::exact_expected_change(&next, &eta, rewards)?;
            out.min_change = out.min_change.min(change);
            if change < -TOL {
                out.decreases += 1;
            } else if change <= 0.0 {
                out.equal_steps += 1;
                if max_abs_diff(&eta, &next) > TOL {
                    out.equal_not_fixed += 1;
                }
            }
            eta = next;
        }
        out.final_reward = oracle::exact_expected_fitness(&eta, rewards)?;
        Ok(out)
    })?;
    let mut s = RewardSummary {
        configs: out.len(),
        ..Default::default()
    };
    for c in &out {
        s.steps_run += c.steps_run;
        s.decreases += c.decreases;
        s.min_change = s.min_change.min(c.min_change);
        s.equal_not_fixed += c.equal_not_fixed;
        s.boundary_terminations += usize::from(c.boundary_step.is_some());
        if let Some(e) = c.rpp_error {
            s.rpp_checks += 1;
            s.max_rpp_error = s.max_rpp_error.max(e);
        }
    }
    Ok(RewardReport {
        summary: s,
        cases: out,
    })
}

// ---------------------------------------------------------------------------
// finite-sample identities

fn random_gaussian<R: Rng>(rng: &mut R, d: usize) -> GaussianParams {
    let mean: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1;
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianParams::new(mean, cov).expect("A A^T + 0.1 I is positive definite")
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FamilyEquivalence {
    pub instances: usize,
    /// Max coordinate gap between the three proposed points.
    pub max_discrepancy: f64,
    /// All three points inside the domain.
    pub all_valid: usize,
    /// All three points outside (or on the boundary of) the domain.
    pub all_exited: usize,
    /// Validity differs between the rules; only acceptable when the
    /// points lie within the tolerance of the boundary.
    pub boundary_ties: usize,
    pub unexplained_mismatches: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub tolerance: f64,
    pub bernoulli: FamilyEquivalence,
    pub gaussian: FamilyEquivalence,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        [&self.bernoulli, &self.gaussian]
            .iter()
            .all(|f| f.unexplained_mismatches == 0 && f.max_discrepancy <= self.tolerance)
    }
}

/// Distance of an expectation point from the edge of the domain:
/// smallest `min(p, 1 - p)` or smallest covariance eigenvalue.
fn boundary_distance(model: Model, eta: &[f64]) -> f64 {
    match model {
        Model::Bernoulli { .. } => eta.iter().map(|&p| p.min(1.0 - p)).fold(f64::INFINITY, f64::min),
        Model::Gaussian { dim } => match updates::gaussian_moments(dim, eta) {
            Ok((_, cov)) => cov.symmetric_eigenvalues().min(),
            Err(_) => f64::NEG_INFINITY,
        },
    }
}

/// Random `(state, samples, weights, dt)` instances on which the IGO,
/// IGO-ML and smoothed cross-entropy updates are compared.
pub fn equivalence(seed: u64, per_family: usize) -> igo_core::Result<EquivalenceReport> {
    const DTS: [f64; 3] = [0.1, 0.5, 1.0];
    const QS: [f64; 3] = [0.1, 0.25, 0.5];
    const TOLERANCE: f64 = 1e-10;
    let ids: Vec<usize> = (0..2 * per_family).collect();
    let results = par_cases(&ids, |&id| {
        let gaussian = id >= per_family;
        let mut rng = rng::stream(seed, 0x6571_7569_7600 + id as u64);
        let dt = DTS[id % 3];
        let q = QS[(id / 3) % 3];
        let (model, eta) = if gaussian {
            let d = rng.random_range(1..=4);
            let p = Params::Gaussian(random_gaussian(&mut rng, d));
            (Model::gaussian(d), p.expectation().into_vec())
        } else {
            let d = rng.random_range(1..=8);
            let eta: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..=0.95)).collect();
            (Model::bernoulli(d), eta)
        };
        // enough selected points for a non-singular weighted covariance
        let lambda = ((model.dim() + 2) as f64 / q).ceil() as usize + rng.random_range(0..20);
        let samples = model.sample(&eta, &mut rng, lambda)?;
        let fitness: Vec<f64> = (0..lambda).map(|_| rng.random()).collect();
        let w = sample_weights(&fitness, &SelectionScheme::truncation(q)?)?;
        let points = [Rule::Igo, Rule::IgoMl, Rule::SmoothedCe]
            .map(|rule| updates::proposal(rule, model, &eta, &samples, &w, dt));
        let [a, b, c] = points;
        let (a, b, c) = (a?, b?, c?);
        let gap = max_abs_diff(&a, &b).max(max_abs_diff(&a, &c)).max(max_abs_diff(&b, &c));
        let valid = [&a, &b, &c].map(|p| model.validate(p).is_ok());
        let edge = [&a, &b, &c]
            .map(|p| boundary_distance(model, p))
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        Ok((gaussian, gap, valid, edge))
    })?;
    let mut bern = FamilyEquivalence::default();
    let mut gauss = FamilyEquivalence::default();
    for (gaussian, gap, valid, edge) in results {
        let fam = if gaussian { &mut gauss } else { &mut bern };
        fam.instances += 1;
        fam.max_discrepancy = fam.max_discrepancy.max(gap);
        match valid.iter().filter(|v| **v).count() {
            3 => fam.all_valid += 1,
            0 => fam.all_exited += 1,
            _ if edge <= TOLERANCE => fam.boundary_ties += 1,
            _ => fam.unexplained_mismatches += 1,
        }
    }
    Ok(EquivalenceReport {
        tolerance: TOLERANCE,
        bernoulli: bern,
        gaussian: gauss,
    })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CmaReport {
    pub instances: usize,
    pub dims: Vec<usize>,
    pub domain_exits: usize,
    pub max_mean_error: f64,
    pub max_cov_error: f64,
    pub tolerance: f64,
}

impl CmaReport {
    pub fn passed(&self) -> bool {
        self.domain_exits == 0
            && self.max_mean_error <= self.tolerance
            && self.max_cov_error <= self.tolerance
    }
}

/// Pure rank-mu CMA-ES formulas
/// `C' = (1 - dt_C) C + dt_C sum w (x - m)(x - m)^T`,
/// `m' = m + dt_m sum w (x - m)`, written out independently and compared
/// with blockwise IGO-ML (covariance block first).
pub fn cma_recovery(seed: u64, instances: usize) -> igo_core::Result<CmaReport> {
    const DIMS: [usize; 3] = [1, 2, 5];
    let ids: Vec<usize> = (0..instances).collect();
    let results = par_cases(&ids, |&id| {
        let mut rng = rng::stream(seed, 0x636d_6100 + id as u64);
        let d = DIMS[id % 3];
        let g = random_gaussian(&mut rng, d);
        let model = Model::gaussian(d);
        let eta = Params::Gaussian(g.clone()).expectation().into_vec();
        let lambda = 4 * d + 8 + rng.random_range(0..8);
        let samples = model.sample(&eta, &mut rng, lambda)?;
        let fitness: Vec<f64> = (0..lambda).map(|_| rng.random()).collect();
        let w = sample_weights(&fitness, &SelectionScheme::truncation(0.5)?)?;
        let dt_c = 1.0 - rng.random::<f64>();
        let dt_m = 1.0 - rng.random::<f64>();
        let blockwise = updates::blockwise_igo_ml_step(
            model,
            &eta,
            &samples,
            &w,
            &BlockDecomposition::CovarianceThenMean,
            &[dt_c, dt_m],
        );
        let next = match blockwise {
            Ok(n) => n,
            Err(e) if e.is_domain_exit() => return Ok(None),
            Err(e) => return Err(e),
        };
        let (m_got, c_got) = updates::gaussian_moments(d, &next)?;
        let m = g.mean();
        let mut scatter = DMatrix::zeros(d, d);
        let mut shift = DVector::zeros(d);
        for (x, wi) in samples.iter().zip(w.as_slice()) {
            let y = DVector::from_column_slice(x) - m;
            scatter += outer(&y) * *wi;
            shift += y * *wi;
        }
        let c_want = g.cov() * (1.0 - dt_c) + scatter * dt_c;
        let m_want = m + shift * dt_m;
        Ok(Some((
            (m_got - m_want).amax(),
            (c_got - c_want).amax(),
        )))
    })?;
    let mut r = CmaReport {
        instances,
        dims: DIMS.to_vec(),
        tolerance: 1e-12,
        ..Default::default()
    };
    for res in results {
        match res {
            Some((em, ec)) => {
                r.max_mean_error = r.max_mean_error.max(em);
                r.max_cov_error = r.max_cov_error.max(ec);
            }
            None => r.domain_exits += 1,
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// local expansions

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionCase {
    pub model: String,
    pub eta: Vec<f64>,
    pub delta: Vec<f64>,
    pub errors: Vec<f64>,
    pub ratios: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    pub halvings: usize,
    pub max_ratio: f64,
    pub passed: bool,
    pub cases: Vec<ExpansionCase>,
}

/// The committed (model, eta, delta) set of the KL expansion check.
pub fn expansion_cases() -> Vec<(Model, Vec<f64>, Vec<f64>)> {
    let gauss = |mean: Vec<f64>, cov: DMatrix<f64>| {
        Params::Gaussian(GaussianParams::new(mean, cov).expect("valid test Gaussian"))
            .expectation()
            .into_vec()
    };
    vec![
        (Model::bernoulli(1), vec![0.5], vec![0.05]),
        (Model::bernoulli(1), vec![0.3], vec![-0.05]),
        (Model::bernoulli(2), vec![0.2, 0.7], vec![0.03, -0.04]),
        (Model::bernoulli(3), vec![0.1, 0.5, 0.9], vec![0.01, 0.02, -0.02]),
        (Model::bernoulli(4), vec![0.6, 0.4, 0.25, 0.8], vec![-0.02, 0.02, 0.01, 0.015]),
        (Model::gaussian(1), vec![0.0, 1.0], vec![0.03, 0.04]),
        (Model::gaussian(1), gauss(vec![1.5], DMatrix::from_element(1, 1, 0.5)), vec![-0.02, 0.03]),
        (
            Model::gaussian(2),
            gauss(vec![0.5, -0.2], DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])),
            vec![0.02, -0.01, 0.03, 0.01, -0.02],
        ),
    ]
}

pub fn kl_expansion() -> igo_core::Result<ExpansionReport> {
    const HALVINGS: usize = 6;
    let mut cases = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for (model, eta, delta) in expansion_cases() {
        let errors = diagnostics::check_kl_expansion(model, &eta, &delta, HALVINGS)?;
        let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
        let passed = errors.windows(2).all(|w| w[1] <= w[0] / 4.0 + TOL);
        max_ratio = ratios.iter().copied().fold(max_ratio, f64::max);
        cases.push(ExpansionCase {
            model: format!("{model:?}"),
            eta,
            delta,
            errors,
            ratios,
            passed,
        });
    }
    Ok(ExpansionReport {
        halvings: HALVINGS,
        max_ratio,
        passed: cases.iter().all(|c| c.passed),
        cases,
    })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct NaturalGradientReport {
    pub instances: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Angle between the exact small-step displacement and the natural
    /// gradient of `J`, over the same Bernoulli states.
    pub max_direction_angle: f64,
    pub angle_tolerance: f64,
    /// Informational: the same identity with the numerical Gaussian
    /// Fisher matrix.
    pub gaussian_max_rel_error: f64,
}

impl NaturalGradientReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance && self.max_direction_angle <= self.angle_tolerance
    }
}

/// `F^-1 grad ln p(x)` by central differences against `T(x) - eta` on
/// Bernoulli `d <= 4`, and the direction of the exact IGO step.
pub fn natural_gradient(seed: u64, instances: usize) -> igo_core::Result<NaturalGradientReport> {
    let ids: Vec<usize> = (0..instances).collect();
    let results = par_cases(&ids, |&id| {
        let mut rng = rng::stream(seed, 0x6e67_7200 + id as u64);
        let d = rng.random_range(1..=4);
        let model = Model::bernoulli(d);
        let eta: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..=0.95)).collect();
        let x: Vec<f64> = (0..d).map(|_| f64::from(rng.random::<bool>())).collect();
        let check = diagnostics::natural_gradient_check(model, &eta, &x, 1e-6)?;
        let objective = Objective::new(ObjectiveId::RandomTable, d, id as u64)?;
        let table = oracle::tabulate(d, &objective)?;
        let scheme = SelectionScheme::truncation(0.3)?;
        let angle = diagnostics::direction_angle(&eta, &table, &scheme, 1e-4, 1e-6)?;
        let gd = 1 + id % 2;
        let g = random_gaussian(&mut rng, gd);
        let geta = Params::Gaussian(g.clone()).expectation().into_vec();
        let gx = Params::Gaussian(g).sample(&mut rng, 1).remove(0);
        let gcheck = diagnostics::natural_gradient_check(Model::gaussian(gd), &geta, &gx, 1e-5)?;
        Ok((check.rel_error, angle, gcheck.rel_error))
    })?;
    let mut r = NaturalGradientReport {
        instances,
        tolerance: 1e-5,
        angle_tolerance: 1e-3,
        ..Default::default()
    };
    for (e, a, g) in results {
        r.max_rel_error = r.max_rel_error.max(e);
        r.max_direction_angle = r.max_direction_angle.max(a);
        r.gaussian_max_rel_error = r.gaussian_max_rel_error.max(g);
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// finite population

#[derive(Debug, Clone, Serialize)]
pub struct SeedImprovement {
    pub seed: u64,
    pub stats: ImprovementStatsView,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImprovementStatsView {
    pub steps_total: usize,
    pub steps_improved: usize,
    pub steps_equal: usize,
    pub steps_worsened: usize,
    pub improvement_rate: f64,
    pub strict_rate: f64,
}

impl From<ImprovementStats> for ImprovementStatsView {
    fn from(s: ImprovementStats) -> Self {
        Self {
            steps_total: s.steps_total,
            steps_improved: s.steps_improved,
            steps_equal: s.steps_equal,
            steps_worsened: s.steps_worsened,
            improvement_rate: s.improvement_rate(),
            strict_rate: s.strict_rate(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FinitePopulationReport {
    pub dim: usize,
    pub lambda: usize,
    pub q: f64,
    pub dt: f64,
    pub steps: usize,
    pub threshold: f64,
    pub total: ImprovementStatsView,
    pub per_seed: Vec<SeedImprovement>,
}

impl FinitePopulationReport {
    pub fn passed(&self) -> bool {
        self.total.improvement_rate >= self.threshold
    }
}

/// PBIL on OneMax (`d = 8`, `lambda = 10^4`, `q = 0.25`, `dt = 0.5`, 50
/// steps per seed) with the exact quantile tracked after every step.
pub fn finite_population(seeds: &[u64]) -> igo_core::Result<FinitePopulationReport> {
    let config = ImprovementConfig {
        model: Model::bernoulli(8),
        initial: vec![0.5; 8],
        lambda: 10_000,
        scheme: SelectionScheme::truncation(0.25)?,
        q: 0.25,
        dt: 0.5,
        steps: 50,
        holdout: 0,
    };
    let objective = Objective::new(ObjectiveId::OneMax, 8, 0)?;
    let per = par_cases(seeds, |&seed| {
        diagnostics::finite_population_improvement(&config, &objective, seed)
    })?;
    let mut total = ImprovementStats::default();
    for s in &per {
        total.merge(s);
    }
    Ok(FinitePopulationReport {
        dim: 8,
        lambda: config.lambda,
        q: config.q,
        dt: config.dt,
        steps: config.steps,
        threshold: 0.9,
        total: total.into(),
        per_seed: seeds
            .iter()
            .zip(per)
            .map(|(&seed, s)| SeedImprovement {
                seed,
                stats: s.into(),
            })
            .collect(),
    })
}
