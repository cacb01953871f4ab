//! Monte-Carlo evaluation of the discounted cost along simulated paths.
//!
//! Paths follow the Euler scheme with a post-step clamp into
//! `[clamp_eps, 1 - clamp_eps]`, and the cost integral is truncated at a
//! horizon long enough that the discarded tail is provably below
//! `exp(-delta T) * sup f / delta`. Estimates are bit-reproducible: every
//! path owns a fixed counter-mode RNG stream derived from (seed, purpose,
//! path index), and samples are reduced in path order with compensated
//! summation, so neither the batch layout nor the worker count can change
//! a single bit of the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{diffusion, drift, running_cost, ControlPair, Problem};

/// Quadrature rule for the discounted running-cost integral along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Left-endpoint rule; first-order bias, one cost evaluation per step.
    #[default]
    Left,
    /// Trapezoidal rule; removes the O(dt) quadrature bias, useful when the
    /// estimate is compared against closed forms.
    Trapezoid,
}

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    /// Euler step size.
    pub dt: f64,
    /// Truncation horizon; `None` picks the smallest horizon making the
    /// tail bound at most 1e-4 (and at least 200).
    pub horizon: Option<f64>,
    /// Number of simulated paths per estimate.
    pub n_paths: usize,
    /// Master seed; all streams derive from it.
    pub seed: u64,
    /// Paths are clamped into `[clamp_eps, 1 - clamp_eps]` after each step.
    pub clamp_eps: f64,
    /// Paths per work unit handed to the thread pool. Any value yields
    /// identical estimates; it only tunes scheduling granularity.
    pub batch_size: usize,
    pub quadrature: Quadrature,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            dt: 1e-3,
            horizon: None,
            n_paths: 20_000,
            seed: 0x5152_4d31,
            clamp_eps: 1e-4,
            batch_size: 64,
            quadrature: Quadrature::Left,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::invalid("mc.dt", "must be finite and > 0"));
        }
        if let Some(t) = self.horizon {
            if !t.is_finite() || t < self.dt {
                return Err(Error::invalid("mc.horizon", "must be finite and >= dt"));
            }
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("mc.n_paths", "at least one path required"));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::invalid("mc.clamp_eps", "must lie in (0, 0.5)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("mc.batch_size", "must be >= 1"));
        }
        Ok(())
    }

    /// Truncation horizon actually used for `problem`, as a whole number of
    /// steps. The default choice makes `exp(-delta T) * sup f / delta`
    /// at most 1e-4.
    pub fn resolve_horizon(&self, problem: &Problem) -> (usize, f64) {
        let delta = problem.model.delta;
        let t = self.horizon.unwrap_or_else(|| {
            let needed = (problem.cost_sup() / (delta * 1e-4)).ln() / delta;
            needed.max(200.0)
        });
        let steps = (t / self.dt).ceil() as usize;
        (steps.max(1), steps.max(1) as f64 * self.dt)
    }
}

/// Something that prescribes controls for every reachable state, i.e. for
/// all of `[clamp_eps, 1 - clamp_eps]`.
pub trait Policy: Sync {
    fn controls(&self, x: f64) -> ControlPair;
}

/// The same controls everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub ControlPair);

impl Policy for ConstantPolicy {
    fn controls(&self, _x: f64) -> ControlPair {
        self.0
    }
}

impl<F> Policy for F
where
    F: Fn(f64) -> ControlPair + Sync,
{
    fn controls(&self, x: f64) -> ControlPair {
        self(x)
    }
}

/// Stream purposes; estimates with different purposes are independent, while
/// the two points of a derivative estimate share one purpose (and therefore
/// one noise sequence per path).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Value estimate at the lower grid edge.
    LowerEdge,
    /// Common-random-number pair behind the upper-edge slope estimate.
    UpperEdge,
    /// Standalone cross-validation probe at index `i`.
    Probe(u32),
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::LowerEdge => 1,
            StreamPurpose::UpperEdge => 2,
            StreamPurpose::Probe(i) => 0x1000 + i as u64,
        }
    }
}

/// One estimate of the discounted total cost from a fixed starting state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    /// Sample standard deviation of the path costs divided by sqrt(n).
    pub std_err: f64,
    /// Deterministic bound on the discarded tail beyond the horizon.
    pub tail_bound: f64,
    pub horizon: f64,
    pub n_paths: usize,
    /// Total number of post-step clamps across all paths.
    pub clamp_count: u64,
}

/// Boundary data for the value equation on a grid: a value at the lower edge
/// and a slope at the upper edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub dirichlet: f64,
    pub neumann: f64,
    pub dirichlet_std_err: f64,
    /// Standard error of the slope, from per-path differences of the
    /// common-random-number pair.
    pub neumann_std_err: f64,
    pub tail_bound: f64,
    /// Spacing of the one-sided difference behind `neumann`.
    pub h_b: f64,
}

/// Per-step quadrature weights `w_i` such that the path cost sample is
/// `sum_i w_i f(X_i)`; shared across all paths of an estimate.
struct QuadraturePlan {
    weights: Vec<f64>,
    steps: usize,
    sqrt_dt: f64,
}

impl QuadraturePlan {
    fn new(cfg: &McConfig, problem: &Problem) -> Self {
        let (steps, _) = cfg.resolve_horizon(problem);
        let delta = problem.model.delta;
        let mut weights = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            weights.push((-delta * i as f64 * cfg.dt).exp() * cfg.dt);
        }
        match cfg.quadrature {
            Quadrature::Left => weights[steps] = 0.0,
            Quadrature::Trapezoid => {
                weights[0] *= 0.5;
                weights[steps] *= 0.5;
            }
        }
        QuadraturePlan {
            weights,
            steps,
            sqrt_dt: cfg.dt.sqrt(),
        }
    }

    fn tail_bound(&self, cfg: &McConfig, problem: &Problem) -> f64 {
        let delta = problem.model.delta;
        (-delta * self.steps as f64 * cfg.dt).exp() * problem.cost_sup() / delta
    }
}

fn stream_rng(seed: u64, purpose: StreamPurpose, path: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.tag().to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(path);
    rng
}

/// Kahan-compensated accumulator; keeps long sums independent of magnitude
/// ordering effects.
#[derive(Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

fn run_path(
    x0: f64,
    policy: &impl Policy,
    problem: &Problem,
    cfg: &McConfig,
    plan: &QuadraturePlan,
    rng: &mut ChaCha8Rng,
) -> (f64, u64) {
    let p = &problem.model;
    let k = &problem.cost;
    let lo = cfg.clamp_eps;
    let hi = 1.0 - cfg.clamp_eps;
    let mut x = x0.clamp(lo, hi);
    let mut cost = Kahan::default();
    let mut clamps = 0u64;
    for i in 0..=plan.steps {
        let u = policy.controls(x);
        cost.add(plan.weights[i] * running_cost(x, u, k));
        if i < plan.steps {
            let z: f64 = StandardNormal.sample(rng);
            x += drift(x, u, p) * cfg.dt + diffusion(x, p) * plan.sqrt_dt * z;
            if x < lo {
                x = lo;
                clamps += 1;
            } else if x > hi {
                x = hi;
                clamps += 1;
            }
        }
    }
    (cost.sum, clamps)
}

/// Simulate the single path owned by `(seed, purpose, path_index)` and return
/// its discounted-cost sample together with the clamp count.
pub fn simulate_path(
    x0: f64,
    policy: &impl Policy,
    problem: &Problem,
    cfg: &McConfig,
    purpose: StreamPurpose,
    path_index: u64,
) -> (f64, u64) {
    let plan = QuadraturePlan::new(cfg, problem);
    let mut rng = stream_rng(cfg.seed, purpose, path_index);
    run_path(x0, policy, problem, cfg, &plan, &mut rng)
}

/// All per-path samples of an estimate, in path order.
fn sample_paths(
    x0: f64,
    policy: &impl Policy,
    problem: &Problem,
    cfg: &McConfig,
    plan: &QuadraturePlan,
    purpose: StreamPurpose,
) -> (Vec<f64>, u64) {
    let n = cfg.n_paths;
    let batch = cfg.batch_size.min(n);
    let chunks: Vec<(u64, Vec<f64>, u64)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(batch)
        .map(|ids| {
            let mut out = Vec::with_capacity(ids.len());
            let mut clamps = 0u64;
            for &id in ids {
                let mut rng = stream_rng(cfg.seed, purpose, id as u64);
                let (c, cl) = run_path(x0, policy, problem, cfg, plan, &mut rng);
                out.push(c);
                clamps += cl;
            }
            (ids[0] as u64, out, clamps)
        })
        .collect();
    let mut samples = vec![0.0; n];
    let mut clamps = 0u64;
    for (start, vals, cl) in chunks {
        samples[start as usize..start as usize + vals.len()].copy_from_slice(&vals);
        clamps += cl;
    }
    (samples, clamps)
}

fn mean_and_std_err(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    let mut acc = Kahan::default();
    for &s in samples {
        acc.add(s);
    }
    let mean = acc.sum / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let mut var = Kahan::default();
    for &s in samples {
        var.add((s - mean) * (s - mean));
    }
    (mean, (var.sum / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

/// Estimate the discounted total cost of following `policy` from `x0`.
pub fn estimate_cost(
    x0: f64,
    policy: &impl Policy,
    problem: &Problem,
    cfg: &McConfig,
    purpose: StreamPurpose,
) -> CostEstimate {
    let plan = QuadraturePlan::new(cfg, problem);
    let (samples, clamp_count) = sample_paths(x0, policy, problem, cfg, &plan, purpose);
    let (mean, std_err) = mean_and_std_err(&samples);
    CostEstimate {
        mean,
        std_err,
        tail_bound: plan.tail_bound(cfg, problem),
        horizon: plan.steps as f64 * cfg.dt,
        n_paths: cfg.n_paths,
        clamp_count,
    }
}

/// Estimate the boundary data the value equation needs on `[lo, hi]`:
/// the policy's cost at `lo` (Dirichlet) and its slope at `hi` (Neumann).
///
/// The slope is a one-sided difference `[J(hi) - J(hi - h_b)] / h_b` with the
/// two estimates driven by identical noise per path, so the difference is
/// far less noisy than either endpoint.
pub fn boundary_data(
    lo: f64,
    hi: f64,
    h_b: f64,
    policy: &impl Policy,
    problem: &Problem,
    cfg: &McConfig,
) -> BoundaryData {
    debug_assert!(h_b > 0.0 && hi - h_b > lo);
    let plan = QuadraturePlan::new(cfg, problem);
    let (lower, clamps_lower) = sample_paths(lo, policy, problem, cfg, &plan, StreamPurpose::LowerEdge);
    let (dirichlet, dirichlet_std_err) = mean_and_std_err(&lower);
    let _ = clamps_lower;

    let (at_hi, _) = sample_paths(hi, policy, problem, cfg, &plan, StreamPurpose::UpperEdge);
    let (inset, _) = sample_paths(hi - h_b, policy, problem, cfg, &plan, StreamPurpose::UpperEdge);
    let diffs: Vec<f64> = at_hi.iter().zip(&inset).map(|(a, b)| a - b).collect();
    let (diff_mean, diff_se) = mean_and_std_err(&diffs);

    BoundaryData {
        dirichlet,
        neumann: diff_mean / h_b,
        dirichlet_std_err,
        neumann_std_err: diff_se / h_b,
        tail_bound: plan.tail_bound(cfg, problem),
        h_b,
    }
}
