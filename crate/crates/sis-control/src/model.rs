//! State dynamics, running cost, and pointwise control optimization.
//!
//! The state `x` is the fraction of compromised nodes in a large network,
//! driven by the controlled diffusion
//!
//! ```text
//! dX = b(X, eta, rho) dt + sigma(X) dW,
//! b(x, eta, rho) = eta * alpha * (1 - x) + x * (eta^2 * beta * (1 - x) - (gamma + rho)),
//! sigma(x)       = sigma * x * (1 - x).
//! ```
//!
//! Two controls act on the system: `eta` in [0, 1] scales network activity
//! (1 = business as usual, 0 = full lockdown) and `rho >= 0` buys extra
//! cleanup capacity. Both boundaries of (0, 1) are non-attracting: the drift
//! points inward at 0 whenever `eta > 0` and always points inward at 1, and
//! the noise vanishes at both ends.
//!
//! Running a compromised network costs money. The instantaneous rate is
//!
//! ```text
//! f(x, eta, rho) = a0 + a_i * x
//!                + a_m_s * (1 - eta)^2 + (a_m_i - a_m_s) * x * (1 - eta)^2
//!                + a_r * x * rho^2,
//! ```
//!
//! and the planner minimizes the discounted total `E ∫ exp(-delta t) f dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dynamics parameters of the infection-ratio diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Intensity of attacks arriving from outside the network.
    pub alpha: f64,
    /// Intensity of infection spreading between nodes.
    pub beta: f64,
    /// Baseline cleanup rate without extra mitigation spending.
    pub gamma: f64,
    /// Noise amplitude of the infection ratio.
    pub sigma: f64,
    /// Discount rate of the cost functional.
    pub delta: f64,
}

/// Cost weights of the running cost `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    /// Flat operating cost, paid in any state.
    pub a0: f64,
    /// Marginal cost of carrying infected nodes (data loss, downtime).
    pub a_i: f64,
    /// Weight of activity reduction on infected nodes.
    pub a_m_i: f64,
    /// Weight of activity reduction on susceptible nodes.
    pub a_m_s: f64,
    /// Weight of mitigation spending.
    pub a_r: f64,
}

/// A control choice: activity level and mitigation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPair {
    /// Network activity in [0, 1].
    pub eta: f64,
    /// Extra cleanup rate in [0, rho_max].
    pub rho: f64,
}

impl ControlPair {
    pub const NO_ACTION: ControlPair = ControlPair { eta: 1.0, rho: 0.0 };

    pub fn new(eta: f64, rho: f64) -> Self {
        ControlPair { eta, rho }
    }
}

/// How the pointwise control update derives new controls from the value slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Exact pointwise minimizer of the Hamiltonian (first-order conditions,
    /// with a grid scan where the activity objective is not convex).
    #[default]
    ExactFoc,
    /// Historical closed-form update pair: the activity rule freezes the
    /// drift slope at eta = 1/2, and the mitigation rule scales the
    /// first-order condition by 1/x. Kept for comparison runs; it overspends
    /// on mitigation and converges slowly.
    Legacy,
}

/// Model, cost, and control-bound bundle describing one planning problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Problem {
    pub model: ModelParams,
    pub cost: CostParams,
    /// Upper bound on the mitigation rate.
    pub rho_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.15,
            sigma: 0.3,
            delta: 0.05,
        }
    }
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            a0: 0.5,
            a_i: 5.0,
            a_m_i: 2.5,
            a_m_s: 0.5,
            a_r: 5.0,
        }
    }
}

impl Default for Problem {
    fn default() -> Self {
        Problem {
            model: ModelParams::default(),
            cost: CostParams::default(),
            rho_max: 10.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("model.alpha", self.alpha),
            ("model.beta", self.beta),
            ("model.gamma", self.gamma),
            ("model.sigma", self.sigma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        if !self.delta.is_finite() || self.delta <= 0.0 {
            return Err(Error::invalid("model.delta", "delta > 0 required"));
        }
        Ok(())
    }
}

impl CostParams {
    /// All weights must be finite and nonnegative, and reducing activity may
    /// not be cheaper on infected nodes than on clean ones. Zero weights are
    /// allowed (they make a control free) and are handled explicitly by the
    /// update rules.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cost.a0", self.a0),
            ("cost.a_i", self.a_i),
            ("cost.a_m_i", self.a_m_i),
            ("cost.a_m_s", self.a_m_s),
            ("cost.a_r", self.a_r),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        if self.a_m_i < self.a_m_s {
            return Err(Error::invalid("cost.a_m_i", "a_m_i >= a_m_s required"));
        }
        Ok(())
    }
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.cost.validate()?;
        if !self.rho_max.is_finite() || self.rho_max <= 0.0 {
            return Err(Error::invalid("rho_max", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Supremum of the running cost over states in [0, 1] and admissible
    /// controls. Used for horizon and truncation-tail bounds.
    pub fn cost_sup(&self) -> f64 {
        let k = &self.cost;
        k.a0 + k.a_i + k.a_m_i.max(k.a_m_s) + k.a_r * self.rho_max * self.rho_max
    }
}

/// Drift of the infection ratio under controls `u`.
pub fn drift(x: f64, u: ControlPair, p: &ModelParams) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    u.eta * p.alpha * (1.0 - x) + x * (u.eta * u.eta * p.beta * (1.0 - x) - (p.gamma + u.rho))
}

/// Noise amplitude; vanishes at both ends of [0, 1].
pub fn diffusion(x: f64, p: &ModelParams) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    p.sigma * x * (1.0 - x)
}

/// Instantaneous cost rate of state `x` under controls `u`.
pub fn running_cost(x: f64, u: ControlPair, k: &CostParams) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    let idle = 1.0 - u.eta;
    k.a0
        + k.a_i * x
        + k.a_m_s * idle * idle
        + (k.a_m_i - k.a_m_s) * x * idle * idle
        + k.a_r * x * u.rho * u.rho
}

/// Marginal cost of reducing activity at state `x`: the coefficient of
/// `(1 - eta)^2` in the running cost.
fn activity_weight(x: f64, k: &CostParams) -> f64 {
    k.a_m_s + (k.a_m_i - k.a_m_s) * x
}

/// Controls minimizing `b * dv + f` at a single state, given the value slope
/// `dv` there.
///
/// A zero slope always yields the no-action pair (1, 0): with a flat value
/// there is nothing to steer, so the cheapest admissible controls win. For a
/// nonzero slope the activity and mitigation parts separate; mitigation is
/// only worth buying where the value rises (`dv > 0`). Free controls (zero
/// cost weight) fall back to the sign of their drift contribution.
pub fn update_controls(
    x: f64,
    dv: f64,
    problem: &Problem,
    mode: UpdateMode,
) -> ControlPair {
    debug_assert!(x > 0.0 && x < 1.0);
    debug_assert!(dv.is_finite());
    if dv == 0.0 {
        return ControlPair::NO_ACTION;
    }
    let p = &problem.model;
    let k = &problem.cost;
    let c = activity_weight(x, k);

    let eta = match mode {
        UpdateMode::Legacy => {
            if c > 0.0 {
                let raw = 1.0 - (p.alpha + p.beta * x) * (1.0 - x) * dv / (2.0 * c);
                raw.clamp(0.0, 1.0)
            } else {
                // Activity is free; only its drift effect matters, which is
                // monotone in eta.
                if dv > 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
        UpdateMode::ExactFoc => {
            // Stationarity of dv*(eta*alpha*(1-x) + eta^2*beta*x*(1-x)) + c*(1-eta)^2.
            let quad = c + p.beta * x * (1.0 - x) * dv;
            if quad > 0.0 {
                let raw = (2.0 * c - p.alpha * (1.0 - x) * dv) / (2.0 * quad);
                raw.clamp(0.0, 1.0)
            } else {
                scan_eta(x, dv, p, k)
            }
        }
    };

    let rho = if dv > 0.0 {
        let denom = match mode {
            UpdateMode::Legacy => 2.0 * k.a_r * x,
            UpdateMode::ExactFoc => 2.0 * k.a_r,
        };
        if denom > 0.0 {
            (dv / denom).min(problem.rho_max)
        } else {
            // Mitigation is free and the value rises with x: buy the maximum.
            problem.rho_max
        }
    } else {
        0.0
    };

    ControlPair { eta, rho }
}

/// Number of sample points when the activity objective has to be scanned
/// instead of solved in closed form (possible only for `dv < 0`, where the
/// objective may lose convexity).
const ETA_SCAN_POINTS: usize = 401;

fn eta_objective(eta: f64, x: f64, dv: f64, p: &ModelParams, k: &CostParams) -> f64 {
    let idle = 1.0 - eta;
    dv * (eta * p.alpha * (1.0 - x) + eta * eta * p.beta * x * (1.0 - x))
        + activity_weight(x, k) * idle * idle
}

fn scan_eta(x: f64, dv: f64, p: &ModelParams, k: &CostParams) -> f64 {
    let mut best = 0.0;
    let mut best_val = eta_objective(0.0, x, dv, p, k);
    for i in 1..ETA_SCAN_POINTS {
        let eta = i as f64 / (ETA_SCAN_POINTS - 1) as f64;
        let val = eta_objective(eta, x, dv, p, k);
        if val < best_val {
            best_val = val;
            best = eta;
        }
    }
    best
}

/// Exact pointwise infimum of the Hamiltonian
/// `b * dv + sigma(x)^2 / 2 * d2v - delta * v + f` over admissible controls.
///
/// The second-order and discount terms do not depend on the controls, so the
/// minimizing pair is the one `update_controls` finds in `ExactFoc` mode.
pub fn hamiltonian_min(
    x: f64,
    v: f64,
    dv: f64,
    d2v: f64,
    problem: &Problem,
) -> f64 {
    let u = update_controls(x, dv, problem, UpdateMode::ExactFoc);
    hamiltonian_at(x, v, dv, d2v, u, problem)
}

/// Hamiltonian evaluated at a specific control pair (no minimization).
pub fn hamiltonian_at(
    x: f64,
    v: f64,
    dv: f64,
    d2v: f64,
    u: ControlPair,
    problem: &Problem,
) -> f64 {
    let s = diffusion(x, &problem.model);
    drift(x, u, &problem.model) * dv + 0.5 * s * s * d2v - problem.model.delta * v
        + running_cost(x, u, &problem.cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark() -> Problem {
        Problem::default()
    }

    #[test]
    fn drift_midpoint_full_activity() {
        // eta*alpha*(1-x) + x*(eta^2*beta*(1-x) - gamma)
        //   = 0.25 + 0.5*(0.25 - 0.15) = 0.30
        let p = ModelParams::default();
        let b = drift(0.5, ControlPair::new(1.0, 0.0), &p);
        assert!((b - 0.30).abs() < 1e-15, "b = {b}");
    }

    #[test]
    fn drift_at_saturation_is_pure_decay() {
        let p = ModelParams::default();
        // At x = 1 nothing spreads further; only cleanup acts.
        for eta in [0.0, 0.3, 1.0] {
            let b = drift(1.0, ControlPair::new(eta, 0.0), &p);
            assert!((b - (-0.15)).abs() < 1e-15);
        }
    }

    #[test]
    fn drift_points_inward_at_the_ends() {
        let p = ModelParams::default();
        for eta in [0.0, 0.25, 1.0] {
            for rho in [0.0, 1.0, 10.0] {
                let u = ControlPair::new(eta, rho);
                assert!(drift(0.0, u, &p) >= 0.0);
                assert!(drift(1.0, u, &p) < 0.0);
            }
        }
    }

    #[test]
    fn diffusion_vanishes_at_ends() {
        let p = ModelParams::default();
        assert_eq!(diffusion(0.0, &p), 0.0);
        assert_eq!(diffusion(1.0, &p), 0.0);
        assert!((diffusion(0.5, &p) - 0.075).abs() < 1e-15);
    }

    #[test]
    fn running_cost_known_values() {
        let k = CostParams::default();
        // Full lockdown, no mitigation, half the network down.
        let f = running_cost(0.5, ControlPair::new(0.0, 0.0), &k);
        assert!((f - 4.5).abs() < 1e-15, "f = {f}");
        // Business as usual plus mitigation spending.
        let f = running_cost(0.5, ControlPair::new(1.0, 2.0), &k);
        assert!((f - 13.0).abs() < 1e-15, "f = {f}");
    }

    #[test]
    fn zero_slope_means_no_action() {
        let pb = benchmark();
        for x in [0.01, 0.5, 0.99] {
            for mode in [UpdateMode::ExactFoc, UpdateMode::Legacy] {
                let u = update_controls(x, 0.0, &pb, mode);
                assert_eq!(u, ControlPair::NO_ACTION);
            }
        }
    }

    #[test]
    fn legacy_update_midpoint() {
        let pb = benchmark();
        let u = update_controls(0.5, 10.0, &pb, UpdateMode::Legacy);
        // Raw activity value is 1 - 0.75*0.5*10/3 = -0.25, clamped to 0.
        assert_eq!(u.eta, 0.0);
        assert!((u.rho - 2.0).abs() < 1e-15, "rho = {}", u.rho);
    }

    #[test]
    fn exact_foc_update_midpoint() {
        let pb = benchmark();
        let u = update_controls(0.5, 10.0, &pb, UpdateMode::ExactFoc);
        // (2c - alpha(1-x)dv) / (2c + 2 beta x (1-x) dv) = (3 - 2.5)/(3 + 2.5).
        assert!((u.eta - 1.0 / 11.0).abs() < 1e-14, "eta = {}", u.eta);
        assert!((u.rho - 1.0).abs() < 1e-15, "rho = {}", u.rho);
    }

    #[test]
    fn mitigation_only_bought_on_rising_value() {
        let pb = benchmark();
        for mode in [UpdateMode::ExactFoc, UpdateMode::Legacy] {
            let u = update_controls(0.4, -3.0, &pb, mode);
            assert_eq!(u.rho, 0.0);
        }
    }

    #[test]
    fn mitigation_respects_cap() {
        let pb = benchmark();
        let u = update_controls(0.01, 1e6, &pb, UpdateMode::Legacy);
        assert_eq!(u.rho, pb.rho_max);
        let u = update_controls(0.5, 1e6, &pb, UpdateMode::ExactFoc);
        assert_eq!(u.rho, pb.rho_max);
    }

    #[test]
    fn free_controls_stay_in_range() {
        // All cost weights zero: controls are driven by drift effects alone.
        let pb = Problem {
            cost: CostParams {
                a0: 0.5,
                a_i: 0.0,
                a_m_i: 0.0,
                a_m_s: 0.0,
                a_r: 0.0,
            },
            ..benchmark()
        };
        for mode in [UpdateMode::ExactFoc, UpdateMode::Legacy] {
            for dv in [-5.0, -1e-9, 1e-9, 5.0] {
                let u = update_controls(0.3, dv, &pb, mode);
                assert!((0.0..=1.0).contains(&u.eta), "eta = {} (dv {dv})", u.eta);
                assert!(
                    (0.0..=pb.rho_max).contains(&u.rho),
                    "rho = {} (dv {dv})",
                    u.rho
                );
            }
        }
    }

    #[test]
    fn hamiltonian_min_flat_value() {
        let pb = benchmark();
        let h = hamiltonian_min(0.5, 0.0, 0.0, 0.0, &pb);
        // Flat value: the minimum is the cheapest running cost, f(x, 1, 0).
        assert!((h - 3.0).abs() < 1e-15, "h = {h}");
    }

    #[test]
    fn hamiltonian_min_beats_sampled_controls() {
        let pb = benchmark();
        for (x, v, dv, d2v) in [
            (0.3, 22.0, 8.0, -14.0),
            (0.7, 26.0, 11.0, 3.0),
            (0.5, 24.0, -2.0, 0.5),
        ] {
            let h = hamiltonian_min(x, v, dv, d2v, &pb);
            for i in 0..=20 {
                for j in 0..=20 {
                    let u = ControlPair::new(i as f64 / 20.0, pb.rho_max * j as f64 / 20.0);
                    let at = hamiltonian_at(x, v, dv, d2v, u, &pb);
                    assert!(
                        h <= at + 1e-10,
                        "min {h} beaten by {at} at eta={}, rho={}",
                        u.eta,
                        u.rho
                    );
                }
            }
        }
    }

    #[test]
    fn validation_rejects_bad_discount() {
        let mut p = ModelParams::default();
        p.delta = 0.0;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("delta > 0 required"), "{err}");
    }

    #[test]
    fn validation_rejects_inverted_activity_weights() {
        let mut k = CostParams::default();
        k.a_m_i = 0.1; // below a_m_s
        assert!(k.validate().is_err());
    }
}
