//! Finite-difference solution of the fixed-policy value equation.
//!
//! Under a frozen policy the value solves a linear two-point boundary value
//! problem on an interior interval `[lo, hi]` of (0, 1):
//!
//! ```text
//! sigma(x)^2 / 2 * v'' + b(x) v' - delta v + f(x) = 0,
//! v(lo) = dirichlet,   v'(hi) = neumann.
//! ```
//!
//! The drift term is discretized with first-order upwinding, which keeps the
//! matrix an M-matrix (strictly diagonally dominant with positive
//! off-diagonals) for any policy, so the discrete solution inherits the
//! comparison principle of the continuous equation. The Neumann condition
//! uses the second-order one-sided stencil
//! `(3 v_{n-1} - 4 v_{n-2} + v_{n-3}) / (2h)`; its reach-two coefficient is
//! eliminated against the last interior row during assembly, so the final
//! system is genuinely tridiagonal and a single Thomas sweep solves it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::Policy;
use crate::model::{diffusion, drift, running_cost, ControlPair, Problem};

/// Uniform grid on `[lo, hi]` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Grid {
    /// At least four nodes are required: the upper-edge stencil reaches two
    /// nodes inward and must not touch the Dirichlet row.
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Grid> {
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi < 1.0 && lo < hi) {
            return Err(Error::invalid("grid", "need 0 < lo < hi < 1"));
        }
        if n < 4 {
            return Err(Error::invalid("grid.n", "need at least 4 nodes"));
        }
        Ok(Grid { lo, hi, n })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        self.lo + self.h() * i as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x - self.lo) / self.h()).round();
        (i.max(0.0) as usize).min(self.n - 1)
    }
}

/// Boundary conditions: a value at the lower edge, a slope at the upper edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValues {
    pub dirichlet: f64,
    pub neumann: f64,
}

/// Controls tabulated on grid nodes. Lookups between nodes interpolate
/// linearly; lookups outside the grid (paths clamp into a slightly wider
/// band) hold the edge value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyField {
    pub grid: Grid,
    pub eta: Vec<f64>,
    pub rho: Vec<f64>,
}

impl PolicyField {
    pub fn new(grid: Grid, eta: Vec<f64>, rho: Vec<f64>) -> Self {
        assert_eq!(eta.len(), grid.len());
        assert_eq!(rho.len(), grid.len());
        PolicyField { grid, eta, rho }
    }

    pub fn constant(grid: Grid, u: ControlPair) -> Self {
        let n = grid.len();
        PolicyField {
            grid,
            eta: vec![u.eta; n],
            rho: vec![u.rho; n],
        }
    }

    pub fn node_controls(&self, i: usize) -> ControlPair {
        ControlPair::new(self.eta[i], self.rho[i])
    }

    fn interp(&self, table: &[f64], x: f64) -> f64 {
        let g = &self.grid;
        if x <= g.lo() {
            return table[0];
        }
        if x >= g.hi() {
            return table[g.len() - 1];
        }
        let s = (x - g.lo()) / g.h();
        let i = (s.floor() as usize).min(g.len() - 2);
        let t = s - i as f64;
        table[i] + (table[i + 1] - table[i]) * t
    }
}

impl Policy for PolicyField {
    fn controls(&self, x: f64) -> ControlPair {
        ControlPair {
            eta: self.interp(&self.eta, x).clamp(0.0, 1.0),
            rho: self.interp(&self.rho, x).max(0.0),
        }
    }
}

/// A value function tabulated on grid nodes, with its finite-difference
/// slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Central differences inside, second-order one-sided at the edges,
    /// with sub-resolution noise snapped to zero.
    pub gradient: Vec<f64>,
}

/// Relative scale below which a finite-difference slope is treated as exact
/// zero. A value field that is flat up to solver roundoff would otherwise
/// hand sign-noise to the control update.
const SLOPE_RESOLUTION: f64 = 1e-6;

impl ValueField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        let gradient = slope(&grid, &values);
        ValueField {
            grid,
            values,
            gradient,
        }
    }

    /// Second difference at node `i` (one-sided copies at the edges; edge
    /// values only matter for reporting, never for the interior residual).
    pub fn second_difference(&self, i: usize) -> f64 {
        let h2 = self.grid.h() * self.grid.h();
        let v = &self.values;
        let j = i.clamp(1, self.grid.len() - 2);
        (v[j + 1] - 2.0 * v[j] + v[j - 1]) / h2
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn slope(grid: &Grid, v: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let h = grid.h();
    let mut g = vec![0.0; n];
    g[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    for i in 1..n - 1 {
        g[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    g[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let snap = SLOPE_RESOLUTION * scale / (grid.hi() - grid.lo());
    for gi in &mut g {
        if gi.abs() < snap {
            *gi = 0.0;
        }
    }
    g
}

/// Tridiagonal system `lower[i] v[i-1] + diag[i] v[i] + upper[i] v[i+1] = rhs[i]`
/// (`lower[0]` and `upper[n-1]` are unused and kept at zero).
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }
}

/// Assemble the discrete value equation from per-node drift, squared noise,
/// and cost-rate tables. Interior noise must not vanish.
pub fn assemble_raw(
    grid: &Grid,
    b: &[f64],
    sigma2: &[f64],
    f: &[f64],
    delta: f64,
    bc: BoundaryValues,
) -> Result<TridiagonalSystem> {
    let n = grid.len();
    assert_eq!(b.len(), n);
    assert_eq!(sigma2.len(), n);
    assert_eq!(f.len(), n);
    let h = grid.h();
    let h2 = h * h;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];

    diag[0] = 1.0;
    rhs[0] = bc.dirichlet;

    for i in 1..n - 1 {
        if sigma2[i] <= 0.0 {
            return Err(Error::Assembly(format!(
                "noise vanishes at interior node {i} (x = {})",
                grid.node(i)
            )));
        }
        let d = 0.5 * sigma2[i] / h2;
        let (lo, di, up) = if b[i].abs() * h < 1e-12 * sigma2[i] {
            // Drift is negligible against diffusion: central difference.
            (
                d - b[i] / (2.0 * h),
                -2.0 * d - delta,
                d + b[i] / (2.0 * h),
            )
        } else if b[i] > 0.0 {
            (d, -2.0 * d - b[i] / h - delta, d + b[i] / h)
        } else {
            (d - b[i] / h, -2.0 * d + b[i] / h - delta, d)
        };
        lower[i] = lo;
        diag[i] = di;
        upper[i] = up;
        rhs[i] = -f[i];
        debug_assert!(lo >= 0.0 && up >= 0.0 && di < 0.0);
        debug_assert!(di.abs() >= lo + up + delta - 1e-12 * di.abs());
    }

    // One-sided slope at the top: (3 v_{n-1} - 4 v_{n-2} + v_{n-3}) / (2h).
    // Its v_{n-3} coefficient is eliminated against row n-2, whose
    // sub-diagonal entry is strictly positive for positive interior noise.
    let l = lower[n - 2];
    debug_assert!(l > 0.0);
    lower[n - 1] = -4.0 - diag[n - 2] / l;
    diag[n - 1] = 3.0 - upper[n - 2] / l;
    rhs[n - 1] = 2.0 * h * bc.neumann - rhs[n - 2] / l;

    Ok(TridiagonalSystem {
        lower,
        diag,
        upper,
        rhs,
    })
}

/// Assemble the value equation for a policy tabulated on the same grid.
pub fn assemble(
    grid: &Grid,
    policy: &PolicyField,
    problem: &Problem,
    bc: BoundaryValues,
) -> Result<TridiagonalSystem> {
    assert_eq!(policy.grid, *grid);
    let n = grid.len();
    let mut b = Vec::with_capacity(n);
    let mut sigma2 = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for i in 0..n {
        let x = grid.node(i);
        let u = policy.node_controls(i);
        b.push(drift(x, u, &problem.model));
        let s = diffusion(x, &problem.model);
        sigma2.push(s * s);
        f.push(running_cost(x, u, &problem.cost));
    }
    assemble_raw(grid, &b, &sigma2, &f, problem.model.delta, bc)
}

/// Thomas elimination. Runs in O(n); fails with the offending row if a pivot
/// collapses (cannot happen for systems produced by `assemble`, whose
/// interior is strictly diagonally dominant).
pub fn solve_tridiagonal(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = sys.len();
    assert!(n >= 2);
    let mut w = vec![0.0; n]; // eliminated upper coefficients
    let mut g = vec![0.0; n]; // eliminated right-hand side
    let mut pivot = sys.diag[0];
    if !pivot.is_normal() {
        return Err(Error::SingularPivot { row: 0 });
    }
    w[0] = sys.upper[0] / pivot;
    g[0] = sys.rhs[0] / pivot;
    for i in 1..n {
        pivot = sys.diag[i] - sys.lower[i] * w[i - 1];
        if !pivot.is_normal() {
            return Err(Error::SingularPivot { row: i });
        }
        w[i] = sys.upper[i] / pivot;
        g[i] = (sys.rhs[i] - sys.lower[i] * g[i - 1]) / pivot;
    }
    let mut v = g;
    for i in (0..n - 1).rev() {
        let next = v[i + 1];
        v[i] -= w[i] * next;
    }
    Ok(v)
}

/// Solve the fixed-policy value equation and tabulate the solution with its
/// slope.
pub fn solve_bellman(
    grid: &Grid,
    policy: &PolicyField,
    problem: &Problem,
    bc: BoundaryValues,
) -> Result<ValueField> {
    let sys = assemble(grid, policy, problem, bc)?;
    let values = solve_tridiagonal(&sys)?;
    Ok(ValueField::new(*grid, values))
}
