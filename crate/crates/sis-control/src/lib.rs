//! Optimal activity and mitigation control for a stochastic SIS epidemic.
//!
//! The state is the infected fraction of a population, driven by a
//! one-dimensional diffusion whose drift responds to two controls: the
//! activity level of the susceptible population and the mitigation effort
//! applied to the infected. Costs accrue for infections, for curtailed
//! activity, and for mitigation; the planner minimizes the discounted
//! running cost over an infinite horizon.
//!
//! The crate solves this problem numerically:
//!
//! - [`model`] — dynamics, running cost, and the pointwise control updates;
//! - [`mc`] — deterministic Monte-Carlo evaluation of a fixed policy;
//! - [`bvp`] — the linear fixed-policy value equation on a grid;
//! - [`pia`] — the policy-improvement loop tying the two together;
//! - [`experiments`] — reproducible experiment drivers writing CSV/SVG;
//! - [`config`] — run configuration with JSON files and key=value overrides.

pub mod bvp;
pub mod config;
pub mod error;
pub mod experiments;
pub mod mc;
pub mod model;
pub mod pia;
pub mod plot;

pub use error::{Error, Result};
