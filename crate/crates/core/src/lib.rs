//! Diluted perceptron spin glass at high temperature.
//!
//! A constraint-satisfaction spin model on `{-1,1}^N` where each of the
//! `M = round(alpha*N)` constraints touches a sparse Bernoulli(`gamma/N`)
//! subset of spins through standard Gaussian weights and a bounded potential
//! `u`. The crate provides:
//!
//! * [`model`] — the potential family, parameters, disorder instances and
//!   the high-temperature smallness conditions,
//! * [`gibbs`] — exact partition functions, magnetizations, correlations and
//!   cavity-identity checks by Gray-code enumeration (desk scale, `N <= 24`),
//! * [`fixed_point`] — population dynamics for the distributional map `T`
//!   whose fixed point is the limiting magnetization law,
//! * [`transport`] — Wasserstein-1 distances (sorted, CDF and exact joint
//!   assignment variants) used by the verification experiments,
//! * [`free_energy`] — the replica-symmetric curve `F(gamma)` with
//!   `F' = G` and its comparison against exact finite-`N` free energies,
//! * [`rng`] — counter-based substream derivation so every experiment is
//!   reproducible for any worker count.

pub mod fixed_point;
pub mod free_energy;
pub mod gibbs;
pub mod model;
pub mod rng;
pub mod transport;

mod error;

pub use error::{Error, Result};
pub use fixed_point::{ConvergenceReport, PopulationMeasure, TreeSample};
pub use gibbs::{DisorderStatistic, GibbsSummary, SpinPolynomial, Statistic};
pub use model::{BoundedPotential, ConditionReport, Instance, ModelParams};
