//! Generalised variational inference (GVI) posteriors under bounded divergences.
//!
//! A GVI posterior minimises `n * E_Q[loss] + D(Q : prior) / beta` over a
//! family of measures. This crate evaluates and minimises that objective over
//! one-dimensional Gaussians and grid-supported probability vectors, checks
//! the feasibility region every bounded-divergence posterior must lie in, and
//! runs seeded experiments on concentration and rates of convergence.

pub mod conjugate;
pub mod divergences;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod measures;
pub mod persist;
pub mod problem;
pub mod quadrature;
pub mod region;
pub mod solve;

pub use divergences::{DivergenceKind, DivergenceSpec};
pub use error::{GviError, Result};
pub use losses::{LimitLoss, LossModel};
pub use measures::{Dataset, Dgp, DiscreteMeasure, GaussianMeasure, Measure};
pub use problem::{Family, GviProblem, Schedule, Schedules};
pub use solve::{solve, SolveResult};
