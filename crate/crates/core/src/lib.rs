//! Distributed (non-)Bayesian inference over communication graphs.
//!
//! Agents on an undirected graph observe private data streams and fuse
//! beliefs with a consensus-weighted geometric mean of their neighbours'
//! beliefs. This crate provides:
//!
//! - [`graph`] — doubly stochastic consensus matrices, time-varying
//!   schedules and the consensus-deviation quantities the bounds use;
//! - [`models`] — the agents' private statistical models (Gaussian
//!   location, logistic regression, truncated-normal detection) and
//!   samplers for the data-generating distribution;
//! - [`belief`] — exact natural-parameter belief recursions and grid
//!   beliefs, plus the ideal (tempered) posterior used as reference;
//! - [`estimators`] — M-estimators, average Fisher information, Laplace
//!   approximations and chi-square credible regions;
//! - [`diagnostics`] — divergences, total-variation checks against the
//!   Gaussian limit, approximation-error estimates and consensus
//!   law-of-large-numbers / central-limit checks.

pub mod belief;
pub mod diagnostics;
pub mod estimators;
pub mod graph;
pub mod models;
pub mod numeric;
pub mod rng;
