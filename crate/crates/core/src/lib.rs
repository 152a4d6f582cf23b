//! Cost-based optimization and local execution of machine-learning pipelines.
//!
//! Pipelines are declared as DAGs of logical operators ([`dag`]). Before a
//! pipeline runs, the optimizer
//!
//! 1. picks a physical implementation for every optimizable operator using a
//!    cost model split into an operator-specific part and a cluster-specific
//!    part ([`costmodel`]),
//! 2. merges common sub-expressions ([`optimizer::cse`]),
//! 3. profiles every node on two small samples and extrapolates runtime and
//!    output size to full scale ([`profiler`]), and
//! 4. chooses which intermediate outputs to keep in memory under a byte budget
//!    ([`optimizer::greedy_cache`]).
//!
//! The optimized pipeline is then evaluated depth-first by the [`executor`],
//! whose cache store honours the chosen cache set.
//!
//! The physical operators live in [`ops`]: three least-squares solvers, exact
//! and randomized PCA, three convolution schemes and a small text
//! featurization chain.

pub mod cli;
pub mod costmodel;
pub mod dag;
pub mod error;
pub mod executor;
pub mod ops;
pub mod optimizer;
pub mod profiler;
pub mod value;
pub mod workloads;

pub use error::{Error, Result};
