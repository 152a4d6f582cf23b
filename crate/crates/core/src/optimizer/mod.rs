//! Whole-pipeline optimization.
//!
//! [`optimize`] runs the stages in order: common sub-expression elimination,
//! profiling (which also resolves physical implementations), and cache-set
//! selection against a byte budget. The caching decision works on a
//! [`RuntimeModelInput`], so it can be replayed from a saved profile without
//! touching data.

pub mod cse;
mod greedy;
mod model;
pub mod synthetic;

use std::collections::BTreeSet;
use std::fmt;

pub use cse::{eliminate_common_subexpressions, CseReport};
pub use greedy::{
    baseline_rule_cache, greedy_cache, greedy_cache_with_steps, optimal_cache_bruteforce,
    GreedyStep, BRUTE_FORCE_LIMIT,
};
pub use model::{
    closed_form_runtime, est_runtime, simulate, CacheSet, ModelNode, RuntimeModelInput, SimPolicy,
    Simulation,
};

use crate::costmodel::{ClusterResourceDescriptor, PhysicalChoice};
use crate::dag::{NodeId, PipelineGraph};
use crate::error::Result;
use crate::executor::{DataSources, ExecutorConfig};
use crate::profiler::{profile_pipeline, PipelineProfile, ProfileConfig};

/// How much of the optimizer to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizationLevel {
    /// Default implementations, no merging, no caching at any budget.
    None,
    /// Merging and caching, with default implementations.
    PipeOnly,
    /// Merging, caching and cost-based implementation choice.
    Full,
}

/// Cache-set selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStrategy {
    Greedy,
    Optimal,
    Rule,
    None,
}

impl fmt::Display for CacheStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CacheStrategy::Greedy => "greedy",
            CacheStrategy::Optimal => "optimal",
            CacheStrategy::Rule => "rule",
            CacheStrategy::None => "none",
        })
    }
}

/// Picks a cache set for `m` under `budget` bytes.
pub fn select_cache(
    m: &RuntimeModelInput,
    budget: f64,
    strategy: CacheStrategy,
) -> Result<(CacheSet, Vec<GreedyStep>)> {
    Ok(match strategy {
        CacheStrategy::Greedy => greedy_cache_with_steps(m, budget),
        CacheStrategy::Optimal => (optimal_cache_bruteforce(m, budget)?, Vec::new()),
        CacheStrategy::Rule => (baseline_rule_cache(m, budget), Vec::new()),
        CacheStrategy::None => (CacheSet::new(), Vec::new()),
    })
}

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub level: OptimizationLevel,
    pub budget: u64,
    pub strategy: CacheStrategy,
    pub profile: ProfileConfig,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            level: OptimizationLevel::Full,
            budget: 0,
            strategy: CacheStrategy::Greedy,
            profile: ProfileConfig::default(),
        }
    }
}

/// Result of [`optimize`]: the rewritten graph and every decision behind it.
#[derive(Debug, Clone)]
pub struct OptimizedPipeline {
    pub graph: PipelineGraph,
    pub cse: CseReport,
    pub choices: Vec<PhysicalChoice>,
    pub profile: PipelineProfile,
    pub model: RuntimeModelInput,
    pub cache: CacheSet,
    pub steps: Vec<GreedyStep>,
    pub budget: u64,
    /// Modeled runtime under the chosen cache set.
    pub predicted_runtime: f64,
}

impl OptimizedPipeline {
    /// Executor settings that pin the chosen cache set.
    pub fn executor_config(&self) -> ExecutorConfig {
        ExecutorConfig {
            predicted_seconds: self.profile.predicted_seconds(),
            ..ExecutorConfig::pinned(self.budget, self.cache.ids())
        }
    }

    pub fn cached_nodes(&self) -> BTreeSet<NodeId> {
        self.cache.ids().collect()
    }
}

/// Optimizes `graph` for a run over `sources`.
pub fn optimize(
    graph: &PipelineGraph,
    sources: &DataSources,
    r: &ClusterResourceDescriptor,
    options: &OptimizeOptions,
) -> Result<OptimizedPipeline> {
    let (merged, cse) = match options.level {
        OptimizationLevel::None => (graph.clone(), CseReport::default()),
        _ => eliminate_common_subexpressions(graph)?,
    };
    let profile_config = ProfileConfig {
        select_physical: options.level == OptimizationLevel::Full,
        ..options.profile.clone()
    };
    let profiled = profile_pipeline(&merged, sources, r, &profile_config)?;
    let model = profiled.profile.to_model()?;
    let (strategy, budget) = match options.level {
        OptimizationLevel::None => (CacheStrategy::None, 0),
        _ => (options.strategy, options.budget),
    };
    let (cache, steps) = select_cache(&model, budget as f64, strategy)?;
    let predicted_runtime = est_runtime(&model, &cache);
    Ok(OptimizedPipeline {
        graph: profiled.graph,
        cse,
        choices: profiled.choices,
        profile: profiled.profile,
        model,
        cache,
        steps,
        budget,
        predicted_runtime,
    })
}
