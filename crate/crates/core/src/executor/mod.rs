//! Depth-first execution with a cache-aware storage layer.
//!
//! Evaluation starts at the sink and pulls inputs on demand. A node that
//! makes `w` passes over its inputs demands each of them `w` times, so an
//! uncached input is recomputed on every pass. Outputs enter a byte-budgeted
//! [`CacheStore`]: the optimizer's cache set is pinned, and other outputs
//! compete under LRU only when the policy allows it.

pub mod engine;
mod operators;
pub mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use crate::dag::{NodeId, OperatorKind, PipelineGraph};
use crate::error::{Error, Result};
use crate::value::Value;
use engine::{demand, Dependencies, Evaluator};

pub use operators::{default_implementation, effective_weight, evaluate};
pub use store::{CacheStore, EvictionPolicy, DEFAULT_ADMISSION_FRACTION};

/// Source datasets keyed by source name.
pub type DataSources = BTreeMap<String, Value>;

impl Dependencies for PipelineGraph {
    fn inputs_of(&self, id: NodeId) -> Vec<NodeId> {
        self.inputs(id)
    }

    fn weight_of(&self, id: NodeId) -> u32 {
        self.node(id).map_or(1, |n| n.weight)
    }
}

/// Switch to LRU for non-pinned outputs once a node runs `ratio` times
/// slower than predicted, ignoring nodes faster than `min_seconds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FallbackRule {
    pub ratio: f64,
    pub min_seconds: f64,
}

impl Default for FallbackRule {
    fn default() -> Self {
        FallbackRule {
            ratio: 2.0,
            min_seconds: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExecutorConfig {
    pub budget: u64,
    pub policy: EvictionPolicy,
    /// Pinned node ids; ignored under [`EvictionPolicy::LruOnly`].
    pub cache_set: BTreeSet<NodeId>,
    pub admission_fraction: f64,
    pub fallback: Option<FallbackRule>,
    /// Predicted seconds per computation of each node.
    pub predicted_seconds: BTreeMap<NodeId, f64>,
    /// Worker threads for per-record maps; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            budget: 0,
            policy: EvictionPolicy::PinnedThenLru,
            cache_set: BTreeSet::new(),
            admission_fraction: DEFAULT_ADMISSION_FRACTION,
            fallback: Some(FallbackRule::default()),
            predicted_seconds: BTreeMap::new(),
            threads: None,
        }
    }
}

impl ExecutorConfig {
    pub fn pinned(budget: u64, cache_set: impl IntoIterator<Item = NodeId>) -> Self {
        ExecutorConfig {
            budget,
            cache_set: cache_set.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn lru(budget: u64) -> Self {
        ExecutorConfig {
            budget,
            policy: EvictionPolicy::LruOnly,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeTrace {
    pub name: String,
    pub computes: u64,
    pub hits: u64,
    pub seconds: f64,
    pub output_bytes: u64,
    pub bytes_cached: u64,
    pub bytes_evicted: u64,
}

/// Per-node record of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecutionTrace {
    pub policy: String,
    pub budget: u64,
    pub nodes: BTreeMap<NodeId, NodeTrace>,
    /// Node after which the store switched to LRU.
    pub fallback_after: Option<NodeId>,
    /// Pins dropped because the output did not fit.
    pub downgraded: Vec<NodeId>,
    pub total_seconds: f64,
}

impl ExecutionTrace {
    pub fn compute_count(&self, id: NodeId) -> u64 {
        self.nodes.get(&id).map_or(0, |n| n.computes)
    }

    pub fn compute_counts(&self) -> BTreeMap<NodeId, u64> {
        self.nodes.iter().map(|(&id, n)| (id, n.computes)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "policy\t{}", self.policy);
        let _ = writeln!(s, "budget\t{}", self.budget);
        let _ = writeln!(s, "total_seconds\t{:.6}", self.total_seconds);
        let fb = self
            .fallback_after
            .map_or("-".to_string(), |id| id.0.to_string());
        let _ = writeln!(s, "fallback_after\t{fb}");
        let dg: Vec<String> = self.downgraded.iter().map(|id| id.0.to_string()).collect();
        let _ = writeln!(
            s,
            "downgraded\t{}",
            if dg.is_empty() {
                "-".into()
            } else {
                dg.join(",")
            }
        );
        let _ = writeln!(
            s,
            "#node\tname\tcomputes\thits\tseconds\toutput_bytes\tbytes_cached\tbytes_evicted"
        );
        for (id, n) in &self.nodes {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{:.6}\t{}\t{}\t{}",
                id.0,
                n.name,
                n.computes,
                n.hits,
                n.seconds,
                n.output_bytes,
                n.bytes_cached,
                n.bytes_evicted
            );
        }
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut t = ExecutionTrace::default();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let err = |m: &str| Error::parse(origin, lineno, m);
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| err(&format!("bad integer {s:?}")))
            };
            match f[0] {
                "policy" if f.len() == 2 => t.policy = f[1].to_string(),
                "budget" if f.len() == 2 => t.budget = num(f[1])?,
                "total_seconds" if f.len() == 2 => {
                    t.total_seconds = f[1].parse().map_err(|_| err("bad total_seconds"))?
                }
                "fallback_after" if f.len() == 2 => {
                    t.fallback_after = if f[1] == "-" {
                        None
                    } else {
                        Some(NodeId(num(f[1])?))
                    }
                }
                "downgraded" if f.len() == 2 => {
                    if f[1] != "-" {
                        t.downgraded = f[1]
                            .split(',')
                            .map(|x| num(x).map(NodeId))
                            .collect::<Result<_>>()?;
                    }
                }
                _ if f.len() == 8 => {
                    let node = NodeTrace {
                        name: f[1].to_string(),
                        computes: num(f[2])?,
                        hits: num(f[3])?,
                        seconds: f[4].parse().map_err(|_| err("bad seconds"))?,
                        output_bytes: num(f[5])?,
                        bytes_cached: num(f[6])?,
                        bytes_evicted: num(f[7])?,
                    };
                    t.nodes.insert(NodeId(num(f[0])?), node);
                }
                _ => return Err(err(&format!("unrecognized trace line {line:?}"))),
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub output: Value,
    pub trace: ExecutionTrace,
}

struct Run<'a> {
    graph: &'a PipelineGraph,
    sources: &'a DataSources,
    config: &'a ExecutorConfig,
    store: CacheStore<Arc<Value>>,
    trace: ExecutionTrace,
}

impl Run<'_> {
    fn load_source(&self, id: NodeId) -> Result<Value> {
        let node = self.graph.node(id)?;
        let name = match &node.kind {
            OperatorKind::DataSource { name, .. } | OperatorKind::LabelSource { name, .. } => name,
            _ => unreachable!("only sources have no inputs"),
        };
        self.sources
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Invalid(format!("no data bound to source {name:?}")))
    }
}

impl Evaluator for Run<'_> {
    type Out = Arc<Value>;

    fn lookup(&mut self, id: NodeId) -> Option<Arc<Value>> {
        let hit = self.store.get(id);
        if hit.is_some() {
            self.trace.nodes.entry(id).or_default().hits += 1;
        }
        hit
    }

    fn compute(&mut self, id: NodeId, inputs: Vec<Arc<Value>>) -> Result<Arc<Value>> {
        let node = self.graph.node(id)?;
        let start = Instant::now();
        let computed = if inputs.is_empty() && node.kind.arity() == Some(0) {
            self.load_source(id)
        } else {
            let refs: Vec<&Value> = inputs.iter().map(|v| v.as_ref()).collect();
            evaluate(node, &refs)
        };
        let out = computed.map_err(|e| {
            let records = inputs.first().map_or(0, |v| v.len());
            Error::NodeFailed {
                node: format!("{} {} (records 0..{records})", node.name, id),
                source: Box::new(e),
            }
        })?;
        let secs = start.elapsed().as_secs_f64();
        let bytes = out.byte_size();
        let out = Arc::new(out);

        let pinned = self.store.is_pinned(id);
        let evicted = self.store.put(id, out.clone(), bytes);
        if pinned && evicted.is_none() {
            log::warn!(
                "{} ({id}): output of {bytes} bytes did not fit; recomputing it on demand",
                node.name
            );
            self.store.unpin(id);
            self.trace.downgraded.push(id);
        }
        for (victim, b) in evicted.iter().flatten() {
            self.trace.nodes.entry(*victim).or_default().bytes_evicted += b;
        }
        let entry = self.trace.nodes.entry(id).or_default();
        entry.name = node.name.clone();
        entry.computes += 1;
        entry.seconds += secs;
        entry.output_bytes = bytes;
        if evicted.is_some() {
            entry.bytes_cached += bytes;
        }

        if let (Some(rule), Some(&pred)) =
            (self.config.fallback, self.config.predicted_seconds.get(&id))
        {
            if !self.store.lru_enabled() && secs > rule.min_seconds && secs > rule.ratio * pred {
                log::warn!(
                    "{} took {secs:.3}s against a predicted {pred:.3}s; falling back to LRU",
                    node.name
                );
                self.store.enable_lru();
                self.trace.fallback_after = Some(id);
            }
        }
        Ok(out)
    }
}

/// Runs `graph` on `sources` and returns the sink output with a trace.
pub fn execute(
    graph: &PipelineGraph,
    sources: &DataSources,
    config: &ExecutorConfig,
) -> Result<ExecutionResult> {
    let run = || -> Result<ExecutionResult> {
        let store = CacheStore::new(
            config.budget,
            config.policy,
            config.cache_set.iter().copied(),
        )
        .with_admission_fraction(config.admission_fraction);
        let mut state = Run {
            graph,
            sources,
            config,
            store,
            trace: ExecutionTrace {
                policy: config.policy.to_string(),
                budget: config.budget,
                ..Default::default()
            },
        };
        for n in graph.nodes() {
            state.trace.nodes.entry(n.id).or_default().name = n.name.clone();
        }
        let start = Instant::now();
        let out = demand(graph, &mut state, graph.sink())?;
        state.trace.total_seconds = start.elapsed().as_secs_f64();
        let output = Arc::try_unwrap(out).unwrap_or_else(|a| (*a).clone());
        Ok(ExecutionResult {
            output,
            trace: state.trace,
        })
    };
    match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Invalid(format!("cannot build thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}
