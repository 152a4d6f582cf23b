//! Sample-based profiling.
//!
//! Every node runs on two nested samples of the sources, drawn as prefixes
//! of one seeded shuffle. Runtime and output size are fitted with a line
//! through the two points and evaluated at the full record count. Nodes are
//! visited in topological order, and an optimizable node has its physical
//! implementation chosen from the statistics of its already-profiled inputs
//! before it runs.

mod format;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::costmodel::{
    choose_physical, choose_physical_among, ClusterResourceDescriptor, ImplId, PhysicalChoice,
};
use crate::dag::{DatasetStats, NodeId, OperatorKind, PipelineGraph, Role};
use crate::error::{Error, Result};
use crate::executor::{default_implementation, effective_weight, evaluate, DataSources};
use crate::optimizer::RuntimeModelInput;
use crate::value::Value;

/// Runs `f` `reps` times and returns the median wall time in seconds.
pub fn median_seconds(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

/// Evaluates the line through two `(n, y)` points at `full_n`, clamped at 0.
/// Coincident sample sizes return the mean of the two values.
pub fn extrapolate(p1: (f64, f64), p2: (f64, f64), full_n: f64) -> f64 {
    let ((n1, y1), (n2, y2)) = (p1, p2);
    let y = if n1 == n2 {
        (y1 + y2) / 2.0
    } else {
        let slope = (y2 - y1) / (n2 - n1);
        y1 + slope * (full_n - n1)
    };
    y.max(0.0)
}

/// Statistics of a collection of records, with `n` set to `full_n`.
pub fn estimate_stats(v: &Value, full_n: u64) -> Result<DatasetStats> {
    let len = v.len();
    if len == 0 {
        return Err(Error::Invalid(
            "cannot estimate statistics of an empty sample".into(),
        ));
    }
    let bytes_per_record = v.byte_size() as f64 / len as f64;
    let mut stats = match v {
        Value::Text(_) => DatasetStats::dense(full_n, 1),
        Value::Tokens(t) => {
            let d = t.iter().map(Vec::len).max().unwrap_or(0).max(1);
            let mean = t.iter().map(Vec::len).sum::<usize>() as f64 / len as f64;
            DatasetStats::sparse(full_n, d, mean.max(f64::MIN_POSITIVE))
        }
        Value::Sparse(s) => {
            let mean = s.nnz() as f64 / len as f64;
            DatasetStats::sparse(
                full_n,
                s.dim().max(1),
                mean.clamp(f64::MIN_POSITIVE, s.dim().max(1) as f64),
            )
        }
        Value::Dense(m) => DatasetStats::dense(full_n, m.cols()),
        Value::Labels(m) => DatasetStats::labels(full_n, m.cols()),
        Value::Images(imgs) => {
            let (side, channels) = (imgs[0].side(), imgs[0].channels());
            if imgs
                .iter()
                .any(|i| i.side() != side || i.channels() != channels)
            {
                return Err(Error::InvalidDimensions(
                    "images in one collection must share a shape".into(),
                ));
            }
            DatasetStats::images(full_n, side, channels)
        }
        Value::Model(_) => {
            return Err(Error::Invalid(
                "a fitted model has no record statistics".into(),
            ))
        }
    };
    stats.bytes_per_record = bytes_per_record;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub sample_sizes: [usize; 2],
    pub seed: u64,
    /// Timed repetitions per sample; the median is kept.
    pub reps: usize,
    /// Choose physical implementations; otherwise defaults are kept.
    pub select_physical: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            sample_sizes: [512, 1024],
            seed: 0,
            reps: 3,
            select_physical: true,
        }
    }
}

/// One timed sample run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub records: usize,
    pub seconds: f64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfile {
    pub id: NodeId,
    pub name: String,
    pub kind: String,
    pub estimator: bool,
    pub weight: u32,
    /// Full-scale seconds per pass.
    pub t: f64,
    /// Full-scale output bytes.
    pub size: f64,
    pub implementation: Option<ImplId>,
    /// Output statistics; `None` for fitted models.
    pub stats: Option<DatasetStats>,
    pub samples: Vec<SamplePoint>,
}

/// Per-node runtime and size estimates at full scale, plus the structure
/// needed to replay caching decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineProfile {
    pub full_n: u64,
    pub nodes: BTreeMap<NodeId, NodeProfile>,
    /// `(from, to)` edges in slot order per consumer.
    pub edges: Vec<(NodeId, NodeId)>,
    pub sink: NodeId,
}

impl PipelineProfile {
    pub fn to_model(&self) -> Result<RuntimeModelInput> {
        let nodes = self
            .nodes
            .values()
            .map(|p| crate::optimizer::ModelNode {
                id: p.id,
                name: p.name.clone(),
                t: p.t,
                size: p.size,
                weight: p.weight,
                estimator: p.estimator,
            })
            .collect();
        RuntimeModelInput::new(nodes, &self.edges, self.sink)
    }

    /// Predicted seconds per computation (`w · t`) of every node.
    pub fn predicted_seconds(&self) -> BTreeMap<NodeId, f64> {
        self.nodes
            .values()
            .map(|p| (p.id, p.weight as f64 * p.t))
            .collect()
    }
}

/// A profiled pipeline: the graph with physical choices applied, its
/// profile, and the cost-model decisions taken along the way.
#[derive(Debug, Clone)]
pub struct Profiled {
    pub graph: PipelineGraph,
    pub profile: PipelineProfile,
    pub choices: Vec<PhysicalChoice>,
}

fn source_name(kind: &OperatorKind) -> Option<&str> {
    match kind {
        OperatorKind::DataSource { name, .. } | OperatorKind::LabelSource { name, .. } => {
            Some(name)
        }
        _ => None,
    }
}

/// Record count shared by every source `graph` reads.
pub fn source_records(graph: &PipelineGraph, sources: &DataSources) -> Result<usize> {
    let mut n: Option<(usize, &str)> = None;
    for node in graph.nodes() {
        let Some(name) = source_name(&node.kind) else {
            continue;
        };
        let v = sources
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("no data bound to source {name:?}")))?;
        match n {
            None => n = Some((v.len(), name)),
            Some((m, other)) if m != v.len() => {
                return Err(Error::Invalid(format!(
                    "sources {other:?} and {name:?} have {m} and {} records",
                    v.len()
                )))
            }
            _ => {}
        }
    }
    n.map(|(n, _)| n)
        .ok_or_else(|| Error::Invalid("pipeline reads no sources".into()))
}

/// Profiles `graph` on samples of `sources`.
pub fn profile_pipeline(
    graph: &PipelineGraph,
    sources: &DataSources,
    r: &ClusterResourceDescriptor,
    config: &ProfileConfig,
) -> Result<Profiled> {
    let full_n = source_records(graph, sources)?;
    let mut sizes: Vec<usize> = config
        .sample_sizes
        .iter()
        .map(|&s| s.min(full_n).max(1))
        .collect();
    if config.sample_sizes.iter().any(|&s| s > full_n) {
        log::warn!("only {full_n} records available; profiling on samples of {sizes:?}");
    }
    sizes.sort_unstable();
    let mut perm: Vec<usize> = (0..full_n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let samples: Vec<DataSources> = sizes
        .iter()
        .map(|&s| {
            sources
                .iter()
                .map(|(k, v)| (k.clone(), v.select(&perm[..s])))
                .collect()
        })
        .collect();

    let mut graph = graph.clone();
    let mut outputs: Vec<BTreeMap<NodeId, Value>> = vec![BTreeMap::new(); samples.len()];
    let mut nodes: BTreeMap<NodeId, NodeProfile> = BTreeMap::new();
    let mut choices = Vec::new();

    for id in graph.topo_order()? {
        let mut node = graph.node(id)?.clone();
        let inputs = graph.inputs(id);
        let input_stats = || -> Result<Vec<DatasetStats>> {
            inputs
                .iter()
                .map(|i| {
                    nodes[i].stats.ok_or_else(|| {
                        Error::Invalid(format!("{} reads a model as data", node.name))
                    })
                })
                .collect()
        };

        let mut cost_seconds = None;
        if node.kind.is_optimizable() {
            let stats = input_stats()?;
            let choice = if config.select_physical && node.implementation.is_none() {
                choose_physical(&node, &stats, r)?
            } else {
                let imp = node
                    .implementation
                    .or_else(|| default_implementation(&node.kind))
                    .expect("optimizable");
                choose_physical_among(&node, &stats, r, &[imp])?
            };
            node.implementation = Some(choice.imp);
            node.weight = effective_weight(&node.kind, node.implementation);
            graph = graph.with_node(node.clone())?;
            if node.role() == Role::Estimator {
                cost_seconds = Some(choice.cost);
            }
            choices.push(choice);
        }

        let mut points = Vec::with_capacity(samples.len());
        for (j, sample) in samples.iter().enumerate() {
            let (out, seconds) = if let Some(name) = source_name(&node.kind) {
                (sample[name].clone(), 0.0)
            } else {
                let refs: Vec<&Value> = inputs.iter().map(|i| &outputs[j][i]).collect();
                run_sample(&node, &refs, config.reps).map_err(|e| Error::NodeFailed {
                    node: format!("{} {id} (sample of {} records)", node.name, sizes[j]),
                    source: Box::new(e),
                })?
            };
            points.push(SamplePoint {
                records: sizes[j],
                seconds,
                bytes: out.byte_size(),
            });
            outputs[j].insert(id, out);
        }

        let fit = |y: &dyn Fn(&SamplePoint) -> f64| {
            let (a, b) = (points[0], points[points.len() - 1]);
            extrapolate(
                (a.records as f64, y(&a)),
                (b.records as f64, y(&b)),
                full_n as f64,
            )
        };
        let w = node.weight as f64;
        let (t, size) = match source_name(&node.kind) {
            Some(name) => {
                let bytes = sources[name].byte_size() as f64;
                (bytes / r.disk_bandwidth, bytes)
            }
            None => {
                let measured = fit(&|p| p.seconds) / w;
                (
                    cost_seconds.map_or(measured, |c| c / w),
                    fit(&|p| p.bytes as f64).round(),
                )
            }
        };
        let largest = &outputs[samples.len() - 1][&id];
        let stats = match largest {
            Value::Model(_) => None,
            v => Some(estimate_stats(v, full_n as u64)?),
        };
        nodes.insert(
            id,
            NodeProfile {
                id,
                name: node.name.clone(),
                kind: node.kind.short_name().to_string(),
                estimator: node.role() == Role::Estimator,
                weight: node.weight,
                t,
                size,
                implementation: node.implementation,
                stats,
                samples: points,
            },
        );
    }

    let mut edges: Vec<_> = graph.edges().to_vec();
    edges.sort_by_key(|e| (e.to, e.slot));
    let profile = PipelineProfile {
        full_n: full_n as u64,
        nodes,
        edges: edges.iter().map(|e| (e.from, e.to)).collect(),
        sink: graph.sink(),
    };
    Ok(Profiled {
        graph,
        profile,
        choices,
    })
}

/// Times one node on one sample. An exact solver cannot run on a sample with
/// fewer records than features, so the sample output then comes from the
/// default implementation.
fn run_sample(
    node: &crate::dag::LogicalNode,
    inputs: &[&Value],
    reps: usize,
) -> Result<(Value, f64)> {
    let mut result = None;
    let seconds = median_seconds(reps, || result = Some(evaluate(node, inputs)));
    match result.expect("at least one repetition") {
        Ok(v) => Ok((v, seconds)),
        Err(e)
            if node.role() == Role::Estimator
                && node.implementation != default_implementation(&node.kind) =>
        {
            log::warn!(
                "{}: {e}; profiling the sample with the default implementation",
                node.name
            );
            let mut fallback = node.clone();
            fallback.implementation = default_implementation(&node.kind);
            let mut result = None;
            let seconds = median_seconds(reps, || result = Some(evaluate(&fallback, inputs)));
            Ok((result.expect("at least one repetition")?, seconds))
        }
        Err(e) => Err(e),
    }
}
