use std::collections::{BTreeMap, BTreeSet};

use crate::dag::{NodeId, PipelineGraph, Role};
use crate::error::{Error, Result};
use crate::executor::engine::{demand, Dependencies, Evaluator};
use crate::executor::{CacheStore, EvictionPolicy};

/// Per-node inputs of the runtime model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelNode {
    pub id: NodeId,
    pub name: String,
    /// Seconds per pass of one computation.
    pub t: f64,
    /// Output bytes.
    pub size: f64,
    pub weight: u32,
    pub estimator: bool,
}

/// A DAG annotated with profile numbers: everything the caching decision
/// needs and nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeModelInput {
    nodes: Vec<ModelNode>,
    /// Producer indices per node, in slot order.
    inputs: Vec<Vec<usize>>,
    index: BTreeMap<NodeId, usize>,
    sink: usize,
    /// Node indices in topological order.
    order: Vec<usize>,
}

impl RuntimeModelInput {
    /// Builds a model from nodes and `(from, to)` edges listed in slot
    /// order per consumer.
    pub fn new(nodes: Vec<ModelNode>, edges: &[(NodeId, NodeId)], sink: NodeId) -> Result<Self> {
        let index: BTreeMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        if index.len() != nodes.len() {
            return Err(Error::InvalidGraph(
                "duplicate node id in runtime model".into(),
            ));
        }
        let look = |id: NodeId| index.get(&id).copied().ok_or(Error::UnknownNode(id));
        let mut inputs = vec![Vec::new(); nodes.len()];
        for &(from, to) in edges {
            inputs[look(to)?].push(look(from)?);
        }
        let sink = look(sink)?;
        for n in &nodes {
            if n.weight == 0 || !(n.t >= 0.0) || !(n.size >= 0.0) {
                return Err(Error::Invalid(format!(
                    "{}: need w ≥ 1, t ≥ 0, size ≥ 0",
                    n.name
                )));
            }
        }
        let mut indeg: Vec<usize> = inputs.iter().map(Vec::len).collect();
        let mut consumers = vec![Vec::new(); nodes.len()];
        for (to, ins) in inputs.iter().enumerate() {
            for &from in ins {
                consumers[from].push(to);
            }
        }
        let mut ready: BTreeSet<(NodeId, usize)> = (0..nodes.len())
            .filter(|&i| indeg[i] == 0)
            .map(|i| (nodes[i].id, i))
            .collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(first) = ready.pop_first() {
            order.push(first.1);
            for &c in &consumers[first.1] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert((nodes[c].id, c));
                }
            }
        }
        if order.len() != nodes.len() {
            let stuck = (0..nodes.len()).find(|&i| indeg[i] > 0).unwrap_or(sink);
            return Err(Error::Cycle(nodes[stuck].id));
        }
        Ok(RuntimeModelInput {
            nodes,
            inputs,
            index,
            sink,
            order,
        })
    }

    /// Takes structure, weights and roles from `graph` and `t`, `size` from
    /// the given maps.
    pub fn from_graph(
        graph: &PipelineGraph,
        t: &BTreeMap<NodeId, f64>,
        size: &BTreeMap<NodeId, f64>,
    ) -> Result<Self> {
        let mut nodes = Vec::new();
        for n in graph.nodes() {
            let missing =
                || Error::Invalid(format!("profile has no entry for {} ({})", n.name, n.id));
            nodes.push(ModelNode {
                id: n.id,
                name: n.name.clone(),
                t: *t.get(&n.id).ok_or_else(missing)?,
                size: *size.get(&n.id).ok_or_else(missing)?,
                weight: n.weight,
                estimator: n.role() == Role::Estimator,
            });
        }
        let mut edges: Vec<_> = graph.edges().to_vec();
        edges.sort_by_key(|e| (e.to, e.slot));
        let pairs: Vec<(NodeId, NodeId)> = edges.iter().map(|e| (e.from, e.to)).collect();
        Self::new(nodes, &pairs, graph.sink())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ModelNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&ModelNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn sink(&self) -> NodeId {
        self.nodes[self.sink].id
    }

    /// `(from, to)` edges in slot order per consumer.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (to, ins) in self.inputs.iter().enumerate() {
            for &from in ins {
                out.push((self.nodes[from].id, self.nodes[to].id));
            }
        }
        out
    }

    pub fn topo_order(&self) -> Vec<NodeId> {
        self.order.iter().map(|&i| self.nodes[i].id).collect()
    }

    /// Sum of output sizes of every node except the sink.
    pub fn total_intermediate_size(&self) -> f64 {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.sink)
            .map(|(_, n)| n.size)
            .sum()
    }

    fn cached_mask(&self, cache: &CacheSet) -> Vec<bool> {
        self.nodes.iter().map(|n| cache.contains(n.id)).collect()
    }

    /// `(calls, computes)` per node index under a cache set whose members
    /// are always resident.
    fn counts(&self, cached: &[bool]) -> (Vec<f64>, Vec<f64>) {
        let n = self.nodes.len();
        let mut calls = vec![0.0f64; n];
        let mut computes = vec![0.0; n];
        calls[self.sink] = 1.0;
        for &v in self.order.iter().rev() {
            computes[v] = if cached[v] {
                calls[v].min(1.0)
            } else {
                calls[v]
            };
            let demand = computes[v] * self.nodes[v].weight as f64;
            for &p in &self.inputs[v] {
                calls[p] += demand;
            }
        }
        (calls, computes)
    }

    /// Number of times each node computes.
    pub fn compute_counts(&self, cache: &CacheSet) -> BTreeMap<NodeId, u64> {
        let (_, computes) = self.counts(&self.cached_mask(cache));
        self.nodes
            .iter()
            .zip(computes)
            .map(|(n, c)| (n.id, c as u64))
            .collect()
    }

    /// Number of times each node is demanded with nothing cached.
    pub fn uncached_calls(&self) -> BTreeMap<NodeId, f64> {
        let (calls, _) = self.counts(&vec![false; self.nodes.len()]);
        self.nodes
            .iter()
            .zip(calls)
            .map(|(n, c)| (n.id, c))
            .collect()
    }

    /// Nodes worth considering for caching: every non-sink node demanded
    /// more than once when nothing is cached.
    pub fn candidates(&self) -> Vec<NodeId> {
        let (calls, _) = self.counts(&vec![false; self.nodes.len()]);
        (0..self.nodes.len())
            .filter(|&i| i != self.sink && calls[i] > 1.0)
            .map(|i| self.nodes[i].id)
            .collect()
    }

    fn runtime_of(&self, cached: &[bool]) -> f64 {
        let (_, computes) = self.counts(cached);
        self.nodes
            .iter()
            .zip(computes)
            .map(|(n, c)| c * n.weight as f64 * n.t)
            .sum()
    }
}

/// Total modeled runtime of a depth-first run from the sink: a cached node
/// computes at most once, an uncached node on every demand, and each
/// computation of a node with weight `w` demands each input `w` times.
pub fn est_runtime(m: &RuntimeModelInput, cache: &CacheSet) -> f64 {
    m.runtime_of(&m.cached_mask(cache))
}

/// The same quantity via the recurrences
/// `C(v) = Σ_{p consumer} w_p · C(p)^{1−κ_p}` with `C(sink) = 1`, and
/// `T(v) = w_v · (t(v) + Σ_{c input} T(c)) / C(v)^{κ_v}`, returning
/// `T(sink)`. A cached producer computes once, so it demands its inputs
/// only `w_p` times.
pub fn closed_form_runtime(m: &RuntimeModelInput, cache: &CacheSet) -> f64 {
    let cached = m.cached_mask(cache);
    let n = m.nodes.len();
    let mut c = vec![0.0; n];
    c[m.sink] = 1.0;
    for &v in m.order.iter().rev() {
        let contribution = if cached[v] {
            m.nodes[v].weight as f64
        } else {
            m.nodes[v].weight as f64 * c[v]
        };
        for &p in &m.inputs[v] {
            c[p] += contribution;
        }
    }
    let mut t = vec![0.0; n];
    for &v in &m.order {
        let node = &m.nodes[v];
        let below: f64 = m.inputs[v].iter().map(|&i| t[i]).sum();
        let total = node.weight as f64 * (node.t + below);
        t[v] = if cached[v] {
            total / c[v].max(1.0)
        } else {
            total
        };
    }
    t[m.sink]
}

/// Binary cache assignment with size accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheSet {
    members: BTreeSet<NodeId>,
    total_bytes: f64,
}

impl CacheSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_nodes(m: &RuntimeModelInput, ids: impl IntoIterator<Item = NodeId>) -> Self {
        let mut s = CacheSet::new();
        for id in ids {
            let size = m.node(id).map_or(0.0, |n| n.size);
            s.insert(id, size);
        }
        s
    }

    pub fn insert(&mut self, id: NodeId, size: f64) {
        if self.members.insert(id) {
            self.total_bytes += size;
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.members.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn total_bytes(&self) -> f64 {
        self.total_bytes
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.members.iter().copied()
    }
}

impl Dependencies for RuntimeModelInput {
    fn inputs_of(&self, id: NodeId) -> Vec<NodeId> {
        self.inputs[self.index[&id]]
            .iter()
            .map(|&i| self.nodes[i].id)
            .collect()
    }

    fn weight_of(&self, id: NodeId) -> u32 {
        self.nodes[self.index[&id]].weight
    }
}

/// Outcome of replaying a run against a simulated cache store.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub runtime: f64,
    pub computes: BTreeMap<NodeId, u64>,
    pub downgraded: Vec<NodeId>,
}

struct Simulator<'a> {
    model: &'a RuntimeModelInput,
    store: CacheStore<()>,
    sim: Simulation,
}

impl Evaluator for Simulator<'_> {
    type Out = ();

    fn lookup(&mut self, id: NodeId) -> Option<()> {
        self.store.get(id)
    }

    fn compute(&mut self, id: NodeId, _inputs: Vec<()>) -> Result<()> {
        let node = &self.model.nodes[self.model.index[&id]];
        self.sim.runtime += node.weight as f64 * node.t;
        *self.sim.computes.entry(id).or_default() += 1;
        let pinned = self.store.is_pinned(id);
        if self.store.put(id, (), node.size.ceil() as u64).is_none() && pinned {
            self.store.unpin(id);
            self.sim.downgraded.push(id);
        }
        Ok(())
    }
}

/// Cache behaviour to replay in [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub enum SimPolicy {
    /// Pin a cache set; nothing else is admitted.
    Pinned(CacheSet),
    /// LRU over every output with the given admission fraction.
    Lru { admission_fraction: f64 },
}

/// Replays a depth-first run against the same store the executor uses,
/// with profile sizes standing in for real outputs.
pub fn simulate(m: &RuntimeModelInput, budget: u64, policy: &SimPolicy) -> Simulation {
    let store = match policy {
        SimPolicy::Pinned(c) => CacheStore::new(budget, EvictionPolicy::PinnedThenLru, c.ids()),
        SimPolicy::Lru { admission_fraction } => {
            CacheStore::new(budget, EvictionPolicy::LruOnly, std::iter::empty())
                .with_admission_fraction(*admission_fraction)
        }
    };
    let mut s = Simulator {
        model: m,
        store,
        sim: Simulation {
            runtime: 0.0,
            computes: m.nodes.iter().map(|n| (n.id, 0)).collect(),
            downgraded: Vec::new(),
        },
    };
    demand(m, &mut s, m.sink()).expect("simulation cannot fail");
    s.sim
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn node(id: u64, t: f64, size: f64, weight: u32) -> ModelNode {
        ModelNode {
            id: NodeId(id),
            name: format!("n{id}"),
            t,
            size,
            weight,
            estimator: false,
        }
    }

    pub(crate) fn chain() -> RuntimeModelInput {
        let nodes = vec![
            node(1, 1.0, 10.0, 1),
            node(2, 10.0, 10.0, 1),
            node(3, 2.0, 10.0, 1),
            node(4, 0.0, 10.0, 1),
        ];
        RuntimeModelInput::new(
            nodes,
            &[
                (NodeId(1), NodeId(2)),
                (NodeId(2), NodeId(3)),
                (NodeId(3), NodeId(4)),
            ],
            NodeId(4),
        )
        .unwrap()
    }

    /// src(1) → f(10) → {g(2), h(3)} → gather(0).
    pub(crate) fn diamond() -> RuntimeModelInput {
        let nodes = vec![
            node(1, 1.0, 10.0, 1),
            node(2, 10.0, 100.0, 1),
            node(3, 2.0, 10.0, 1),
            node(4, 3.0, 10.0, 1),
            node(5, 0.0, 10.0, 1),
        ];
        let e = |a, b| (NodeId(a), NodeId(b));
        RuntimeModelInput::new(
            nodes,
            &[e(1, 2), e(2, 3), e(2, 4), e(3, 5), e(4, 5)],
            NodeId(5),
        )
        .unwrap()
    }

    #[test]
    fn chain_runtime_is_sum() {
        let m = chain();
        assert_eq!(est_runtime(&m, &CacheSet::new()), 13.0);
        assert_eq!(closed_form_runtime(&m, &CacheSet::new()), 13.0);
    }

    #[test]
    fn diamond_runtime() {
        let m = diamond();
        assert_eq!(est_runtime(&m, &CacheSet::new()), 27.0);
        let f = CacheSet::from_nodes(&m, [NodeId(2)]);
        assert_eq!(est_runtime(&m, &f), 16.0);
        assert_eq!(closed_form_runtime(&m, &f), 16.0);
        assert_eq!(m.compute_counts(&f)[&NodeId(2)], 1);
        assert_eq!(m.compute_counts(&CacheSet::new())[&NodeId(2)], 2);
    }

    #[test]
    fn weighted_estimator_repeats_subtree() {
        // src(1) → u(4) → est(w = 5, t = 0)
        let nodes = vec![
            node(1, 1.0, 8.0, 1),
            node(2, 4.0, 8.0, 1),
            node(3, 0.0, 8.0, 5),
        ];
        let m = RuntimeModelInput::new(
            nodes,
            &[(NodeId(1), NodeId(2)), (NodeId(2), NodeId(3))],
            NodeId(3),
        )
        .unwrap();
        let none = est_runtime(&m, &CacheSet::new());
        let cached = est_runtime(&m, &CacheSet::from_nodes(&m, [NodeId(2)]));
        assert_eq!(none, 25.0);
        assert_eq!(cached, 5.0);
        assert_eq!(none - cached, 20.0);
    }

    #[test]
    fn simulation_matches_counts() {
        let m = diamond();
        for ids in [vec![], vec![NodeId(2)], vec![NodeId(1), NodeId(3)]] {
            let c = CacheSet::from_nodes(&m, ids);
            let sim = simulate(&m, 1 << 20, &SimPolicy::Pinned(c.clone()));
            assert_eq!(sim.computes, m.compute_counts(&c));
            assert_eq!(sim.runtime, est_runtime(&m, &c));
        }
    }

    #[test]
    fn candidates_skip_single_use() {
        assert!(chain().candidates().is_empty());
        assert_eq!(diamond().candidates(), vec![NodeId(1), NodeId(2)]);
    }
}
