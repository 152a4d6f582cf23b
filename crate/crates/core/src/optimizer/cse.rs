//! Common sub-expression elimination.
//!
//! Two nodes compute the same value when they have the same operator, the
//! same parameters, weight and implementation, and the same producers in the
//! same slots. Walking the graph in topological order and remapping each
//! node's inputs to their surviving representative merges whole duplicate
//! chains in one pass, starting from duplicated sources.

use std::collections::BTreeMap;

use crate::costmodel::ImplId;
use crate::dag::{Edge, NodeId, PipelineGraph};
use crate::error::Result;

/// Pairs of `(kept, removed)` node ids, in the order they were merged.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CseReport {
    pub merged: Vec<(NodeId, NodeId)>,
}

impl CseReport {
    pub fn is_empty(&self) -> bool {
        self.merged.is_empty()
    }
}

type Key = (String, u32, Option<ImplId>, Vec<NodeId>);

/// Merges structurally identical nodes, keeping the first of each group in
/// topological order. Consumers of a removed node are rewired to the kept one.
pub fn eliminate_common_subexpressions(
    graph: &PipelineGraph,
) -> Result<(PipelineGraph, CseReport)> {
    let mut rep: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut seen: BTreeMap<Key, NodeId> = BTreeMap::new();
    let mut report = CseReport::default();
    for id in graph.topo_order()? {
        let node = graph.node(id)?;
        let inputs: Vec<NodeId> = graph.inputs(id).iter().map(|i| rep[i]).collect();
        let key = (
            node.kind.signature(),
            node.weight,
            node.implementation,
            inputs,
        );
        match seen.get(&key) {
            Some(&kept) => {
                rep.insert(id, kept);
                report.merged.push((kept, id));
            }
            None => {
                seen.insert(key, id);
                rep.insert(id, id);
            }
        }
    }
    if report.is_empty() {
        return Ok((graph.clone(), report));
    }
    let nodes = graph
        .nodes()
        .filter(|n| rep[&n.id] == n.id)
        .cloned()
        .collect();
    let mut edges: Vec<Edge> = graph
        .edges()
        .iter()
        .filter(|e| rep[&e.to] == e.to)
        .map(|e| Edge {
            from: rep[&e.from],
            to: e.to,
            slot: e.slot,
        })
        .collect();
    edges.sort();
    edges.dedup();
    let merged = PipelineGraph::from_parts(nodes, edges, rep[&graph.sink()])?;
    Ok((merged, report))
}
