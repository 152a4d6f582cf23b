//! Demand-driven depth-first evaluation shared by the executor and the
//! caching simulator, so both produce the same sequence of cache events.

use crate::dag::NodeId;
use crate::error::Result;

/// DAG structure as seen by the evaluator.
pub trait Dependencies {
    /// Producers of `id`, in slot order.
    fn inputs_of(&self, id: NodeId) -> Vec<NodeId>;
    /// Passes `id` makes over its inputs per computation.
    fn weight_of(&self, id: NodeId) -> u32;
}

/// What happens when a node is demanded.
pub trait Evaluator {
    type Out: Clone;
    /// A materialized output, if one is available.
    fn lookup(&mut self, id: NodeId) -> Option<Self::Out>;
    /// Computes `id` from its inputs (in slot order) and offers the result
    /// to the cache.
    fn compute(&mut self, id: NodeId, inputs: Vec<Self::Out>) -> Result<Self::Out>;
}

/// Evaluates `id`: a cache hit returns immediately; otherwise each of the
/// node's `w` passes demands every input in slot order, then the node
/// computes once.
pub fn demand<D: Dependencies, E: Evaluator>(deps: &D, ev: &mut E, id: NodeId) -> Result<E::Out> {
    if let Some(v) = ev.lookup(id) {
        return Ok(v);
    }
    let producers = deps.inputs_of(id);
    let mut inputs = Vec::with_capacity(producers.len());
    for _ in 0..deps.weight_of(id).max(1) {
        inputs.clear();
        for &p in &producers {
            inputs.push(demand(deps, ev, p)?);
        }
    }
    ev.compute(id, inputs)
}
