//! Seeded random workloads for the caching optimizer.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use super::model::{ModelNode, RuntimeModelInput};
use crate::dag::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    /// Total node count, including the source and the sink.
    pub nodes: usize,
    /// Probability that an input is drawn from nodes that already have a
    /// consumer.
    pub reuse_prob: f64,
    /// Probability that a node takes two inputs.
    pub two_input_prob: f64,
    pub estimator_prob: f64,
    /// Weights drawn uniformly for estimators; everything else has `w = 1`.
    pub estimator_weights: Vec<u32>,
    /// Log-normal parameters of per-pass time in seconds.
    pub time_mu: f64,
    pub time_sigma: f64,
    /// Log-normal parameters of output size in bytes.
    pub size_mu: f64,
    pub size_sigma: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            nodes: 10,
            reuse_prob: 0.4,
            two_input_prob: 0.3,
            estimator_prob: 0.25,
            estimator_weights: vec![1, 5, 20],
            time_mu: 0.0,
            time_sigma: 1.0,
            size_mu: (1e6f64).ln(),
            size_sigma: 1.0,
        }
    }
}

/// A random single-sink DAG. Node 1 is the source; every node left without
/// a consumer feeds the sink, whose own cost is close to zero.
pub fn random_dag(rng: &mut impl Rng, cfg: &SyntheticConfig) -> RuntimeModelInput {
    let n = cfg.nodes.max(3);
    let time = LogNormal::new(cfg.time_mu, cfg.time_sigma).expect("valid log-normal");
    let size = LogNormal::new(cfg.size_mu, cfg.size_sigma).expect("valid log-normal");
    let mut nodes = Vec::with_capacity(n);
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    let mut consumed = vec![false; n + 1];
    let draw =
        |rng: &mut dyn rand::RngCore, i: u64, estimator: bool, weights: &[u32]| -> ModelNode {
            let weight = if estimator && !weights.is_empty() {
                weights[rng.random_range(0..weights.len())]
            } else {
                1
            };
            ModelNode {
                id: NodeId(i),
                name: format!("v{i}"),
                t: time.sample(rng),
                size: size.sample(rng).round().max(1.0),
                weight,
                estimator,
            }
        };
    nodes.push(draw(rng, 1, false, &[]));
    for i in 2..n as u64 {
        let estimator = rng.random_bool(cfg.estimator_prob);
        nodes.push(draw(rng, i, estimator, &cfg.estimator_weights));
        let arity = if i > 2 && rng.random_bool(cfg.two_input_prob) {
            2
        } else {
            1
        };
        let mut picked: Vec<u64> = Vec::new();
        for _ in 0..arity {
            let reused: Vec<u64> = (1..i)
                .filter(|&p| consumed[p as usize] && !picked.contains(&p))
                .collect();
            let fresh: Vec<u64> = (1..i)
                .filter(|&p| !consumed[p as usize] && !picked.contains(&p))
                .collect();
            let pool =
                if !reused.is_empty() && (fresh.is_empty() || rng.random_bool(cfg.reuse_prob)) {
                    reused
                } else {
                    fresh
                };
            if pool.is_empty() {
                break;
            }
            let p = pool[rng.random_range(0..pool.len())];
            picked.push(p);
        }
        for p in picked {
            consumed[p as usize] = true;
            edges.push((NodeId(p), NodeId(i)));
        }
    }
    let sink = n as u64;
    nodes.push(ModelNode {
        id: NodeId(sink),
        name: format!("v{sink}"),
        t: 1e-3,
        size: 1.0,
        weight: 1,
        estimator: false,
    });
    for p in 1..sink {
        if !consumed[p as usize] {
            edges.push((NodeId(p), NodeId(sink)));
        }
    }
    RuntimeModelInput::new(nodes, &edges, NodeId(sink)).expect("generated DAG is valid")
}

/// Two expensive outputs are each used twice, with a chain of large,
/// single-use intermediates computed between the uses. Larger budgets let
/// more of the chain past LRU admission control, and the chain then pushes
/// the reused outputs out of the store.
pub fn lru_admission_workload() -> RuntimeModelInput {
    let mk = |id: u64, name: &str, t: f64, size: f64| ModelNode {
        id: NodeId(id),
        name: name.to_string(),
        t,
        size,
        weight: 1,
        estimator: false,
    };
    let chain_sizes = [60.0, 60.0, 60.0, 120.0, 120.0];
    let mut nodes = vec![
        mk(1, "source", 1.0, 1.0),
        mk(2, "reused_a", 100.0, 20.0),
        mk(3, "reused_b", 100.0, 20.0),
        mk(4, "first_use", 0.1, 1.0),
    ];
    let mut edges = vec![
        (NodeId(1), NodeId(2)),
        (NodeId(1), NodeId(3)),
        (NodeId(2), NodeId(4)),
        (NodeId(3), NodeId(4)),
    ];
    let mut prev = NodeId(1);
    for (i, &s) in chain_sizes.iter().enumerate() {
        let id = NodeId(5 + i as u64);
        nodes.push(mk(id.0, &format!("bulk{}", i + 1), 1.0, s));
        edges.push((prev, id));
        prev = id;
    }
    let base = 5 + chain_sizes.len() as u64;
    nodes.push(mk(base, "second_use_a", 0.1, 1.0));
    nodes.push(mk(base + 1, "second_use_b", 0.1, 1.0));
    nodes.push(mk(base + 2, "sink", 0.0, 1.0));
    edges.push((NodeId(2), NodeId(base)));
    edges.push((NodeId(3), NodeId(base + 1)));
    for from in [NodeId(4), prev, NodeId(base), NodeId(base + 1)] {
        edges.push((from, NodeId(base + 2)));
    }
    RuntimeModelInput::new(nodes, &edges, NodeId(base + 2)).expect("workload is a valid DAG")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::greedy::greedy_cache;
    use crate::optimizer::model::{est_runtime, simulate, CacheSet, SimPolicy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_dags_are_deterministic_and_valid() {
        for seed in 0..50 {
            let cfg = SyntheticConfig {
                nodes: 12,
                ..Default::default()
            };
            let a = random_dag(&mut ChaCha8Rng::seed_from_u64(seed), &cfg);
            let b = random_dag(&mut ChaCha8Rng::seed_from_u64(seed), &cfg);
            assert_eq!(a, b);
            assert_eq!(a.len(), 12);
            assert!(a.nodes().iter().all(|n| n.weight == 1 || n.estimator));
        }
    }

    #[test]
    fn lru_degrades_as_budget_grows() {
        let m = lru_admission_workload();
        let budgets = [100u64, 200, 400];
        let lru: Vec<f64> = budgets
            .iter()
            .map(|&b| {
                simulate(
                    &m,
                    b,
                    &SimPolicy::Lru {
                        admission_fraction: 0.3,
                    },
                )
                .runtime
            })
            .collect();
        assert!(lru[0] < lru[1] && lru[1] < lru[2], "{lru:?}");
        let greedy: Vec<f64> = budgets
            .iter()
            .map(|&b| est_runtime(&m, &greedy_cache(&m, b as f64)))
            .collect();
        assert!(
            greedy[0] >= greedy[1] && greedy[1] >= greedy[2],
            "{greedy:?}"
        );
        assert!(greedy[2] < est_runtime(&m, &CacheSet::new()));
    }
}
