use super::model::{est_runtime, CacheSet, RuntimeModelInput};
use crate::dag::NodeId;
use crate::error::{Error, Result};

/// Largest graph [`optimal_cache_bruteforce`] accepts.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Relative improvement below which a pick counts as no improvement.
const IMPROVEMENT_EPS: f64 = 1e-12;

/// One accepted greedy pick.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyStep {
    pub node: NodeId,
    pub size: f64,
    pub runtime_before: f64,
    pub runtime_after: f64,
}

impl GreedyStep {
    pub fn saving(&self) -> f64 {
        self.runtime_before - self.runtime_after
    }
}

/// Greedy cache selection: repeatedly adds the node whose caching gives the
/// lowest modeled runtime among nodes that fit in the remaining budget, and
/// stops once no addition strictly lowers it.
pub fn greedy_cache(m: &RuntimeModelInput, mem_size: f64) -> CacheSet {
    greedy_cache_with_steps(m, mem_size).0
}

/// [`greedy_cache`] together with the sequence of picks.
pub fn greedy_cache_with_steps(
    m: &RuntimeModelInput,
    mem_size: f64,
) -> (CacheSet, Vec<GreedyStep>) {
    let mut cache = CacheSet::new();
    let mut steps = Vec::new();
    let mut current = est_runtime(m, &cache);
    let mut remaining: Vec<NodeId> = m.candidates();
    loop {
        let mem_left = mem_size - cache.total_bytes();
        let mut best: Option<(f64, f64, NodeId)> = None;
        for &v in &remaining {
            let size = m.node(v).expect("candidate is a node").size;
            if size > mem_left {
                continue;
            }
            let mut trial = cache.clone();
            trial.insert(v, size);
            let rt = est_runtime(m, &trial);
            let better = match best {
                None => true,
                Some((brt, bsize, bid)) => (rt, size, v) < (brt, bsize, bid),
            };
            if better {
                best = Some((rt, size, v));
            }
        }
        match best {
            Some((rt, size, v)) if rt < current - IMPROVEMENT_EPS * current.abs() => {
                cache.insert(v, size);
                steps.push(GreedyStep {
                    node: v,
                    size,
                    runtime_before: current,
                    runtime_after: rt,
                });
                current = rt;
                remaining.retain(|&x| x != v);
            }
            _ => return (cache, steps),
        }
    }
}

/// Exhaustive search over every assignment of the non-sink nodes. Ties go to
/// the smaller total size, then the lexicographically smaller id list.
pub fn optimal_cache_bruteforce(m: &RuntimeModelInput, mem_size: f64) -> Result<CacheSet> {
    if m.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            what: "exhaustive cache search",
            count: m.len(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let sink = m.sink();
    let pool: Vec<(NodeId, f64)> = m
        .nodes()
        .iter()
        .filter(|n| n.id != sink)
        .map(|n| (n.id, n.size))
        .collect();
    let mut best: Option<(f64, f64, Vec<NodeId>, CacheSet)> = None;
    for mask in 0u32..(1u32 << pool.len()) {
        let mut set = CacheSet::new();
        for (i, &(id, size)) in pool.iter().enumerate() {
            if mask & (1 << i) != 0 {
                set.insert(id, size);
            }
        }
        if set.total_bytes() > mem_size {
            continue;
        }
        let rt = est_runtime(m, &set);
        let ids: Vec<NodeId> = set.ids().collect();
        let better = match &best {
            None => true,
            Some((brt, bbytes, bids, _)) => rt
                .total_cmp(brt)
                .then(set.total_bytes().total_cmp(bbytes))
                .then_with(|| ids.cmp(bids))
                .is_lt(),
        };
        if better {
            best = Some((rt, set.total_bytes(), ids, set));
        }
    }
    Ok(best.expect("the empty set is always feasible").3)
}

/// Caches estimator outputs in topological order while they fit.
pub fn baseline_rule_cache(m: &RuntimeModelInput, mem_size: f64) -> CacheSet {
    let mut cache = CacheSet::new();
    let sink = m.sink();
    for id in m.topo_order() {
        let n = m.node(id).expect("ordered id is a node");
        if n.estimator && id != sink && cache.total_bytes() + n.size <= mem_size {
            cache.insert(id, n.size);
        }
    }
    cache
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::model::tests::{chain, diamond, node};
    use crate::optimizer::model::{closed_form_runtime, ModelNode};
    use crate::optimizer::synthetic::{random_dag, SyntheticConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_budget_caches_nothing() {
        assert!(greedy_cache(&diamond(), 0.0).is_empty());
    }

    #[test]
    fn unconstrained_diamond_caches_f() {
        let m = diamond();
        let c = greedy_cache(&m, 1e9);
        assert!(c.contains(NodeId(2)));
        assert_eq!(est_runtime(&m, &c), 16.0);
    }

    #[test]
    fn budget_excludes_larger_saving() {
        // f saves 11 but needs 100 bytes; u saves 3 and needs 10.
        let e = |a, b| (NodeId(a), NodeId(b));
        let nodes = vec![
            node(1, 11.0, 100.0, 1), // f
            node(2, 3.0, 10.0, 1),   // u
            node(3, 0.0, 1.0, 1),
            node(4, 0.0, 1.0, 1),
            node(5, 0.0, 1.0, 1),
            node(6, 0.0, 1.0, 1),
            node(7, 0.0, 1.0, 1),
        ];
        let m = RuntimeModelInput::new(
            nodes,
            &[
                e(1, 3),
                e(1, 4),
                e(2, 5),
                e(2, 6),
                e(3, 7),
                e(4, 7),
                e(5, 7),
                e(6, 7),
            ],
            NodeId(7),
        )
        .unwrap();
        let none = est_runtime(&m, &CacheSet::new());
        assert_eq!(
            none - est_runtime(&m, &CacheSet::from_nodes(&m, [NodeId(1)])),
            11.0
        );
        assert_eq!(
            none - est_runtime(&m, &CacheSet::from_nodes(&m, [NodeId(2)])),
            3.0
        );
        let c = greedy_cache(&m, 50.0);
        assert_eq!(c.ids().collect::<Vec<_>>(), vec![NodeId(2)]);
    }

    #[test]
    fn bruteforce_on_chain_and_diamond() {
        let m = chain();
        let opt = optimal_cache_bruteforce(&m, 1e9).unwrap();
        assert_eq!(est_runtime(&m, &opt), est_runtime(&m, &CacheSet::new()));
        assert!(opt.is_empty());
        let m = diamond();
        let opt = optimal_cache_bruteforce(&m, 1e9).unwrap();
        assert_eq!(opt.ids().collect::<Vec<_>>(), vec![NodeId(2)]);
        assert_eq!(est_runtime(&m, &opt), 16.0);
    }

    #[test]
    fn bruteforce_guard() {
        let nodes: Vec<ModelNode> = (1..=21).map(|i| node(i, 1.0, 1.0, 1)).collect();
        let edges: Vec<_> = (1..21).map(|i| (NodeId(i), NodeId(i + 1))).collect();
        let m = RuntimeModelInput::new(nodes, &edges, NodeId(21)).unwrap();
        assert!(matches!(
            optimal_cache_bruteforce(&m, 1.0),
            Err(Error::TooLarge { .. })
        ));
    }

    fn estimators() -> RuntimeModelInput {
        let mut nodes = vec![
            node(1, 1.0, 10.0, 1),
            node(2, 1.0, 30.0, 1),
            node(3, 1.0, 30.0, 1),
            node(4, 0.0, 1.0, 1),
        ];
        nodes[1].estimator = true;
        nodes[2].estimator = true;
        let e = |a, b| (NodeId(a), NodeId(b));
        RuntimeModelInput::new(nodes, &[e(1, 2), e(1, 3), e(2, 4), e(3, 4)], NodeId(4)).unwrap()
    }

    #[test]
    fn rule_baseline() {
        assert!(baseline_rule_cache(&diamond(), 1e9).is_empty());
        let m = estimators();
        assert_eq!(baseline_rule_cache(&m, 60.0).len(), 2);
        assert_eq!(
            baseline_rule_cache(&m, 40.0).ids().collect::<Vec<_>>(),
            vec![NodeId(2)]
        );
        assert!(baseline_rule_cache(&m, 20.0).is_empty());
    }

    fn arb_dag() -> impl Strategy<Value = (RuntimeModelInput, f64)> {
        (any::<u64>(), 3usize..11, 0.0f64..1.5).prop_map(|(seed, n, frac)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_dag(
                &mut rng,
                &SyntheticConfig {
                    nodes: n,
                    ..Default::default()
                },
            );
            let budget = frac * m.total_intermediate_size();
            (m, budget)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn budgets_are_respected((m, budget) in arb_dag()) {
            prop_assert!(greedy_cache(&m, budget).total_bytes() <= budget);
            prop_assert!(baseline_rule_cache(&m, budget).total_bytes() <= budget);
            prop_assert!(optimal_cache_bruteforce(&m, budget).unwrap().total_bytes() <= budget);
        }

        #[test]
        fn greedy_strictly_improves((m, budget) in arb_dag()) {
            let (c, steps) = greedy_cache_with_steps(&m, budget);
            let none = est_runtime(&m, &CacheSet::new());
            let mut prev = none;
            for s in &steps {
                prop_assert!(s.runtime_after < prev);
                prop_assert_eq!(s.runtime_before, prev);
                prev = s.runtime_after;
            }
            prop_assert!(est_runtime(&m, &c) <= none);
        }

        #[test]
        fn optimal_dominates((m, budget) in arb_dag()) {
            let opt = est_runtime(&m, &optimal_cache_bruteforce(&m, budget).unwrap());
            let tol = 1e-9 * opt.max(1.0);
            prop_assert!(opt <= est_runtime(&m, &greedy_cache(&m, budget)) + tol);
            prop_assert!(opt <= est_runtime(&m, &baseline_rule_cache(&m, budget)) + tol);
        }

        #[test]
        fn unconstrained_greedy_caches_all_reuse((m, _b) in arb_dag()) {
            let budget = m.total_intermediate_size();
            let greedy = est_runtime(&m, &greedy_cache(&m, budget));
            let all = est_runtime(&m, &CacheSet::from_nodes(&m, m.candidates()));
            prop_assert!((greedy - all).abs() <= 1e-9 * all.max(1.0));
        }

        #[test]
        fn closed_form_agrees((m, budget) in arb_dag()) {
            for c in [CacheSet::new(), greedy_cache(&m, budget), baseline_rule_cache(&m, budget)] {
                let a = est_runtime(&m, &c);
                let b = closed_form_runtime(&m, &c);
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{} vs {}", a, b);
            }
        }
    }
}
