use super::{
    combine, conv_cost, pca_cost, solver_cost, ClusterResourceDescriptor, ConvShape, CostEstimate,
    ImplId,
};
use crate::dag::{DatasetStats, LogicalNode, NodeId, OperatorKind};
use crate::error::{Error, Result};

/// One evaluated implementation.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub imp: ImplId,
    pub estimate: CostEstimate,
    /// Combined cost in seconds; infinite when the estimate is unavailable.
    pub cost: f64,
    pub feasible: bool,
    /// Why the candidate is infeasible.
    pub reason: Option<String>,
}

/// The selected implementation for one logical node.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalChoice {
    pub node: NodeId,
    pub imp: ImplId,
    pub cost: f64,
    pub feasible: bool,
    /// Every evaluated implementation, in tie-break order.
    pub candidates: Vec<Candidate>,
}

impl PhysicalChoice {
    pub fn chosen(&self) -> &Candidate {
        self.candidates
            .iter()
            .find(|c| c.imp == self.imp)
            .expect("chosen impl is a candidate")
    }
}

/// Implementations available for an operator kind.
pub fn implementations(kind: &OperatorKind) -> &'static [ImplId] {
    match kind {
        OperatorKind::LinearSolver(_) => &ImplId::SOLVERS,
        OperatorKind::Pca(_) => &ImplId::PCA,
        OperatorKind::Convolution(_) => &ImplId::CONVOLUTION,
        _ => &[],
    }
}

fn estimate(
    node: &LogicalNode,
    imp: ImplId,
    inputs: &[DatasetStats],
    r: &ClusterResourceDescriptor,
) -> Result<CostEstimate> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Invalid(format!("{}: no input statistics", node.name)))?;
    match &node.kind {
        OperatorKind::LinearSolver(p) => {
            let classes = inputs.get(1).map(|l| l.k.unwrap_or(l.d)).unwrap_or(1);
            solver_cost(imp, first, classes, p.iters, p.block_size.min(first.d), r)
        }
        OperatorKind::Pca(p) => pca_cost(imp, first, p.k, r),
        OperatorKind::Convolution(p) => {
            let (side, channels) = first.image.ok_or_else(|| {
                Error::Invalid(format!(
                    "{}: convolution input has no image shape",
                    node.name
                ))
            })?;
            let shape = ConvShape {
                side,
                channels,
                filters: p.filters,
                size: p.size,
                separable: p.separable,
                images: first.n,
            };
            conv_cost(imp, &shape, r)
        }
        _ => Err(Error::Invalid(format!(
            "{} has a single implementation",
            node.name
        ))),
    }
}

/// Cheapest feasible candidate; equal costs go to the earlier [`ImplId`].
fn best_candidate(cands: &[Candidate]) -> Option<&Candidate> {
    cands
        .iter()
        .filter(|c| c.feasible)
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.imp.cmp(&b.imp)))
}

/// Picks the cheapest feasible implementation of an optimizable node.
/// `inputs` holds the statistics of each input slot.
pub fn choose_physical(
    node: &LogicalNode,
    inputs: &[DatasetStats],
    r: &ClusterResourceDescriptor,
) -> Result<PhysicalChoice> {
    choose_physical_among(node, inputs, r, implementations(&node.kind))
}

/// As [`choose_physical`], restricted to `candidates`.
pub fn choose_physical_among(
    node: &LogicalNode,
    inputs: &[DatasetStats],
    r: &ClusterResourceDescriptor,
    candidates: &[ImplId],
) -> Result<PhysicalChoice> {
    if !node.kind.is_optimizable() {
        return Err(Error::Invalid(format!(
            "{} is not an optimizable operator",
            node.name
        )));
    }
    let mut evaluated = Vec::with_capacity(candidates.len());
    let mut sorted = candidates.to_vec();
    sorted.sort();
    sorted.dedup();
    for imp in sorted {
        let c = match estimate(node, imp, inputs, r) {
            Ok(est) if est.mem_per_node > r.mem_per_node => Candidate {
                imp,
                estimate: est,
                cost: combine(&est, r),
                feasible: false,
                reason: Some(format!(
                    "needs {:.3e} bytes per node, {:.3e} available",
                    est.mem_per_node, r.mem_per_node
                )),
            },
            Ok(est) => Candidate {
                imp,
                estimate: est,
                cost: combine(&est, r),
                feasible: true,
                reason: None,
            },
            Err(Error::NotSeparable) => Candidate {
                imp,
                estimate: CostEstimate::default(),
                cost: f64::INFINITY,
                feasible: false,
                reason: Some("filter bank is not separable".into()),
            },
            Err(e) => return Err(e),
        };
        evaluated.push(c);
    }
    match best_candidate(&evaluated).cloned() {
        Some(b) => Ok(PhysicalChoice {
            node: node.id,
            imp: b.imp,
            cost: b.cost,
            feasible: true,
            candidates: evaluated,
        }),
        None => {
            let reason = evaluated
                .iter()
                .map(|c| {
                    format!(
                        "{}: {}",
                        c.imp,
                        c.reason.as_deref().unwrap_or("unavailable")
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::NoFeasibleImpl {
                node: node.name.clone(),
                reason,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::fit::{fit_descriptor, Observation};
    use crate::dag::{ConvParams, PcaParams, SolverParams};
    use proptest::prelude::*;

    fn solver() -> LogicalNode {
        LogicalNode::linear_solver(SolverParams::default())
    }

    #[test]
    fn memory_overrun_is_never_chosen() {
        let r = ClusterResourceDescriptor {
            mem_per_node: 1e8,
            ..Default::default()
        };
        let stats = [
            DatasetStats::dense(100_000, 4096),
            DatasetStats::labels(100_000, 2),
        ];
        let choice = choose_physical(&solver(), &stats, &r).unwrap();
        let local = choice
            .candidates
            .iter()
            .find(|c| c.imp == ImplId::LocalQr)
            .unwrap();
        assert!(!local.feasible);
        assert_ne!(choice.imp, ImplId::LocalQr);
        assert!(choice.chosen().estimate.mem_per_node <= r.mem_per_node);
    }

    #[test]
    fn single_candidate_is_chosen() {
        let r = ClusterResourceDescriptor::default();
        let stats = [DatasetStats::dense(1000, 10), DatasetStats::labels(1000, 2)];
        let choice = choose_physical_among(&solver(), &stats, &r, &[ImplId::BlockSolve]).unwrap();
        assert_eq!(choice.imp, ImplId::BlockSolve);
        assert_eq!(choice.candidates.len(), 1);
    }

    #[test]
    fn sparse_text_picks_lbfgs() {
        let r = ClusterResourceDescriptor {
            workers: 16,
            ..Default::default()
        };
        let stats = [
            DatasetStats::sparse(1_000_000, 100_000, 100.0),
            DatasetStats::labels(1_000_000, 2),
        ];
        assert_eq!(
            choose_physical(&solver(), &stats, &r).unwrap().imp,
            ImplId::Lbfgs
        );
    }

    #[test]
    fn all_infeasible_is_an_error() {
        let r = ClusterResourceDescriptor {
            mem_per_node: 1.0,
            ..Default::default()
        };
        let stats = [
            DatasetStats::dense(1000, 100),
            DatasetStats::labels(1000, 2),
        ];
        let err = choose_physical(&solver(), &stats, &r).unwrap_err();
        assert!(matches!(err, Error::NoFeasibleImpl { .. }));
        assert!(err.to_string().contains("LocalQR: needs"));
    }

    #[test]
    fn non_separable_bank_excludes_separable() {
        let node = LogicalNode::convolution(ConvParams {
            filters: 4,
            size: 3,
            separable: false,
            seed: 0,
        });
        let r = ClusterResourceDescriptor::default();
        let choice = choose_physical(&node, &[DatasetStats::images(10, 32, 3)], &r).unwrap();
        let sep = &choice.candidates[0];
        assert_eq!(sep.imp, ImplId::Separable);
        assert!(!sep.feasible);
        assert_eq!(choice.imp, ImplId::MatMul);
    }

    #[test]
    fn equal_costs_break_ties_by_impl_order() {
        let est = CostEstimate {
            exec_units: 1.0,
            coord_units: 0.0,
            mem_per_node: 0.0,
        };
        let cand = |imp| Candidate {
            imp,
            estimate: est,
            cost: 1.0,
            feasible: true,
            reason: None,
        };
        let cands = [
            cand(ImplId::Fft),
            cand(ImplId::MatMul),
            cand(ImplId::Separable),
        ];
        assert_eq!(best_candidate(&cands).unwrap().imp, ImplId::Separable);
    }

    /// Runtimes in seconds measured on a 16-node cluster for exact and
    /// randomized PCA, local and distributed; `None` marks a run that did not
    /// complete.
    fn pca_table() -> Vec<((u64, usize, usize), [Option<f64>; 4])> {
        let s = |a: f64, b: f64, c: f64, d: f64| [Some(a), Some(b), Some(c), Some(d)];
        let x = |c: f64, d: f64| [None, None, Some(c), Some(d)];
        vec![
            ((10_000, 256, 1), s(0.1, 0.2, 1.7, 4.9)),
            ((10_000, 256, 16), s(0.1, 0.3, 1.7, 3.8)),
            ((10_000, 256, 64), s(0.1, 0.4, 1.7, 5.3)),
            ((10_000, 4096, 16), s(26.0, 3.0, 106.0, 6.0)),
            ((10_000, 4096, 64), s(26.0, 6.0, 106.0, 22.0)),
            ((10_000, 4096, 1024), s(26.0, 34.0, 106.0, 104.0)),
            ((1_000_000, 256, 1), s(11.0, 14.0, 2.0, 16.0)),
            ((1_000_000, 256, 16), s(11.0, 30.0, 2.0, 59.0)),
            ((1_000_000, 256, 64), s(11.0, 65.0, 2.0, 262.0)),
            ((1_000_000, 4096, 16), x(260.0, 75.0)),
            ((1_000_000, 4096, 64), x(260.0, 1326.0)),
            ((1_000_000, 4096, 1024), x(260.0, 8310.0)),
        ]
    }

    #[test]
    fn pca_choice_matches_measured_fastest() {
        let base = ClusterResourceDescriptor {
            workers: 16,
            mem_per_node: 16.0 * (1u64 << 30) as f64,
            ..Default::default()
        };
        let mut obs = Vec::new();
        for ((n, d, k), times) in pca_table() {
            for (imp, t) in ImplId::PCA.into_iter().zip(times) {
                if let Some(t) = t {
                    let est = pca_cost(imp, &DatasetStats::dense(n, d), k, &base).unwrap();
                    obs.push(Observation::new(imp, est, t));
                }
            }
        }
        let grid: Vec<f64> = (0..=12).map(|e| 10f64.powi(e)).collect();
        let r = fit_descriptor(&obs, &base, &grid);
        let mut hits = 0;
        for ((n, d, k), times) in pca_table() {
            let choice = choose_physical(
                &LogicalNode::pca(PcaParams::new(k)),
                &[DatasetStats::dense(n, d)],
                &r,
            )
            .unwrap();
            for (imp, t) in ImplId::PCA.into_iter().zip(times) {
                let c = choice.candidates.iter().find(|c| c.imp == imp).unwrap();
                assert_eq!(c.feasible, t.is_some(), "{imp} at n={n} d={d}: feasibility");
            }
            let fastest = ImplId::PCA
                .into_iter()
                .zip(times)
                .filter_map(|(i, t)| t.map(|t| (i, t)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            hits += usize::from(choice.imp == fastest);
        }
        assert!(hits * 10 >= 12 * 8, "{hits} of 12 cells");
    }

    fn descriptor() -> impl Strategy<Value = ClusterResourceDescriptor> {
        (1usize..64, 1e8f64..1e11, 1e7f64..1e10, 1e8f64..1e11).prop_map(|(w, cpu, net, mem)| {
            ClusterResourceDescriptor {
                workers: w,
                cpu_throughput: cpu,
                net_bandwidth: net,
                mem_per_node: mem,
                ..Default::default()
            }
        })
    }

    proptest! {
        #[test]
        fn selection_is_scale_invariant(r in descriptor(), n in 1u64..1_000_000, d in 2usize..5000,
                                        frac in 0.001f64..1.0, factor in 0.01f64..100.0) {
            let stats = [DatasetStats::sparse(n, d, (frac * d as f64).max(1.0)), DatasetStats::labels(n, 3)];
            let scaled = ClusterResourceDescriptor {
                cpu_throughput: r.cpu_throughput * factor,
                net_bandwidth: r.net_bandwidth * factor,
                ..r.clone()
            };
            let a = choose_physical(&solver(), &stats, &r);
            let b = choose_physical(&solver(), &stats, &scaled);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    let margin = (a.candidates.iter().filter(|c| c.feasible && c.imp != a.imp)
                        .map(|c| c.cost).fold(f64::INFINITY, f64::min) - a.cost) / a.cost;
                    if margin > 1e-9 {
                        prop_assert_eq!(a.imp, b.imp);
                    }
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "feasibility changed under scaling"),
            }
        }

        #[test]
        fn chosen_impl_fits_in_memory(r in descriptor(), n in 1u64..10_000_000, d in 2usize..20_000) {
            let stats = [DatasetStats::dense(n, d), DatasetStats::labels(n, 2)];
            if let Ok(c) = choose_physical(&solver(), &stats, &r) {
                prop_assert!(c.chosen().estimate.mem_per_node <= r.mem_per_node);
                prop_assert!(c.candidates.iter().filter(|x| x.feasible).all(|x| x.cost >= c.cost));
            }
        }

        #[test]
        fn selection_is_deterministic(r in descriptor(), n in 1u64..1_000_000, d in 2usize..5000) {
            let node = LogicalNode::pca(PcaParams::new(d.min(16)));
            let stats = [DatasetStats::dense(n, d)];
            let a = choose_physical(&node, &stats, &r).ok();
            let b = choose_physical(&node, &stats, &r).ok();
            prop_assert_eq!(a, b);
        }
    }
}
