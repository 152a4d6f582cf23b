//! Cost-based choice of solver and PCA implementations as data shape and
//! cluster size change.
//!
//! ```text
//! cargo run --release --example operator_selection
//! ```

use pipeopt::costmodel::{choose_physical, ClusterResourceDescriptor};
use pipeopt::dag::{DatasetStats, LogicalNode, PcaParams, SolverParams};

fn main() -> pipeopt::Result<()> {
    let solver = LogicalNode::linear_solver(SolverParams {
        iters: 20,
        ..SolverParams::default()
    });
    let pca = LogicalNode::pca(PcaParams::new(20));
    let labels = |n| DatasetStats::labels(n, 2);

    println!(
        "{:<8} {:>9} {:>7} {:>8}  {:<10} {}",
        "workers", "n", "d", "nnz/row", "solver", "cost (s)"
    );
    for workers in [1, 16] {
        let r = ClusterResourceDescriptor::default().with_workers(workers);
        for &(n, d, s) in &[
            (100_000u64, 100usize, None),
            (100_000, 4_000, None),
            (100_000, 100_000, Some(100.0)),
            (1_000_000, 1_000, None),
        ] {
            let stats = match s {
                Some(s) => DatasetStats::sparse(n, d, s),
                None => DatasetStats::dense(n, d),
            };
            let c = choose_physical(&solver, &[stats, labels(n)], &r)?;
            println!(
                "{workers:<8} {n:>9} {d:>7} {:>8}  {:<10} {:.3e}",
                stats.s,
                c.imp.name(),
                c.cost
            );
        }
    }

    println!(
        "\n{:<8} {:>9} {:>7}  {:<10} {}",
        "workers", "n", "d", "pca", "cost (s)"
    );
    for workers in [1, 16] {
        let r = ClusterResourceDescriptor::default().with_workers(workers);
        for &(n, d) in &[(10_000u64, 256usize), (100_000, 4_096), (1_000_000, 1_024)] {
            let c = match choose_physical(&pca, &[DatasetStats::dense(n, d)], &r) {
                Ok(c) => c,
                Err(e) => {
                    println!("{workers:<8} {n:>9} {d:>7}  {e}");
                    continue;
                }
            };
            println!(
                "{workers:<8} {n:>9} {d:>7}  {:<10} {:.3e}",
                c.imp.name(),
                c.cost
            );
            for cand in c.candidates.iter().filter(|c| !c.feasible) {
                println!(
                    "{:>28}  {} infeasible: {}",
                    "",
                    cand.imp,
                    cand.reason.as_deref().unwrap_or("-")
                );
            }
        }
    }
    Ok(())
}
