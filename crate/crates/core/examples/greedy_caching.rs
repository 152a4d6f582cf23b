//! Cache-set selection on random pipeline DAGs: greedy against the
//! brute-force optimum, the estimator-only rule and LRU.
//!
//! ```text
//! cargo run --release --example greedy_caching [trials]
//! ```

use pipeopt::optimizer::synthetic::{lru_admission_workload, random_dag, SyntheticConfig};
use pipeopt::optimizer::{
    baseline_rule_cache, est_runtime, greedy_cache, optimal_cache_bruteforce, simulate, CacheSet,
    SimPolicy,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pipeopt::Result<()> {
    let trials = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(50);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = SyntheticConfig::default();
    println!(
        "{:>7}  {:>14} {:>10} {:>10} {:>10}",
        "budget", "greedy/optimal", "greedy<=lru", "greedy<=rule", "gain"
    );
    let dags: Vec<_> = (0..trials).map(|_| random_dag(&mut rng, &cfg)).collect();
    for fraction in [0.1, 0.25, 0.5, 1.0] {
        let (mut log_ratio, mut beats_lru, mut beats_rule, mut gain) = (0.0, 0, 0, 0.0);
        for m in &dags {
            let budget = fraction * m.total_intermediate_size();
            let greedy = est_runtime(m, &greedy_cache(m, budget));
            let optimal = est_runtime(m, &optimal_cache_bruteforce(m, budget)?);
            let rule = est_runtime(m, &baseline_rule_cache(m, budget));
            let lru = simulate(
                m,
                budget as u64,
                &SimPolicy::Lru {
                    admission_fraction: 0.3,
                },
            )
            .runtime;
            log_ratio += (greedy / optimal).ln();
            beats_lru += usize::from(greedy <= lru * (1.0 + 1e-9));
            beats_rule += usize::from(greedy <= rule * (1.0 + 1e-9));
            gain += est_runtime(m, &CacheSet::new()) / greedy;
        }
        let t = dags.len() as f64;
        println!(
            "{:>6}%  {:>14.4} {:>10.2} {:>10.2} {:>9.2}x",
            fraction * 100.0,
            (log_ratio / t).exp(),
            beats_lru as f64 / t,
            beats_rule as f64 / t,
            gain / t
        );
    }

    println!("\nsingle-use intermediates larger than the reused ones:");
    let m = lru_admission_workload();
    for budget in [100u64, 200, 400] {
        let lru = simulate(
            &m,
            budget,
            &SimPolicy::Lru {
                admission_fraction: 0.3,
            },
        )
        .runtime;
        let greedy = est_runtime(&m, &greedy_cache(&m, budget as f64));
        println!("  budget {budget:>4}: lru {lru:>8.2}  greedy {greedy:>8.2}");
    }
    Ok(())
}
