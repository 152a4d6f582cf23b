//! Exact QR, L-BFGS and block coordinate descent on one least-squares
//! problem.
//!
//! ```text
//! cargo run --release --example solvers [n] [d]
//! ```

use std::time::Instant;

use pipeopt::costmodel::fit::regression_labels;
use pipeopt::ops::solvers::objective;
use pipeopt::ops::{solve_block, solve_exact_qr, solve_lbfgs, DenseMatrix, Features, LbfgsConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pipeopt::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let n = args.next().flatten().unwrap_or(5000);
    let d = args.next().flatten().unwrap_or(200);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = DenseMatrix::from_fn(n, d, |_, _| rng.random::<f64>() - 0.5);
    let b = regression_labels(&mut rng, &a, 3);
    let features = Features::Dense(&a);

    let start = Instant::now();
    let exact = solve_exact_qr(&a, &b)?;
    let t_exact = start.elapsed().as_secs_f64();
    let best = objective(features, &exact, &b)?;
    println!("{:<12} {:>10} {:>14}", "solver", "seconds", "rel. excess");
    println!("{:<12} {:>10.4} {:>14.2e}", "exact QR", t_exact, 0.0);

    let start = Instant::now();
    let (lbfgs, report) = solve_lbfgs(
        features,
        &b,
        LbfgsConfig {
            iters: 100,
            ..Default::default()
        },
    )?;
    let t = start.elapsed().as_secs_f64();
    let excess = (objective(features, &lbfgs, &b)? - best) / best;
    println!(
        "{:<12} {:>10.4} {:>14.2e}  ({} iterations)",
        "L-BFGS", t, excess, report.iterations
    );

    let start = Instant::now();
    let (block, _) = solve_block(features, &b, 50, 10)?;
    let t = start.elapsed().as_secs_f64();
    let excess = (objective(features, &block, &b)? - best) / best;
    println!(
        "{:<12} {:>10.4} {:>14.2e}  (block 50, 10 passes)",
        "block", t, excess
    );
    Ok(())
}
