//! Exact and randomized PCA on data with a geometrically decaying
//! spectrum.
//!
//! ```text
//! cargo run --release --example pca
//! ```

use std::time::Instant;

use nalgebra::DMatrix;
use pipeopt::ops::pca::max_principal_angle_sin;
use pipeopt::ops::{pca_svd, pca_tsvd, DenseMatrix, TsvdConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
        .qr()
        .q()
}

fn main() -> pipeopt::Result<()> {
    let (n, d, k) = (2000, 400, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = orthonormal(n, d, &mut rng);
    let v = orthonormal(d, d, &mut rng);
    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |j, _| {
        2f64.powi(-(j as i32))
    }));
    let a = DenseMatrix::from_nalgebra(&(u * sigma * v.transpose()));

    let start = Instant::now();
    let exact = pca_svd(&a, k)?;
    println!("exact SVD      {:.3}s", start.elapsed().as_secs_f64());
    for power_iters in [0, 1, 2] {
        let start = Instant::now();
        let approx = pca_tsvd(
            &a,
            k,
            TsvdConfig {
                power_iters,
                ..Default::default()
            },
        )?;
        let secs = start.elapsed().as_secs_f64();
        let angle = max_principal_angle_sin(&exact.components, &approx.components).asin();
        println!("TSVD q={power_iters}       {secs:.3}s  largest principal angle {angle:.2e}");
    }
    Ok(())
}
