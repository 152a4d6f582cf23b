//! The three convolution schemes on one image batch: agreement and timing.
//!
//! ```text
//! cargo run --release --example convolution
//! ```

use std::time::Instant;

use pipeopt::ops::{convolve_fft, convolve_matmul, convolve_separable, FilterBank, ImageTensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn max_diff(a: &ImageTensor, b: &ImageTensor) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn main() -> pipeopt::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let images: Vec<ImageTensor> = (0..16)
        .map(|_| ImageTensor::random(64, 3, &mut rng))
        .collect();
    println!(
        "{:>4} {:>10} {:>10} {:>10} {:>12}",
        "k", "matmul", "fft", "separable", "max |diff|"
    );
    for k in [3, 5, 9, 15] {
        let bank = FilterBank::random(4, k, 3, true, k as u64);
        let time = |f: &dyn Fn(&ImageTensor, &FilterBank) -> pipeopt::Result<ImageTensor>| {
            let start = Instant::now();
            let out: pipeopt::Result<Vec<ImageTensor>> =
                images.iter().map(|img| f(img, &bank)).collect();
            out.map(|o| (o, start.elapsed().as_secs_f64()))
        };
        let (mm, t_mm) = time(&convolve_matmul)?;
        let (fft, t_fft) = time(&convolve_fft)?;
        let (sep, t_sep) = time(&convolve_separable)?;
        let diff = mm
            .iter()
            .zip(&fft)
            .chain(mm.iter().zip(&sep))
            .map(|(a, b)| max_diff(a, b))
            .fold(0.0, f64::max);
        println!("{k:>4} {t_mm:>9.4}s {t_fft:>9.4}s {t_sep:>9.4}s {diff:>12.2e}");
    }
    Ok(())
}
