//! Convolution, PCA and a linear solver over synthetic images, run at each
//! optimization level.
//!
//! ```text
//! cargo run --release --example image_pipeline [images]
//! ```

use std::time::Instant;

use pipeopt::costmodel::ClusterResourceDescriptor;
use pipeopt::executor::execute;
use pipeopt::optimizer::{optimize, OptimizationLevel, OptimizeOptions};
use pipeopt::workloads::{image_pipeline, image_sources, ImageWorkload};

fn main() -> pipeopt::Result<()> {
    let images = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2000);
    let w = ImageWorkload {
        images,
        ..Default::default()
    };
    let graph = image_pipeline(&w)?;
    let sources = image_sources(&w);
    let r = ClusterResourceDescriptor::default().with_workers(1);
    let budget = 1 << 30;

    println!(
        "{:<10} {:>10} {:>10} {:>10}  implementations",
        "level", "optimize", "execute", "total"
    );
    let mut outputs = Vec::new();
    for level in [
        OptimizationLevel::None,
        OptimizationLevel::PipeOnly,
        OptimizationLevel::Full,
    ] {
        let start = Instant::now();
        let o = optimize(
            &graph,
            &sources,
            &r,
            &OptimizeOptions {
                level,
                budget,
                ..Default::default()
            },
        )?;
        let planned = start.elapsed().as_secs_f64();
        let result = execute(&o.graph, &sources, &o.executor_config())?;
        let total = start.elapsed().as_secs_f64();
        let imps: Vec<String> = o.choices.iter().map(|c| c.imp.to_string()).collect();
        println!(
            "{:<10} {:>9.3}s {:>9.3}s {:>9.3}s  {}",
            format!("{level:?}"),
            planned,
            total - planned,
            total,
            imps.join(", ")
        );
        outputs.push(result.output);
    }
    let pred = outputs[2].as_dense()?;
    let y = sources["y"].as_labels()?;
    let correct = (0..pred.rows())
        .filter(|&i| pred.get(i, 0).signum() == y.get(i, 0))
        .count();
    println!(
        "training accuracy {:.3}",
        correct as f64 / pred.rows() as f64
    );
    Ok(())
}
