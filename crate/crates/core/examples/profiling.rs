//! Sample-based profiling of a chain of per-record maps, checked against a
//! full uncached run.
//!
//! ```text
//! cargo run --release --example profiling
//! ```

use pipeopt::costmodel::ClusterResourceDescriptor;
use pipeopt::dag::MapFunc;
use pipeopt::executor::{execute, ExecutorConfig};
use pipeopt::profiler::{profile_pipeline, ProfileConfig};
use pipeopt::workloads::{dense_source, map_chain};

fn main() -> pipeopt::Result<()> {
    let stages = [
        (MapFunc::Tanh, 20),
        (MapFunc::Sin, 40),
        (MapFunc::Abs, 10),
        (MapFunc::Scale(0.99), 60),
    ];
    let graph = map_chain(64, &stages)?;
    let sources = dense_source(40_960, 64, 9);
    let r = ClusterResourceDescriptor::default();
    let config = ProfileConfig {
        sample_sizes: [1024, 2048],
        ..Default::default()
    };
    let profiled = profile_pipeline(&graph, &sources, &r, &config)?;
    let trace = execute(
        &graph,
        &sources,
        &ExecutorConfig {
            threads: None,
            ..ExecutorConfig::lru(0)
        },
    )?
    .trace;

    println!(
        "{:<6} {:>12} {:>12} {:>8} {:>12} {:>12}",
        "node", "predicted s", "measured s", "error", "pred bytes", "bytes"
    );
    for (id, p) in &profiled.profile.nodes {
        let t = &trace.nodes[id];
        let err = (p.t * p.weight as f64 - t.seconds).abs() / t.seconds;
        println!(
            "{:<6} {:>12.5} {:>12.5} {:>7.1}% {:>12} {:>12}",
            p.name,
            p.t,
            t.seconds,
            100.0 * err,
            p.size,
            t.output_bytes
        );
    }
    println!("\n{}", profiled.profile.to_text());
    Ok(())
}
