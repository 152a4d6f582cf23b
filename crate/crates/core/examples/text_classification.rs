//! Bigram sentiment classifier over the bundled review corpus, loaded from
//! its spec file, optimized and executed.
//!
//! ```text
//! cargo run --release --example text_classification [budget]
//! ```

use pipeopt::cli::parse_budget;
use pipeopt::cli::spec::PipelineSpec;
use pipeopt::costmodel::ClusterResourceDescriptor;
use pipeopt::executor::execute;
use pipeopt::optimizer::{optimize, OptimizeOptions};
use pipeopt::workloads::data_dir;

fn main() -> pipeopt::Result<()> {
    let budget = std::env::args()
        .nth(1)
        .map_or(Ok(64 << 20), |s| parse_budget(&s))
        .unwrap_or(64 << 20);
    let spec = PipelineSpec::load(&data_dir().join("text_classification.pipe"))?;
    let r = spec.cluster(ClusterResourceDescriptor::default())?;
    let sources = spec.load_data()?;

    let o = optimize(
        &spec.graph,
        &sources,
        &r,
        &OptimizeOptions {
            budget,
            ..Default::default()
        },
    )?;
    println!(
        "{} nodes declared, {} after merging",
        spec.graph.len(),
        o.graph.len()
    );
    for (kept, removed) in &o.cse.merged {
        println!(
            "  {} merged into {}",
            spec.graph.node(*removed)?.name,
            spec.graph.node(*kept)?.name
        );
    }
    for c in &o.choices {
        println!("{}: {}", o.graph.node(c.node)?.name, c.imp);
    }
    let cached: Vec<&str> = o
        .cache
        .ids()
        .map(|id| o.graph.node(id).map(|n| n.name.as_str()))
        .collect::<Result<_, _>>()?;
    println!("cache set at {budget} bytes: {}", cached.join(", "));

    let result = execute(&o.graph, &sources, &o.executor_config())?;
    let pred = result.output.as_dense()?;
    let y = sources["y"].as_labels()?;
    let correct = (0..pred.rows())
        .filter(|&i| pred.get(i, 0).signum() == y.get(i, 0))
        .count();
    println!(
        "training accuracy {:.3}; predicted {:.3}s, measured {:.3}s",
        correct as f64 / pred.rows() as f64,
        o.predicted_runtime,
        result.trace.total_seconds
    );
    Ok(())
}
