//! Measures this machine, fits per-implementation multipliers on small
//! problems, and prints the resulting descriptor file.
//!
//! ```text
//! cargo run --release --example calibrate
//! ```

use pipeopt::costmodel::fit::{calibrate_multipliers, default_problems};
use pipeopt::costmodel::{calibrate, CalibrationConfig};

fn main() -> pipeopt::Result<()> {
    let mut r = calibrate(&CalibrationConfig::default());
    let (multipliers, observations) = calibrate_multipliers(&r, &default_problems(0))?;
    println!("{:<10} {:>10} {:>10}", "impl", "seconds", "model s");
    for o in &observations {
        let m = multipliers.get(&o.imp).copied().unwrap_or(1.0);
        let modeled = m * (o.exec_units / r.cpu_throughput + o.coord_units / r.net_bandwidth);
        println!("{:<10} {:>10.4} {:>10.4}", o.imp.name(), o.seconds, modeled);
    }
    r.multipliers = multipliers;
    println!("\n{}", r.to_text());
    Ok(())
}
