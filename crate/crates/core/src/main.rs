use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pipeopt::cli::{
    cmd_bench_cache, cmd_calibrate, cmd_explain, cmd_run, parse_budget, write_text, BenchOptions,
    BudgetSpec, CommonOptions, Format, Policy, Workload,
};
use pipeopt::executor::DEFAULT_ADMISSION_FRACTION;
use pipeopt::optimizer::synthetic::SyntheticConfig;

#[derive(Parser)]
#[command(
    name = "pipeopt",
    version,
    about = "Optimize and run machine-learning pipeline DAGs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print merges, physical choices, cache set and predicted runtime.
    Explain {
        spec: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Profile, optimize and execute a pipeline.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        /// Sink output file.
        #[arg(long, short, default_value = "output.txt")]
        output: PathBuf,
        /// Execution trace file.
        #[arg(long, default_value = "trace.tsv")]
        trace: PathBuf,
    },
    /// Compare caching policies across memory budgets.
    BenchCache(BenchArgs),
    /// Measure this machine and print a cluster descriptor.
    Calibrate {
        /// Descriptor whose workers, network and memory settings are kept.
        #[arg(long)]
        cluster: Option<PathBuf>,
        /// Also fit per-implementation multipliers.
        #[arg(long)]
        fit: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the descriptor here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    cluster: Option<PathBuf>,
    /// Cache budget in bytes; K, M and G suffixes are binary.
    #[arg(long, default_value = "0", value_parser = parse_budget)]
    budget: u64,
    #[arg(long, default_value = "greedy")]
    policy: Policy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "text")]
    format: Format,
    #[arg(long, default_value_t = DEFAULT_ADMISSION_FRACTION)]
    admission_fraction: f64,
    /// Save the profile for replay in bench-cache.
    #[arg(long)]
    profile_out: Option<PathBuf>,
}

impl From<CommonArgs> for CommonOptions {
    fn from(a: CommonArgs) -> Self {
        CommonOptions {
            cluster: a.cluster,
            budget: a.budget,
            policy: a.policy,
            seed: a.seed,
            format: a.format,
            admission_fraction: a.admission_fraction,
            profile_out: a.profile_out,
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Pipeline spec to profile.
    #[arg(long, conflicts_with_all = ["profile_in", "admission_workload"])]
    spec: Option<PathBuf>,
    /// Saved profile to replay.
    #[arg(long, conflicts_with = "admission_workload")]
    profile_in: Option<PathBuf>,
    /// Use the built-in workload where single-use intermediates crowd out reused ones.
    #[arg(long)]
    admission_workload: bool,
    /// Comma-separated budgets: bytes with optional K/M/G, or percentages of total intermediate size.
    #[arg(long, value_delimiter = ',', default_value = "10%,25%,50%,100%")]
    budgets: Vec<BudgetSpec>,
    #[arg(long, value_delimiter = ',', default_value = "greedy,lru,rule,none")]
    policies: Vec<Policy>,
    /// Synthetic DAGs to generate.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    #[arg(long, default_value_t = 0.4)]
    reuse_prob: f64,
    #[arg(long, default_value_t = 0.3)]
    two_input_prob: f64,
    #[arg(long, default_value_t = 0.25)]
    estimator_prob: f64,
    /// Iteration counts drawn for estimator nodes.
    #[arg(long, value_delimiter = ',', default_value = "1,5,20")]
    weights: Vec<u32>,
    #[arg(long, default_value_t = 0.0)]
    time_mu: f64,
    #[arg(long, default_value_t = 1.0)]
    time_sigma: f64,
    #[arg(long, default_value_t = 1e6f64.ln())]
    size_mu: f64,
    #[arg(long, default_value_t = 1.0)]
    size_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ADMISSION_FRACTION)]
    admission_fraction: f64,
    #[arg(long)]
    cluster: Option<PathBuf>,
    /// Also execute the spec under every policy and budget.
    #[arg(long, requires = "spec")]
    measure: bool,
    #[arg(long, default_value = "tsv")]
    format: Format,
}

impl From<BenchArgs> for BenchOptions {
    fn from(a: BenchArgs) -> Self {
        let workload = if let Some(p) = a.spec {
            Workload::Spec(p)
        } else if let Some(p) = a.profile_in {
            Workload::Profile(p)
        } else if a.admission_workload {
            Workload::Admission
        } else {
            Workload::Synthetic(SyntheticConfig {
                nodes: a.nodes,
                reuse_prob: a.reuse_prob,
                two_input_prob: a.two_input_prob,
                estimator_prob: a.estimator_prob,
                estimator_weights: a.weights,
                time_mu: a.time_mu,
                time_sigma: a.time_sigma,
                size_mu: a.size_mu,
                size_sigma: a.size_sigma,
            })
        };
        BenchOptions {
            workload,
            budgets: a.budgets,
            policies: a.policies,
            trials: a.trials,
            seed: a.seed,
            admission_fraction: a.admission_fraction,
            cluster: a.cluster,
            measure: a.measure,
            format: a.format,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::Explain { spec, common } => {
            cmd_explain(&spec, &common.into()).map(|s| print!("{s}"))
        }
        Command::Run {
            spec,
            common,
            output,
            trace,
        } => cmd_run(&spec, &common.into(), &output, &trace).map(|s| {
            println!("wrote {} and {}", s.output.display(), s.trace.display());
            println!(
                "predicted {:.6e} s, measured {:.6e} s",
                s.predicted_seconds, s.measured_seconds
            );
        }),
        Command::BenchCache(args) => {
            let opts: BenchOptions = args.into();
            cmd_bench_cache(&opts).map(|t| print!("{}", t.render(opts.format)))
        }
        Command::Calibrate {
            cluster,
            fit,
            seed,
            output,
        } => cmd_calibrate(cluster.as_deref(), fit, seed).and_then(|text| match output {
            Some(p) => write_text("write descriptor", &p, &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
