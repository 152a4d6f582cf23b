//! Command-line toolchain: spec files, dataset loaders and the `explain`,
//! `run`, `bench-cache` and `calibrate` commands.
//!
//! Every command is a function returning its report as a string, so the
//! binary only parses flags and prints.

pub mod io;
pub mod spec;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::costmodel::fit::{calibrate_multipliers, default_problems};
use crate::costmodel::{calibrate, parse_quantity, CalibrationConfig, ClusterResourceDescriptor};
use crate::error::{Error, Result};
use crate::executor::{execute, ExecutorConfig, DEFAULT_ADMISSION_FRACTION};
use crate::optimizer::synthetic::{lru_admission_workload, random_dag, SyntheticConfig};
use crate::optimizer::{
    est_runtime, optimize, select_cache, simulate, CacheStrategy, OptimizationLevel,
    OptimizeOptions, OptimizedPipeline, RuntimeModelInput, SimPolicy, BRUTE_FORCE_LIMIT,
};
use crate::profiler::{PipelineProfile, ProfileConfig};
use spec::PipelineSpec;

/// Caching policy selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Policy {
    Greedy,
    Lru,
    Rule,
    None,
    Optimal,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::Greedy,
        Policy::Lru,
        Policy::Rule,
        Policy::None,
        Policy::Optimal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Greedy => "greedy",
            Policy::Lru => "lru",
            Policy::Rule => "rule",
            Policy::None => "none",
            Policy::Optimal => "optimal",
        }
    }

    /// Cache-set strategy, or `None` for LRU.
    pub fn strategy(self) -> Option<CacheStrategy> {
        match self {
            Policy::Greedy => Some(CacheStrategy::Greedy),
            Policy::Rule => Some(CacheStrategy::Rule),
            Policy::None => Some(CacheStrategy::None),
            Policy::Optimal => Some(CacheStrategy::Optimal),
            Policy::Lru => None,
        }
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                format!("unknown policy {s:?}; expected greedy, lru, rule, none or optimal")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Tsv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "text" => Ok(Format::Text),
            "tsv" => Ok(Format::Tsv),
            other => Err(format!("unknown format {other:?}; expected text or tsv")),
        }
    }
}

/// Parses a byte count with an optional binary `K`, `M` or `G` suffix.
pub fn parse_budget(s: &str) -> std::result::Result<u64, String> {
    match parse_quantity(s) {
        Some(v) if v >= 0.0 && v.is_finite() => Ok(v.round() as u64),
        _ => Err(format!("bad byte count {s:?}")),
    }
}

/// A budget given either in bytes or as a percentage of the total
/// intermediate output size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetSpec {
    Bytes(u64),
    Fraction(f64),
}

impl BudgetSpec {
    pub fn resolve(self, m: &RuntimeModelInput) -> u64 {
        match self {
            BudgetSpec::Bytes(b) => b,
            BudgetSpec::Fraction(f) => (f * m.total_intermediate_size()).floor() as u64,
        }
    }
}

impl FromStr for BudgetSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.strip_suffix('%') {
            Some(p) => p
                .parse::<f64>()
                .ok()
                .filter(|v| *v >= 0.0)
                .map(|v| BudgetSpec::Fraction(v / 100.0))
                .ok_or_else(|| format!("bad percentage {s:?}")),
            None => parse_budget(s).map(BudgetSpec::Bytes),
        }
    }
}

impl std::fmt::Display for BudgetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BudgetSpec::Bytes(b) => write!(f, "{b}"),
            BudgetSpec::Fraction(x) => write!(f, "{}%", x * 100.0),
        }
    }
}

/// Options shared by `explain` and `run`.
#[derive(Debug, Clone)]
pub struct CommonOptions {
    pub cluster: Option<PathBuf>,
    pub budget: u64,
    pub policy: Policy,
    pub seed: u64,
    pub format: Format,
    pub admission_fraction: f64,
    pub profile_out: Option<PathBuf>,
}

impl Default for CommonOptions {
    fn default() -> Self {
        CommonOptions {
            cluster: None,
            budget: 0,
            policy: Policy::Greedy,
            seed: 0,
            format: Format::Text,
            admission_fraction: DEFAULT_ADMISSION_FRACTION,
            profile_out: None,
        }
    }
}

/// A failure tagged with the pipeline stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("{stage}: {error}")]
pub struct CommandError {
    pub stage: &'static str,
    #[source]
    pub error: Error,
}

impl CommandError {
    /// Exit status: 2 for unreadable inputs, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self.error {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}

pub type CommandResult<T> = std::result::Result<T, CommandError>;

fn at<T>(stage: &'static str, r: Result<T>) -> CommandResult<T> {
    r.map_err(|error| CommandError { stage, error })
}

fn descriptor(spec: &PipelineSpec, cluster: Option<&Path>) -> Result<ClusterResourceDescriptor> {
    let base = match cluster {
        Some(p) => ClusterResourceDescriptor::load(p)?,
        None => ClusterResourceDescriptor::default(),
    };
    spec.cluster(base)
}

/// Loads, profiles and optimizes a spec.
pub fn plan(
    spec_path: &Path,
    opts: &CommonOptions,
) -> CommandResult<(
    PipelineSpec,
    crate::executor::DataSources,
    OptimizedPipeline,
)> {
    let spec = at("parse", PipelineSpec::load(spec_path))?;
    let r = at("cluster", descriptor(&spec, opts.cluster.as_deref()))?;
    let sources = at("load data", spec.load_data())?;
    let options = OptimizeOptions {
        level: OptimizationLevel::Full,
        budget: opts.budget,
        strategy: opts.policy.strategy().unwrap_or(CacheStrategy::None),
        profile: ProfileConfig {
            seed: opts.seed,
            ..ProfileConfig::default()
        },
    };
    let optimized = at("optimize", optimize(&spec.graph, &sources, &r, &options))?;
    if let Some(path) = &opts.profile_out {
        at("write profile", optimized.profile.save(path))?;
    }
    Ok((spec, sources, optimized))
}

/// Modeled runtime of `policy` on `m` at `budget`.
pub fn predicted_runtime(
    m: &RuntimeModelInput,
    budget: u64,
    policy: Policy,
    admission_fraction: f64,
) -> Result<f64> {
    Ok(match policy.strategy() {
        Some(s) => {
            let (cache, _) = select_cache(m, budget as f64, s)?;
            simulate(m, budget, &SimPolicy::Pinned(cache)).runtime
        }
        None => simulate(m, budget, &SimPolicy::Lru { admission_fraction }).runtime,
    })
}

/// `explain`: merges, physical choices, cache set and predicted runtime.
pub fn cmd_explain(spec_path: &Path, opts: &CommonOptions) -> CommandResult<String> {
    let (spec, _, o) = plan(spec_path, opts)?;
    let spec_name = |id| {
        spec.graph
            .node(id)
            .map_or_else(|_| id.to_string(), |n| n.name.clone())
    };
    let predicted = at(
        "simulate",
        predicted_runtime(&o.model, o.budget, opts.policy, opts.admission_fraction),
    )?;
    let name = |id| {
        o.model
            .node(id)
            .map_or_else(|| id.to_string(), |n| n.name.clone())
    };
    let uncached = est_runtime(&o.model, &Default::default());
    let mut out = String::new();
    match opts.format {
        Format::Text => {
            writeln!(out, "== common sub-expressions ==").unwrap();
            if o.cse.is_empty() {
                writeln!(out, "none").unwrap();
            }
            for &(kept, removed) in &o.cse.merged {
                writeln!(
                    out,
                    "merged {} into {}",
                    spec_name(removed),
                    spec_name(kept)
                )
                .unwrap();
            }
            writeln!(out, "\n== physical operators ==").unwrap();
            if o.choices.is_empty() {
                writeln!(out, "none").unwrap();
            }
            for c in &o.choices {
                writeln!(out, "{}: {} (cost {:.4e} s)", name(c.node), c.imp, c.cost).unwrap();
                for cand in &c.candidates {
                    let note = cand
                        .reason
                        .as_deref()
                        .map_or_else(String::new, |r| format!("  infeasible: {r}"));
                    writeln!(out, "    {:<10} {:.4e} s{note}", cand.imp.name(), cand.cost).unwrap();
                }
            }
            writeln!(
                out,
                "\n== cache set (budget {} bytes, policy {}) ==",
                o.budget,
                opts.policy.name()
            )
            .unwrap();
            if opts.policy == Policy::Lru {
                writeln!(
                    out,
                    "lru with admission fraction {}",
                    opts.admission_fraction
                )
                .unwrap();
            } else if o.cache.is_empty() {
                writeln!(out, "none").unwrap();
            } else {
                let savings: std::collections::BTreeMap<_, _> =
                    o.steps.iter().map(|s| (s.node, s.saving())).collect();
                for id in o.cache.ids() {
                    let size = o.model.node(id).map_or(0.0, |n| n.size);
                    match savings.get(&id) {
                        Some(s) => {
                            writeln!(out, "{}  {size} bytes  saves {s:.4e} s", name(id)).unwrap()
                        }
                        None => writeln!(out, "{}  {size} bytes", name(id)).unwrap(),
                    }
                }
            }
            writeln!(out, "\n== predicted runtime ==").unwrap();
            writeln!(out, "without caching: {uncached:.6e} s").unwrap();
            writeln!(out, "with {}: {predicted:.6e} s", opts.policy.name()).unwrap();
        }
        Format::Tsv => {
            writeln!(out, "section\tnode\tfield\tvalue").unwrap();
            for &(kept, removed) in &o.cse.merged {
                writeln!(
                    out,
                    "cse\t{}\tmerged_into\t{}",
                    spec_name(removed),
                    spec_name(kept)
                )
                .unwrap();
            }
            for c in &o.choices {
                writeln!(out, "choice\t{}\tchosen\t{}", name(c.node), c.imp).unwrap();
                for cand in &c.candidates {
                    let cost = if cand.feasible {
                        format!("{:e}", cand.cost)
                    } else {
                        "infeasible".into()
                    };
                    writeln!(out, "candidate\t{}\t{}\t{cost}", name(c.node), cand.imp).unwrap();
                }
            }
            let savings: std::collections::BTreeMap<_, _> =
                o.steps.iter().map(|s| (s.node, s.saving())).collect();
            for id in o.cache.ids() {
                let size = o.model.node(id).map_or(0.0, |n| n.size);
                writeln!(out, "cache\t{}\tsize\t{size}", name(id)).unwrap();
                if let Some(s) = savings.get(&id) {
                    writeln!(out, "cache\t{}\tsaving\t{s:e}", name(id)).unwrap();
                }
            }
            writeln!(out, "runtime\t-\tuncached\t{uncached:e}").unwrap();
            writeln!(out, "runtime\t-\t{}\t{predicted:e}", opts.policy.name()).unwrap();
        }
    }
    Ok(out)
}

/// Writes `text` to `path`, tagging failures with `stage`.
pub fn write_text(stage: &'static str, path: &Path, text: &str) -> CommandResult<()> {
    at(
        stage,
        std::fs::write(path, text).map_err(|e| Error::io(path, e)),
    )
}

/// What `run` wrote.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output: PathBuf,
    pub trace: PathBuf,
    pub predicted_seconds: f64,
    pub measured_seconds: f64,
}

/// `run`: profile, optimize and execute, writing the sink output and trace.
pub fn cmd_run(
    spec_path: &Path,
    opts: &CommonOptions,
    output: &Path,
    trace: &Path,
) -> CommandResult<RunSummary> {
    let (_, sources, o) = plan(spec_path, opts)?;
    let predicted = at(
        "simulate",
        predicted_runtime(&o.model, o.budget, opts.policy, opts.admission_fraction),
    )?;
    let config = match opts.policy {
        Policy::Lru => ExecutorConfig {
            admission_fraction: opts.admission_fraction,
            ..ExecutorConfig::lru(o.budget)
        },
        _ => ExecutorConfig {
            admission_fraction: opts.admission_fraction,
            ..o.executor_config()
        },
    };
    let result = at("execute", execute(&o.graph, &sources, &config))?;
    write_text("write output", output, &io::render_value(&result.output))?;
    write_text("write trace", trace, &result.trace.to_text())?;
    Ok(RunSummary {
        output: output.to_path_buf(),
        trace: trace.to_path_buf(),
        predicted_seconds: predicted,
        measured_seconds: result.trace.total_seconds,
    })
}

/// Where `bench-cache` takes its workloads from.
#[derive(Debug, Clone)]
pub enum Workload {
    /// Seeded random DAGs.
    Synthetic(SyntheticConfig),
    /// Reused outputs crowded out by large single-use intermediates.
    Admission,
    Profile(PathBuf),
    Spec(PathBuf),
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub workload: Workload,
    pub budgets: Vec<BudgetSpec>,
    pub policies: Vec<Policy>,
    pub trials: usize,
    pub seed: u64,
    pub admission_fraction: f64,
    pub cluster: Option<PathBuf>,
    /// Also execute each (policy, budget) pair; spec workloads only.
    pub measure: bool,
    pub format: Format,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            workload: Workload::Synthetic(SyntheticConfig::default()),
            budgets: vec![
                BudgetSpec::Fraction(0.25),
                BudgetSpec::Fraction(0.5),
                BudgetSpec::Fraction(1.0),
            ],
            policies: vec![Policy::Greedy, Policy::Lru, Policy::Rule, Policy::None],
            trials: 20,
            seed: 0,
            admission_fraction: DEFAULT_ADMISSION_FRACTION,
            cluster: None,
            measure: false,
            format: Format::Tsv,
        }
    }
}

/// One `bench-cache` row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub instance: usize,
    pub budget_label: String,
    pub budget: u64,
    /// Simulated runtime per policy, in column order.
    pub simulated: Vec<f64>,
    /// Measured seconds per policy when executed.
    pub measured: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub policies: Vec<Policy>,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn column(&self, p: Policy) -> Option<usize> {
        self.policies.iter().position(|&q| q == p)
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.policies.iter().map(|p| p.name()).collect();
        let measured = self.rows.first().is_some_and(|r| r.measured.is_some());
        let mut header = vec!["instance".to_string(), "budget".into(), "bytes".into()];
        header.extend(names.iter().map(|n| n.to_string()));
        if measured {
            header.extend(names.iter().map(|n| format!("{n}_measured")));
        }
        let sep = if format == Format::Tsv { "\t" } else { "  " };
        writeln!(out, "{}", header.join(sep)).unwrap();
        for r in &self.rows {
            let mut cells = vec![
                r.instance.to_string(),
                r.budget_label.clone(),
                r.budget.to_string(),
            ];
            cells.extend(r.simulated.iter().map(|v| format!("{v:.6e}")));
            if let Some(m) = &r.measured {
                cells.extend(m.iter().map(|v| format!("{v:.6e}")));
            }
            writeln!(out, "{}", cells.join(sep)).unwrap();
        }
        out
    }
}

/// `bench-cache`: simulated runtime of each policy at each budget.
pub fn cmd_bench_cache(opts: &BenchOptions) -> CommandResult<BenchTable> {
    if opts.budgets.is_empty() {
        return Err(CommandError {
            stage: "bench-cache",
            error: Error::Invalid("budget list is empty".into()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut instances: Vec<RuntimeModelInput> = Vec::new();
    let mut executable = None;
    match &opts.workload {
        Workload::Synthetic(cfg) => {
            for _ in 0..opts.trials.max(1) {
                instances.push(random_dag(&mut rng, cfg));
            }
        }
        Workload::Admission => instances.push(lru_admission_workload()),
        Workload::Profile(p) => {
            let profile = at("read profile", PipelineProfile::load(p))?;
            instances.push(at("read profile", profile.to_model())?);
        }
        Workload::Spec(p) => {
            let common = CommonOptions {
                cluster: opts.cluster.clone(),
                seed: opts.seed,
                ..Default::default()
            };
            let (_, sources, o) = plan(p, &common)?;
            instances.push(o.model.clone());
            executable = Some((sources, o));
        }
    }
    let mut policies = opts.policies.clone();
    if instances.iter().all(|m| m.len() <= BRUTE_FORCE_LIMIT)
        && !policies.contains(&Policy::Optimal)
    {
        policies.push(Policy::Optimal);
    }
    if instances.iter().any(|m| m.len() > BRUTE_FORCE_LIMIT) {
        policies.retain(|&p| p != Policy::Optimal);
    }
    let mut rows = Vec::new();
    for (i, m) in instances.iter().enumerate() {
        for &b in &opts.budgets {
            let budget = b.resolve(m);
            let simulated = policies
                .iter()
                .map(|&p| predicted_runtime(m, budget, p, opts.admission_fraction))
                .collect::<Result<Vec<f64>>>();
            let simulated = at("simulate", simulated)?;
            let measured = match (&executable, opts.measure) {
                (Some((sources, o)), true) => {
                    let mut secs = Vec::new();
                    for &p in &policies {
                        let config = match p.strategy() {
                            Some(s) => {
                                let (cache, _) = at("simulate", select_cache(m, budget as f64, s))?;
                                ExecutorConfig {
                                    fallback: None,
                                    ..ExecutorConfig::pinned(budget, cache.ids())
                                }
                            }
                            None => ExecutorConfig {
                                admission_fraction: opts.admission_fraction,
                                ..ExecutorConfig::lru(budget)
                            },
                        };
                        secs.push(
                            at("execute", execute(&o.graph, sources, &config))?
                                .trace
                                .total_seconds,
                        );
                    }
                    Some(secs)
                }
                _ => None,
            };
            rows.push(BenchRow {
                instance: i,
                budget_label: b.to_string(),
                budget,
                simulated,
                measured,
            });
        }
    }
    Ok(BenchTable { policies, rows })
}

/// `calibrate`: measures the machine, optionally fits per-implementation
/// multipliers, and returns the descriptor as text.
pub fn cmd_calibrate(config: Option<&Path>, fit: bool, seed: u64) -> CommandResult<String> {
    let base = match config {
        Some(p) => at("read config", ClusterResourceDescriptor::load(p))?,
        None => ClusterResourceDescriptor::default(),
    };
    let cfg = CalibrationConfig {
        workers: Some(base.workers),
        net_bandwidth: Some(base.net_bandwidth),
        mem_per_node: Some(base.mem_per_node),
        multipliers: base.multipliers.clone(),
        ..Default::default()
    };
    let mut r = calibrate(&cfg);
    if fit {
        let (m, _) = at(
            "fit multipliers",
            calibrate_multipliers(&r, &default_problems(seed)),
        )?;
        r.multipliers = m;
    }
    Ok(r.to_text())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_values() {
        assert_eq!("lru".parse::<Policy>().unwrap(), Policy::Lru);
        assert!("fifo".parse::<Policy>().is_err());
        assert_eq!(parse_budget("2K").unwrap(), 2048);
        assert_eq!(parse_budget("1G").unwrap(), 1 << 30);
        assert!(parse_budget("-1").is_err());
        assert_eq!(
            "25%".parse::<BudgetSpec>().unwrap(),
            BudgetSpec::Fraction(0.25)
        );
        assert_eq!(
            "3M".parse::<BudgetSpec>().unwrap(),
            BudgetSpec::Bytes(3 << 20)
        );
    }

    #[test]
    fn bench_on_synthetic_dags() {
        let opts = BenchOptions {
            trials: 5,
            ..Default::default()
        };
        let t = cmd_bench_cache(&opts).unwrap();
        assert_eq!(t.rows.len(), 15);
        let (g, o) = (
            t.column(Policy::Greedy).unwrap(),
            t.column(Policy::Optimal).unwrap(),
        );
        for r in t.rows.iter().filter(|r| r.budget_label == "100%") {
            assert!((r.simulated[g] - r.simulated[o]).abs() <= 1e-9 * r.simulated[o]);
        }
        assert!(t
            .render(Format::Tsv)
            .starts_with("instance\tbudget\tbytes\tgreedy"));
    }

    #[test]
    fn empty_budget_list_is_an_error() {
        let opts = BenchOptions {
            budgets: vec![],
            ..Default::default()
        };
        assert!(cmd_bench_cache(&opts).is_err());
    }
}
