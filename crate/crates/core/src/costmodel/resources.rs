use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;

use super::ImplId;
use crate::error::{Error, Result};

/// Machine or cluster capabilities used to weigh compute against network.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResourceDescriptor {
    pub workers: usize,
    /// Floating-point operations per second per node.
    pub cpu_throughput: f64,
    /// Bytes per second per node.
    pub mem_bandwidth: f64,
    /// Bytes per second per node.
    pub disk_bandwidth: f64,
    /// Bytes per second per link.
    pub net_bandwidth: f64,
    /// Bytes of memory per node.
    pub mem_per_node: f64,
    /// Per-implementation cost multipliers; missing entries mean 1.
    pub multipliers: BTreeMap<ImplId, f64>,
}

impl Default for ClusterResourceDescriptor {
    /// A single desktop-class machine.
    fn default() -> Self {
        ClusterResourceDescriptor {
            workers: 1,
            cpu_throughput: 1e10,
            mem_bandwidth: 1e10,
            disk_bandwidth: 5e8,
            net_bandwidth: 1.25e9,
            mem_per_node: 4.0 * (1u64 << 30) as f64,
            multipliers: BTreeMap::new(),
        }
    }
}

/// Parses a number with an optional binary `K`, `M` or `G` suffix.
pub fn parse_quantity(s: &str) -> Option<f64> {
    let s = s.trim();
    let (num, scale) = match s.char_indices().last()? {
        (i, 'K' | 'k') => (&s[..i], 1024.0),
        (i, 'M' | 'm') => (&s[..i], 1024.0 * 1024.0),
        (i, 'G' | 'g') => (&s[..i], 1024.0 * 1024.0 * 1024.0),
        _ => (s, 1.0),
    };
    num.trim().parse::<f64>().ok().map(|v| v * scale)
}

impl ClusterResourceDescriptor {
    pub fn multiplier(&self, imp: ImplId) -> f64 {
        self.multipliers.get(&imp).copied().unwrap_or(1.0)
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("workers", self.workers as f64),
            ("cpuThroughput", self.cpu_throughput),
            ("memBandwidth", self.mem_bandwidth),
            ("diskBandwidth", self.disk_bandwidth),
            ("netBandwidth", self.net_bandwidth),
            ("memPerNode", self.mem_per_node),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "cluster descriptor: {name} must be > 0, got {v}"
                )));
            }
        }
        for (imp, m) in &self.multipliers {
            if !(*m > 0.0 && m.is_finite()) {
                return Err(Error::Invalid(format!(
                    "cluster descriptor: multiplier for {imp} must be > 0"
                )));
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_overrides(&mut self, text: &str, origin: &str, first_line: usize) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = first_line + i;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(
                    origin,
                    lineno,
                    format!("expected key = value, got {line:?}"),
                )
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|msg| Error::parse(origin, lineno, msg))?;
        }
        self.validate()
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let num = parse_quantity(value).ok_or_else(|| format!("{key}: not a number: {value:?}"))?;
        if let Some(name) = key.strip_prefix("multiplier.") {
            let imp =
                ImplId::parse(name).ok_or_else(|| format!("unknown implementation {name:?}"))?;
            self.multipliers.insert(imp, num);
            return Ok(());
        }
        match key {
            "workers" => {
                if num < 1.0 || num.fract() != 0.0 {
                    return Err(format!("workers must be a positive integer, got {value}"));
                }
                self.workers = num as usize;
            }
            "cpuThroughput" => self.cpu_throughput = num,
            "memBandwidth" => self.mem_bandwidth = num,
            "diskBandwidth" => self.disk_bandwidth = num,
            "netBandwidth" => self.net_bandwidth = num,
            "memPerNode" => self.mem_per_node = num,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut r = ClusterResourceDescriptor::default();
        r.apply_overrides(text, origin, 1)?;
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "cpuThroughput = {:e}", self.cpu_throughput);
        let _ = writeln!(s, "memBandwidth = {:e}", self.mem_bandwidth);
        let _ = writeln!(s, "diskBandwidth = {:e}", self.disk_bandwidth);
        let _ = writeln!(s, "netBandwidth = {:e}", self.net_bandwidth);
        let _ = writeln!(s, "memPerNode = {:e}", self.mem_per_node);
        for (imp, m) in &self.multipliers {
            let _ = writeln!(s, "multiplier.{imp} = {m:e}");
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Inputs to [`calibrate`]. Values that are `Some` are taken as given;
/// the rest are measured.
#[derive(Debug, Clone, Default)]
pub struct CalibrationConfig {
    pub workers: Option<usize>,
    pub cpu_throughput: Option<f64>,
    pub mem_bandwidth: Option<f64>,
    pub disk_bandwidth: Option<f64>,
    pub net_bandwidth: Option<f64>,
    pub mem_per_node: Option<f64>,
    pub multipliers: BTreeMap<ImplId, f64>,
    /// Side of the square matrices multiplied to measure throughput.
    pub gemm_size: Option<usize>,
    /// Bytes copied or written by the bandwidth kernels.
    pub transfer_bytes: Option<usize>,
}

impl CalibrationConfig {
    /// A configuration that measures nothing and returns `r` unchanged.
    pub fn fixed(r: &ClusterResourceDescriptor) -> Self {
        CalibrationConfig {
            workers: Some(r.workers),
            cpu_throughput: Some(r.cpu_throughput),
            mem_bandwidth: Some(r.mem_bandwidth),
            disk_bandwidth: Some(r.disk_bandwidth),
            net_bandwidth: Some(r.net_bandwidth),
            mem_per_node: Some(r.mem_per_node),
            multipliers: r.multipliers.clone(),
            ..Default::default()
        }
    }
}

fn best_of<F: FnMut() -> std::io::Result<f64>>(reps: usize, mut f: F) -> std::io::Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        best = best.min(f()?);
    }
    Ok(best)
}

/// Dense multiply-adds per second.
fn measure_gemm(size: usize) -> std::io::Result<f64> {
    let a = DMatrix::<f64>::from_fn(size, size, |i, j| ((i * 31 + j * 17) % 13) as f64 * 0.1);
    let b = DMatrix::<f64>::from_fn(size, size, |i, j| ((i * 7 + j * 11) % 5) as f64 * 0.2);
    let secs = best_of(3, || {
        let t = Instant::now();
        let c = &a * &b;
        std::hint::black_box(c);
        Ok(t.elapsed().as_secs_f64())
    })?;
    Ok((size * size * size) as f64 / secs.max(1e-9))
}

fn measure_memcpy(bytes: usize) -> std::io::Result<f64> {
    let src = vec![1u8; bytes];
    let mut dst = vec![0u8; bytes];
    let secs = best_of(3, || {
        let t = Instant::now();
        dst.copy_from_slice(std::hint::black_box(&src));
        std::hint::black_box(&dst);
        Ok(t.elapsed().as_secs_f64())
    })?;
    Ok(bytes as f64 / secs.max(1e-9))
}

/// Write plus read-back bandwidth through the filesystem.
fn measure_disk(bytes: usize) -> std::io::Result<f64> {
    let data = vec![7u8; bytes];
    let mut back = Vec::with_capacity(bytes);
    let secs = best_of(2, || {
        let mut file = tempfile::tempfile()?;
        let t = Instant::now();
        file.write_all(&data)?;
        file.sync_all()?;
        use std::io::Seek;
        file.rewind()?;
        back.clear();
        file.read_to_end(&mut back)?;
        Ok(t.elapsed().as_secs_f64())
    })?;
    if back.len() != bytes {
        return Err(std::io::Error::other("short read during disk benchmark"));
    }
    Ok(2.0 * bytes as f64 / secs.max(1e-9))
}

fn measured_or(what: &str, result: std::io::Result<f64>, fallback: f64) -> f64 {
    match result {
        Ok(v) if v.is_finite() && v > 0.0 => v,
        Ok(v) => {
            log::warn!("{what} benchmark returned {v}; using {fallback:e}");
            fallback
        }
        Err(e) => {
            log::warn!("{what} benchmark failed ({e}); using {fallback:e}");
            fallback
        }
    }
}

/// Builds a descriptor from configuration and short microbenchmarks. Network
/// bandwidth and worker count are configuration only.
pub fn calibrate(config: &CalibrationConfig) -> ClusterResourceDescriptor {
    let defaults = ClusterResourceDescriptor::default();
    let transfer = config.transfer_bytes.unwrap_or(64 << 20);
    let cpu_throughput = config.cpu_throughput.unwrap_or_else(|| {
        measured_or(
            "gemm",
            measure_gemm(config.gemm_size.unwrap_or(256)),
            defaults.cpu_throughput,
        )
    });
    let mem_bandwidth = config
        .mem_bandwidth
        .unwrap_or_else(|| measured_or("memcpy", measure_memcpy(transfer), defaults.mem_bandwidth));
    let disk_bandwidth = config
        .disk_bandwidth
        .unwrap_or_else(|| measured_or("disk", measure_disk(transfer), defaults.disk_bandwidth));
    ClusterResourceDescriptor {
        workers: config.workers.unwrap_or(defaults.workers),
        cpu_throughput,
        mem_bandwidth,
        disk_bandwidth,
        net_bandwidth: config.net_bandwidth.unwrap_or(defaults.net_bandwidth),
        mem_per_node: config.mem_per_node.unwrap_or(defaults.mem_per_node),
        multipliers: config.multipliers.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_only_calibration_is_identity() {
        let mut r = ClusterResourceDescriptor {
            workers: 8,
            cpu_throughput: 3e9,
            ..Default::default()
        };
        r.multipliers.insert(ImplId::Lbfgs, 2.5);
        assert_eq!(calibrate(&CalibrationConfig::fixed(&r)), r);
    }

    #[test]
    fn calibrated_throughput_is_stable() {
        let cfg = CalibrationConfig {
            gemm_size: Some(128),
            transfer_bytes: Some(1 << 20),
            ..Default::default()
        };
        let a = calibrate(&cfg);
        let b = calibrate(&cfg);
        assert!(a.cpu_throughput > 0.0 && b.cpu_throughput > 0.0);
        let ratio = a.cpu_throughput / b.cpu_throughput;
        assert!(ratio > 0.1 && ratio < 10.0, "ratio {ratio}");
    }

    #[test]
    fn text_round_trip() {
        let mut r = ClusterResourceDescriptor {
            workers: 16,
            mem_per_node: 1e9,
            ..Default::default()
        };
        r.multipliers.insert(ImplId::BlockSolve, 0.75);
        let back = ClusterResourceDescriptor::parse(&r.to_text(), "mem").unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn parse_suffixes_and_errors() {
        let r = ClusterResourceDescriptor::parse(
            "# desk\nmemPerNode = 2G\nmultiplier.lbfgs = 3\n",
            "x",
        )
        .unwrap();
        assert_eq!(r.mem_per_node, 2.0 * 1024.0 * 1024.0 * 1024.0);
        assert_eq!(r.multiplier(ImplId::Lbfgs), 3.0);
        assert_eq!(r.multiplier(ImplId::LocalQr), 1.0);
        let err =
            ClusterResourceDescriptor::parse("workers = 2\nbogus = 1\n", "c.txt").unwrap_err();
        assert_eq!(err.to_string(), "c.txt:2: unknown key \"bogus\"");
        assert!(ClusterResourceDescriptor::parse("workers = 0\n", "c").is_err());
        assert!(ClusterResourceDescriptor::parse("netBandwidth = -1\n", "c").is_err());
        assert_eq!(parse_quantity("10K"), Some(10240.0));
        assert_eq!(parse_quantity("1.5e3"), Some(1500.0));
        assert_eq!(parse_quantity("x"), None);
    }
}
