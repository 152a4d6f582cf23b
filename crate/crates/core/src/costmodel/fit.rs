//! Fitting per-implementation multipliers to measured runtimes.
//!
//! Each formula's unit leading constant is rescaled by a multiplier `m` so
//! that `m · cost(problem)` tracks observed seconds. [`fit_multiplier`] is the
//! ordinary least-squares solution `m = Σ cᵢtᵢ / Σ cᵢ²`; [`fit_descriptor`]
//! fits in log space, which weighs problems of very different sizes evenly,
//! and also picks the effective network bandwidth.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{choose_physical_among, ClusterResourceDescriptor, CostEstimate, ImplId};
use crate::dag::{ConvParams, DatasetStats, LogicalNode, PcaParams, SolverParams};
use crate::error::Result;
use crate::executor::evaluate;
use crate::ops::{DenseMatrix, ImageTensor, SparseRows};
use crate::profiler::{estimate_stats, median_seconds};
use crate::value::Value;

/// Unscaled cost of one measured run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub imp: ImplId,
    pub exec_units: f64,
    pub coord_units: f64,
    pub seconds: f64,
}

impl Observation {
    pub fn new(imp: ImplId, est: CostEstimate, seconds: f64) -> Self {
        Observation {
            imp,
            exec_units: est.exec_units,
            coord_units: est.coord_units,
            seconds,
        }
    }

    fn cost(&self, r: &ClusterResourceDescriptor) -> f64 {
        self.exec_units / r.cpu_throughput + self.coord_units / r.net_bandwidth
    }
}

/// Least-squares multiplier for one implementation's observations.
pub fn fit_multiplier(obs: &[Observation], r: &ClusterResourceDescriptor) -> Option<f64> {
    let (num, den) = obs.iter().fold((0.0, 0.0), |(n, d), o| {
        let c = o.cost(r);
        (n + c * o.seconds, d + c * c)
    });
    (den > 0.0 && num > 0.0).then(|| num / den)
}

fn by_impl(obs: &[Observation]) -> BTreeMap<ImplId, Vec<Observation>> {
    let mut map: BTreeMap<ImplId, Vec<Observation>> = BTreeMap::new();
    for o in obs {
        map.entry(o.imp).or_default().push(*o);
    }
    map
}

/// Least-squares multipliers for every implementation present in `obs`.
pub fn fit_multipliers(
    obs: &[Observation],
    r: &ClusterResourceDescriptor,
) -> BTreeMap<ImplId, f64> {
    by_impl(obs)
        .into_iter()
        .filter_map(|(imp, o)| fit_multiplier(&o, r).map(|m| (imp, m)))
        .collect()
}

/// Geometric-mean multipliers and the summed squared log residual.
fn log_fit(obs: &[Observation], r: &ClusterResourceDescriptor) -> (BTreeMap<ImplId, f64>, f64) {
    let mut multipliers = BTreeMap::new();
    let mut residual = 0.0;
    for (imp, o) in by_impl(obs) {
        let logs: Vec<f64> = o
            .iter()
            .filter(|x| x.seconds > 0.0 && x.cost(r) > 0.0)
            .map(|x| (x.seconds / x.cost(r)).ln())
            .collect();
        if logs.is_empty() {
            continue;
        }
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        residual += logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>();
        multipliers.insert(imp, mean.exp());
    }
    (multipliers, residual)
}

/// Fits multipliers in log space for each network bandwidth in `net_grid`
/// and keeps the bandwidth with the smallest residual.
pub fn fit_descriptor(
    obs: &[Observation],
    base: &ClusterResourceDescriptor,
    net_grid: &[f64],
) -> ClusterResourceDescriptor {
    let mut best: Option<(f64, ClusterResourceDescriptor)> = None;
    let grid: Vec<f64> = if net_grid.is_empty() {
        vec![base.net_bandwidth]
    } else {
        net_grid.to_vec()
    };
    for net in grid {
        let mut r = ClusterResourceDescriptor {
            net_bandwidth: net,
            ..base.clone()
        };
        let (m, residual) = log_fit(obs, &r);
        r.multipliers = m;
        if best.as_ref().is_none_or(|(res, _)| residual < *res) {
            best = Some((residual, r));
        }
    }
    best.expect("grid is non-empty").1
}

/// A small workload for one local implementation.
#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    pub node: LogicalNode,
    pub inputs: Vec<Value>,
}

impl CalibrationProblem {
    pub fn new(node: LogicalNode, imp: ImplId, inputs: Vec<Value>) -> Self {
        CalibrationProblem {
            node: node.with_implementation(imp),
            inputs,
        }
    }

    pub fn imp(&self) -> ImplId {
        self.node
            .implementation
            .expect("calibration problems name their implementation")
    }

    pub fn stats(&self) -> Result<Vec<DatasetStats>> {
        self.inputs
            .iter()
            .map(|v| estimate_stats(v, v.len() as u64))
            .collect()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

/// Random sparse rows with `nnz` entries each.
pub fn random_sparse(rng: &mut ChaCha8Rng, n: usize, d: usize, nnz: usize) -> SparseRows {
    let rows = (0..n)
        .map(|_| {
            (0..nnz)
                .map(|_| (rng.random_range(0..d), 1.0 + rng.random::<f64>()))
                .collect()
        })
        .collect();
    SparseRows::from_unsorted(d, rows).expect("indices drawn below d")
}

/// Labels `B = A·X + noise` for a random `X`.
pub fn regression_labels(rng: &mut ChaCha8Rng, a: &DenseMatrix, k: usize) -> DenseMatrix {
    let x = gaussian(rng, a.cols(), k).to_nalgebra();
    let noise = gaussian(rng, a.rows(), k).to_nalgebra() * 0.01;
    DenseMatrix::from_nalgebra(&(a.to_nalgebra() * x + noise))
}

/// Two problems per local implementation: one dense and one sparse problem
/// per solver, two sizes per PCA algorithm and convolution scheme.
pub fn default_problems(seed: u64) -> Vec<CalibrationProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let solver = LogicalNode::linear_solver(SolverParams {
        iters: 20,
        block_size: 25,
        history: 10,
    });
    for &(n, d, sparse) in &[(2000usize, 100usize, false), (4000, 400, true)] {
        let (features, dense) = if sparse {
            let s = random_sparse(&mut rng, n, d, d / 100);
            let dense = s.to_dense();
            (Value::Sparse(s), dense)
        } else {
            let a = gaussian(&mut rng, n, d);
            (Value::Dense(a.clone()), a)
        };
        let labels = Value::Labels(regression_labels(&mut rng, &dense, 2));
        for imp in [ImplId::LocalQr, ImplId::Lbfgs, ImplId::BlockSolve] {
            out.push(CalibrationProblem::new(
                solver.clone(),
                imp,
                vec![features.clone(), labels.clone()],
            ));
        }
    }
    for &(n, d, k) in &[(2000usize, 100usize, 10usize), (4000, 300, 20)] {
        let a = Value::Dense(gaussian(&mut rng, n, d));
        for imp in [ImplId::Svd, ImplId::Tsvd] {
            out.push(CalibrationProblem::new(
                LogicalNode::pca(PcaParams::new(k)),
                imp,
                vec![a.clone()],
            ));
        }
    }
    for &(side, size) in &[(32usize, 3usize), (64, 7)] {
        let images = Value::Images(
            (0..8)
                .map(|_| ImageTensor::random(side, 3, &mut rng))
                .collect(),
        );
        let node = LogicalNode::convolution(ConvParams {
            filters: 4,
            size,
            separable: true,
            seed,
        });
        for imp in ImplId::CONVOLUTION {
            out.push(CalibrationProblem::new(
                node.clone(),
                imp,
                vec![images.clone()],
            ));
        }
    }
    out
}

/// Runs each problem, fits one least-squares multiplier per implementation,
/// and gives distributed variants the multiplier of their local kernel.
pub fn calibrate_multipliers(
    r: &ClusterResourceDescriptor,
    problems: &[CalibrationProblem],
) -> Result<(BTreeMap<ImplId, f64>, Vec<Observation>)> {
    let unit = ClusterResourceDescriptor {
        multipliers: BTreeMap::new(),
        ..r.clone()
    };
    let mut obs = Vec::with_capacity(problems.len());
    for p in problems {
        let stats = p.stats()?;
        let imp = p.imp();
        let est = choose_physical_among(&p.node, &stats, &unit, &[imp])?
            .chosen()
            .estimate;
        let inputs: Vec<&Value> = p.inputs.iter().collect();
        let mut failure = None;
        let secs = median_seconds(3, || {
            if let Err(e) = evaluate(&p.node, &inputs) {
                failure = Some(e);
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        obs.push(Observation::new(imp, est, secs));
    }
    let mut m = fit_multipliers(&obs, &unit);
    for imp in ImplId::ALL {
        if !imp.is_local() {
            if let Some(&local) = m.get(&imp.local_kernel()) {
                m.entry(imp).or_insert(local);
            }
        }
    }
    Ok((m, obs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_exact_scale() {
        let r = ClusterResourceDescriptor::default();
        let obs: Vec<Observation> = [1e9, 3e9]
            .iter()
            .map(|&e| Observation {
                imp: ImplId::Svd,
                exec_units: e,
                coord_units: 0.0,
                seconds: 2.5 * e / 1e10,
            })
            .collect();
        let m = fit_multiplier(&obs, &r).unwrap();
        assert!((m - 2.5).abs() < 1e-12);
    }

    #[test]
    fn least_squares_matches_closed_form() {
        let r = ClusterResourceDescriptor {
            cpu_throughput: 1.0,
            ..Default::default()
        };
        let obs = [
            Observation {
                imp: ImplId::MatMul,
                exec_units: 1.0,
                coord_units: 0.0,
                seconds: 2.0,
            },
            Observation {
                imp: ImplId::MatMul,
                exec_units: 2.0,
                coord_units: 0.0,
                seconds: 3.0,
            },
        ];
        // (1·2 + 2·3) / (1 + 4)
        assert!((fit_multiplier(&obs, &r).unwrap() - 1.6).abs() < 1e-12);
        assert!(fit_multiplier(&[], &r).is_none());
    }

    #[test]
    fn descriptor_fit_prefers_consistent_bandwidth() {
        let truth = ClusterResourceDescriptor {
            cpu_throughput: 1e9,
            net_bandwidth: 1e7,
            ..Default::default()
        };
        let shapes = [(1e8, 1e5), (1e9, 1e7), (1e7, 1e8), (5e8, 5e6)];
        let obs: Vec<Observation> = shapes
            .iter()
            .map(|&(e, c)| Observation {
                imp: ImplId::DistSvd,
                exec_units: e,
                coord_units: c,
                seconds: 3.0 * (e / 1e9 + c / 1e7),
            })
            .collect();
        let base = ClusterResourceDescriptor {
            cpu_throughput: 1e9,
            ..Default::default()
        };
        let grid: Vec<f64> = (4..=10).map(|e| 10f64.powi(e)).collect();
        let r = fit_descriptor(&obs, &base, &grid);
        assert_eq!(r.net_bandwidth, truth.net_bandwidth);
        assert!((r.multiplier(ImplId::DistSvd) - 3.0).abs() < 1e-9);
    }
}
