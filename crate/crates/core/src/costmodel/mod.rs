//! Cost model split into an operator-specific part (compute and
//! coordination units as functions of input statistics and worker count) and
//! a cluster-specific part that weighs the two.
//!
//! `cost = R_exec · exec + R_coord · coord`, with `R_exec = 1 / cpuThroughput`
//! and `R_coord = 1 / netBandwidth`, so a combined cost reads as seconds.
//! Every formula uses unit leading constants; a per-implementation
//! multiplier (default 1) rescales both parts and is fitted from
//! measurements by [`fit`]. Memory is a feasibility constraint, never a cost.

pub mod fit;
mod formulas;
mod resources;
mod select;

use std::fmt;

pub use formulas::{conv_cost, pca_cost, solver_cost, ConvShape, BYTES_PER_SCALAR};
pub use resources::{calibrate, parse_quantity, CalibrationConfig, ClusterResourceDescriptor};
pub use select::{
    choose_physical, choose_physical_among, implementations, Candidate, PhysicalChoice,
};

/// Physical implementation tags. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ImplId {
    LocalQr,
    DistQr,
    Lbfgs,
    BlockSolve,
    Svd,
    Tsvd,
    DistSvd,
    DistTsvd,
    Separable,
    MatMul,
    Fft,
}

impl ImplId {
    pub const SOLVERS: [ImplId; 4] = [
        ImplId::LocalQr,
        ImplId::DistQr,
        ImplId::Lbfgs,
        ImplId::BlockSolve,
    ];
    pub const PCA: [ImplId; 4] = [ImplId::Svd, ImplId::Tsvd, ImplId::DistSvd, ImplId::DistTsvd];
    pub const CONVOLUTION: [ImplId; 3] = [ImplId::Separable, ImplId::MatMul, ImplId::Fft];
    pub const ALL: [ImplId; 11] = [
        ImplId::LocalQr,
        ImplId::DistQr,
        ImplId::Lbfgs,
        ImplId::BlockSolve,
        ImplId::Svd,
        ImplId::Tsvd,
        ImplId::DistSvd,
        ImplId::DistTsvd,
        ImplId::Separable,
        ImplId::MatMul,
        ImplId::Fft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImplId::LocalQr => "LocalQR",
            ImplId::DistQr => "DistQR",
            ImplId::Lbfgs => "LBFGS",
            ImplId::BlockSolve => "BlockSolve",
            ImplId::Svd => "SVD",
            ImplId::Tsvd => "TSVD",
            ImplId::DistSvd => "DistSVD",
            ImplId::DistTsvd => "DistTSVD",
            ImplId::Separable => "Separable",
            ImplId::MatMul => "MatMul",
            ImplId::Fft => "FFT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ImplId::ALL
            .into_iter()
            .find(|i| i.name().eq_ignore_ascii_case(s))
    }

    /// The kernel that runs this implementation on a single machine.
    /// Distributed variants are modeled, not performed.
    pub fn local_kernel(self) -> ImplId {
        match self {
            ImplId::DistQr => ImplId::LocalQr,
            ImplId::DistSvd => ImplId::Svd,
            ImplId::DistTsvd => ImplId::Tsvd,
            other => other,
        }
    }

    pub fn is_local(self) -> bool {
        self.local_kernel() == self
    }
}

impl fmt::Display for ImplId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Operator-specific cost: compute units on the critical path, bytes over
/// the most loaded link, and bytes of memory needed per node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostEstimate {
    pub exec_units: f64,
    pub coord_units: f64,
    pub mem_per_node: f64,
}

impl CostEstimate {
    pub fn scaled(self, multiplier: f64) -> Self {
        CostEstimate {
            exec_units: self.exec_units * multiplier,
            coord_units: self.coord_units * multiplier,
            mem_per_node: self.mem_per_node,
        }
    }
}

/// `R_exec · exec + R_coord · coord`.
pub fn combine(est: &CostEstimate, r: &ClusterResourceDescriptor) -> f64 {
    est.exec_units / r.cpu_throughput + est.coord_units / r.net_bandwidth
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_splits_compute_and_network() {
        let r = ClusterResourceDescriptor {
            cpu_throughput: 1e9,
            net_bandwidth: 1e9,
            ..Default::default()
        };
        let compute = CostEstimate {
            exec_units: 2e9,
            coord_units: 0.0,
            mem_per_node: 0.0,
        };
        assert_eq!(combine(&compute, &r), 2.0);
        let network = CostEstimate {
            exec_units: 0.0,
            coord_units: 1e9,
            mem_per_node: 0.0,
        };
        assert_eq!(combine(&network, &r), 1.0);
    }

    #[test]
    fn impl_names_round_trip() {
        for i in ImplId::ALL {
            assert_eq!(ImplId::parse(i.name()), Some(i));
        }
        assert!(ImplId::LocalQr < ImplId::DistQr);
        assert_eq!(ImplId::DistTsvd.local_kernel(), ImplId::Tsvd);
    }
}
