use super::{ClusterResourceDescriptor, CostEstimate, ImplId};
use crate::dag::DatasetStats;
use crate::error::{Error, Result};

pub const BYTES_PER_SCALAR: f64 = 8.0;

fn finish(
    imp: ImplId,
    exec: f64,
    coord: f64,
    mem_scalars: f64,
    r: &ClusterResourceDescriptor,
) -> CostEstimate {
    CostEstimate {
        exec_units: exec,
        coord_units: coord,
        mem_per_node: mem_scalars * BYTES_PER_SCALAR,
    }
    .scaled(r.multiplier(imp))
}

/// Linear solver costs.
///
/// | impl       | compute              | network (bytes)   | memory (scalars) |
/// |------------|----------------------|-------------------|------------------|
/// | LocalQR    | `n·d·(d+k)`          | `n·(d+k)`         | `d·(n+k)`        |
/// | DistQR     | `n·d·(d+k)/w`        | `d·(d+k)`         | `n·d/w + d²`     |
/// | LBFGS      | `i·n·s·k/w`          | `i·d·k`           | `n·s/w + d·k`    |
/// | BlockSolve | `i·n·d·(b+k)/w`      | `i·d·(b+k)`       | `n·b/w + d·k`    |
///
/// Network counts are scalars, converted to bytes at 8 bytes each.
pub fn solver_cost(
    imp: ImplId,
    stats: &DatasetStats,
    classes: usize,
    iters: u32,
    block: usize,
    r: &ClusterResourceDescriptor,
) -> Result<CostEstimate> {
    let (n, d, k, s) = (stats.n as f64, stats.d as f64, classes as f64, stats.s);
    if stats.n == 0 || stats.d == 0 || classes == 0 {
        return Err(Error::InvalidDimensions(format!(
            "solver cost needs n, d, k ≥ 1 (n = {}, d = {}, k = {classes})",
            stats.n, stats.d
        )));
    }
    if !(s > 0.0 && s <= d) {
        return Err(Error::InvalidDimensions(format!(
            "sparsity s = {s} must be in (0, d]"
        )));
    }
    let w = r.workers as f64;
    let i = iters as f64;
    let bps = BYTES_PER_SCALAR;
    let iterative = matches!(imp, ImplId::Lbfgs | ImplId::BlockSolve);
    if iterative && iters == 0 {
        return Err(Error::InvalidDimensions(
            "iterative solvers need i ≥ 1".into(),
        ));
    }
    Ok(match imp {
        ImplId::LocalQr => finish(imp, n * d * (d + k), n * (d + k) * bps, d * (n + k), r),
        ImplId::DistQr => finish(
            imp,
            n * d * (d + k) / w,
            d * (d + k) * bps,
            n * d / w + d * d,
            r,
        ),
        ImplId::Lbfgs => finish(
            imp,
            i * n * s * k / w,
            i * d * k * bps,
            n * s / w + d * k,
            r,
        ),
        ImplId::BlockSolve => {
            if block == 0 || block > stats.d {
                return Err(Error::InvalidDimensions(format!(
                    "block size {block} not in 1..={}",
                    stats.d
                )));
            }
            let b = block as f64;
            finish(
                imp,
                i * n * d * (b + k) / w,
                i * d * (b + k) * bps,
                n * b / w + d * k,
                r,
            )
        }
        other => {
            return Err(Error::Invalid(format!(
                "{other} is not a solver implementation"
            )))
        }
    })
}

/// PCA costs: exact `n·d²`, truncated `n·k²`; distributed variants divide
/// compute by `w` and exchange `d²` (exact) or `d·k` (truncated) scalars.
pub fn pca_cost(
    imp: ImplId,
    stats: &DatasetStats,
    k: usize,
    r: &ClusterResourceDescriptor,
) -> Result<CostEstimate> {
    if k == 0 || k > stats.d {
        return Err(Error::InvalidDimensions(format!(
            "PCA needs 1 ≤ k ≤ d, got k = {k}, d = {}",
            stats.d
        )));
    }
    let (n, d, kf) = (stats.n as f64, stats.d as f64, k as f64);
    let w = r.workers as f64;
    let bps = BYTES_PER_SCALAR;
    Ok(match imp {
        ImplId::Svd => finish(imp, n * d * d, 0.0, n * d, r),
        ImplId::Tsvd => finish(imp, n * kf * kf, 0.0, n * d, r),
        ImplId::DistSvd => finish(imp, n * d * d / w, d * d * bps, n * d / w, r),
        ImplId::DistTsvd => finish(imp, n * kf * kf / w, d * kf * bps, n * d / w, r),
        other => {
            return Err(Error::Invalid(format!(
                "{other} is not a PCA implementation"
            )))
        }
    })
}

/// Shape of a convolution workload: `images` images of `side × side ×
/// channels`, convolved with `filters` filters of `size × size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvShape {
    pub side: usize,
    pub channels: usize,
    pub filters: usize,
    pub size: usize,
    pub separable: bool,
    pub images: u64,
}

/// Convolution costs per image, times the image count:
/// separable `d·b·k·m² + b·k³`, matrix-matrix `d·b·k²·m²`, FFT
/// `6·d·b·n²·log₂n + 4·d·b·n²` with `m = n − k + 1`. Single-node, so no
/// coordination.
pub fn conv_cost(
    imp: ImplId,
    shape: &ConvShape,
    r: &ClusterResourceDescriptor,
) -> Result<CostEstimate> {
    let ConvShape {
        side,
        channels,
        filters,
        size,
        separable,
        images,
    } = *shape;
    if size == 0 || size >= side {
        return Err(Error::InvalidDimensions(format!(
            "filter size {size} must be in 1..{side}"
        )));
    }
    let (n, d, b, k) = (side as f64, channels as f64, filters as f64, size as f64);
    let m = n - k + 1.0;
    let per_image = match imp {
        ImplId::Separable => {
            if !separable {
                return Err(Error::NotSeparable);
            }
            d * b * k * m * m + b * k * k * k
        }
        ImplId::MatMul => d * b * k * k * m * m,
        ImplId::Fft => 6.0 * d * b * n * n * n.log2() + 4.0 * d * b * n * n,
        other => {
            return Err(Error::Invalid(format!(
                "{other} is not a convolution implementation"
            )))
        }
    };
    Ok(finish(
        imp,
        per_image * images as f64,
        0.0,
        d * b * n * n,
        r,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::combine;
    use proptest::prelude::*;

    fn unit() -> ClusterResourceDescriptor {
        ClusterResourceDescriptor::default()
    }

    #[test]
    fn local_qr_unit_constants() {
        let est = solver_cost(
            ImplId::LocalQr,
            &DatasetStats::dense(1000, 10),
            2,
            1,
            1,
            &unit(),
        )
        .unwrap();
        assert_eq!(est.exec_units, 120_000.0);
        assert_eq!(est.coord_units, 1000.0 * 12.0 * 8.0);
        assert_eq!(est.mem_per_node, 10.0 * 1002.0 * 8.0);
    }

    #[test]
    fn lbfgs_linear_in_sparsity() {
        let dense = solver_cost(
            ImplId::Lbfgs,
            &DatasetStats::dense(5000, 1000),
            2,
            20,
            1,
            &unit(),
        )
        .unwrap();
        let sparse = solver_cost(
            ImplId::Lbfgs,
            &DatasetStats::sparse(5000, 1000, 10.0),
            2,
            20,
            1,
            &unit(),
        )
        .unwrap();
        assert_eq!(dense.exec_units / sparse.exec_units, 100.0);
    }

    #[test]
    fn lbfgs_beats_exact_on_sparse_text_sweep() {
        let r = ClusterResourceDescriptor {
            workers: 16,
            ..unit()
        };
        let mut d = 1024;
        while d <= 16384 {
            let stats = DatasetStats::sparse(1_000_000, d, 0.001 * d as f64);
            let lbfgs = combine(
                &solver_cost(ImplId::Lbfgs, &stats, 2, 20, 1, &r).unwrap(),
                &r,
            );
            let exact = combine(
                &solver_cost(ImplId::LocalQr, &stats, 2, 20, 1, &r).unwrap(),
                &r,
            );
            assert!(lbfgs < exact, "d = {d}");
            d *= 2;
        }
    }

    #[test]
    fn dist_qr_scales_with_workers() {
        let stats = DatasetStats::dense(10_000, 100);
        let one = solver_cost(ImplId::DistQr, &stats, 3, 1, 1, &unit()).unwrap();
        let r16 = ClusterResourceDescriptor {
            workers: 16,
            ..unit()
        };
        let sixteen = solver_cost(ImplId::DistQr, &stats, 3, 1, 1, &r16).unwrap();
        assert_eq!(sixteen.exec_units * 16.0, one.exec_units);
    }

    #[test]
    fn solver_dimension_errors() {
        let r = unit();
        assert!(solver_cost(ImplId::LocalQr, &DatasetStats::dense(0, 10), 2, 1, 1, &r).is_err());
        assert!(solver_cost(
            ImplId::BlockSolve,
            &DatasetStats::dense(10, 10),
            2,
            1,
            11,
            &r
        )
        .is_err());
        assert!(solver_cost(ImplId::Lbfgs, &DatasetStats::dense(10, 10), 2, 0, 1, &r).is_err());
        assert!(solver_cost(ImplId::Svd, &DatasetStats::dense(10, 10), 2, 1, 1, &r).is_err());
    }

    #[test]
    fn pca_formulas() {
        let r = unit();
        let stats = DatasetStats::dense(10_000, 256);
        let svd = pca_cost(ImplId::Svd, &stats, 16, &r).unwrap();
        assert_eq!(svd.exec_units, 1e4 * 256.0 * 256.0);
        let tsvd = pca_cost(ImplId::Tsvd, &stats, 256, &r).unwrap();
        assert_eq!(tsvd.exec_units, svd.exec_units);
        assert!(pca_cost(ImplId::Svd, &stats, 257, &r).is_err());
    }

    fn shape(k: usize) -> ConvShape {
        ConvShape {
            side: 256,
            channels: 3,
            filters: 50,
            size: k,
            separable: true,
            images: 1,
        }
    }

    #[test]
    fn fft_cost_independent_of_k() {
        let r = unit();
        let a = conv_cost(ImplId::Fft, &shape(3), &r).unwrap();
        let b = conv_cost(ImplId::Fft, &shape(40), &r).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matmul_over_separable_is_k() {
        let r = unit();
        let k = 5;
        let sh = ConvShape {
            side: 100_000,
            images: 1,
            ..shape(k)
        };
        let mm = conv_cost(ImplId::MatMul, &sh, &r).unwrap().exec_units;
        let sep = conv_cost(ImplId::Separable, &sh, &r).unwrap().exec_units;
        assert!((mm / sep - k as f64).abs() < 1e-6);
    }

    #[test]
    fn conv_crossover_from_matmul_to_fft() {
        // Root of d·b·k²·(n−k+1)² = 6·d·b·n²·log₂n + 4·d·b·n² for n = 256,
        // found by bisection on the continuous relaxation.
        let (n, d, b) = (256.0f64, 3.0, 50.0);
        let f = |k: f64| {
            d * b * k * k * (n - k + 1.0).powi(2)
                - (6.0 * d * b * n * n * n.log2() + 4.0 * d * b * n * n)
        };
        let (mut lo, mut hi) = (1.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let crossover = lo;
        assert!(crossover > 7.0 && crossover < 8.0, "k* = {crossover}");
        let r = unit();
        for k in 2..40 {
            let sh = ConvShape {
                separable: false,
                ..shape(k)
            };
            let mm = conv_cost(ImplId::MatMul, &sh, &r).unwrap().exec_units;
            let fft = conv_cost(ImplId::Fft, &sh, &r).unwrap().exec_units;
            assert_eq!(mm < fft, (k as f64) < crossover, "k = {k}");
        }
    }

    #[test]
    fn separable_requires_flag() {
        let sh = ConvShape {
            separable: false,
            ..shape(3)
        };
        assert!(matches!(
            conv_cost(ImplId::Separable, &sh, &unit()),
            Err(Error::NotSeparable)
        ));
        assert!(conv_cost(
            ImplId::MatMul,
            &ConvShape {
                size: 256,
                ..shape(3)
            },
            &unit()
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn solver_costs_monotone(n in 1u64..100_000, d in 2usize..2000, k in 1usize..20,
                                 i in 1u32..50, frac in 0.01f64..1.0, which in 0usize..4) {
            let imp = ImplId::SOLVERS[which];
            let r = unit();
            let b = (d / 2).max(1);
            let s = (frac * d as f64).max(1.0);
            let base = solver_cost(imp, &DatasetStats::sparse(n, d, s), k, i, b, &r).unwrap();
            let bigger = [
                solver_cost(imp, &DatasetStats::sparse(n + 1, d, s), k, i, b, &r).unwrap(),
                solver_cost(imp, &DatasetStats::sparse(n, d + 1, s), k, i, b, &r).unwrap(),
                solver_cost(imp, &DatasetStats::sparse(n, d, s), k, i + 1, b, &r).unwrap(),
                solver_cost(imp, &DatasetStats::sparse(n, d, s), k, i, b + 1, &r).unwrap(),
            ];
            for e in bigger {
                prop_assert!(e.exec_units >= base.exec_units);
                prop_assert!(e.coord_units >= base.coord_units);
                prop_assert!(e.mem_per_node >= base.mem_per_node);
            }
        }

        #[test]
        fn pca_costs_monotone(n in 1u64..100_000, d in 2usize..4000, kf in 0.0f64..1.0, which in 0usize..4) {
            let imp = ImplId::PCA[which];
            let r = unit();
            let k = ((kf * d as f64) as usize).clamp(1, d);
            let base = pca_cost(imp, &DatasetStats::dense(n, d), k, &r).unwrap();
            for e in [pca_cost(imp, &DatasetStats::dense(n + 1, d), k, &r).unwrap(),
                      pca_cost(imp, &DatasetStats::dense(n, d + 1), k, &r).unwrap()] {
                prop_assert!(e.exec_units >= base.exec_units);
                prop_assert!(e.coord_units >= base.coord_units);
                prop_assert!(e.mem_per_node >= base.mem_per_node);
            }
        }

        #[test]
        fn conv_costs_monotone_in_n_and_b(n in 4usize..512, kf in 0.0f64..1.0, b in 1usize..64, which in 0usize..3) {
            let imp = ImplId::CONVOLUTION[which];
            let r = unit();
            let k = ((kf * (n - 1) as f64) as usize).clamp(1, n - 1);
            let sh = ConvShape { side: n, channels: 3, filters: b, size: k, separable: true, images: 1 };
            let base = conv_cost(imp, &sh, &r).unwrap().exec_units;
            let wider = ConvShape { side: n + 1, ..sh };
            let more = ConvShape { filters: b + 1, ..sh };
            prop_assert!(conv_cost(imp, &wider, &r).unwrap().exec_units >= base);
            prop_assert!(conv_cost(imp, &more, &r).unwrap().exec_units >= base);
        }
    }
}
