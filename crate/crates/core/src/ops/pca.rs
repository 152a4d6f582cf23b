//! Principal component analysis: exact (covariance eigendecomposition) and
//! randomized truncated SVD.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Fitted PCA transformer: `x ↦ (x − mean) · P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// d×k with orthonormal columns.
    pub components: DenseMatrix,
    pub mean: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.cols()
    }

    pub fn project(&self, data: &DenseMatrix) -> Result<DenseMatrix> {
        let d = self.components.rows();
        if data.cols() != d {
            return Err(Error::InvalidDimensions(format!(
                "PCA model expects {d} columns, got {}",
                data.cols()
            )));
        }
        let centered = centered(data, &self.mean);
        let out = centered * self.components.to_nalgebra();
        Ok(DenseMatrix::from_nalgebra(&out))
    }
}

fn column_means(a: &DenseMatrix) -> Vec<f64> {
    let mut mean = vec![0.0; a.cols()];
    for i in 0..a.rows() {
        for (m, v) in mean.iter_mut().zip(a.row(i)) {
            *m += v;
        }
    }
    let n = a.rows().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn centered(a: &DenseMatrix, mean: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j) - mean[j])
}

/// Exact PCA: top-k eigenvectors of the covariance of the column-centered data.
pub fn pca_svd(a: &DenseMatrix, k: usize) -> Result<PcaModel> {
    let (n, d) = (a.rows(), a.cols());
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidDimensions(format!(
            "k = {k} not in 1..={}",
            n.min(d)
        )));
    }
    let mean = column_means(a);
    let c = centered(a, &mean);
    let cov = c.tr_mul(&c);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .total_cmp(&eig.eigenvalues[x])
            .then(x.cmp(&y))
    });
    let mut p = DMatrix::zeros(d, k);
    for (col, &src) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        canonical_sign(&mut v);
        p.set_column(col, &v);
    }
    Ok(PcaModel {
        components: DenseMatrix::from_nalgebra(&p),
        mean,
    })
}

/// Flips `v` so that its largest-magnitude entry is positive.
fn canonical_sign(v: &mut nalgebra::DVector<f64>) {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        v.neg_mut();
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TsvdConfig {
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for TsvdConfig {
    fn default() -> Self {
        TsvdConfig {
            oversample: 10,
            power_iters: 2,
            seed: 0,
        }
    }
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Randomized range finder with power iterations, followed by an exact SVD
/// of the small projected matrix.
pub fn pca_tsvd(a: &DenseMatrix, k: usize, config: TsvdConfig) -> Result<PcaModel> {
    let (n, d) = (a.rows(), a.cols());
    let l = k + config.oversample;
    if k == 0 || l > n.min(d) {
        return Err(Error::InvalidDimensions(format!(
            "k + oversample = {l} must be in 1..={}",
            n.min(d)
        )));
    }
    let mean = column_means(a);
    let c = centered(a, &mean);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let omega = DMatrix::from_fn(d, l, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = orthonormal_basis(&c * omega);
    for _ in 0..config.power_iters {
        let z = orthonormal_basis(c.tr_mul(&q));
        q = orthonormal_basis(&c * z);
    }
    let small = q.tr_mul(&c);
    let svd = small.svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Invalid("SVD did not produce V".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| {
        svd.singular_values[y]
            .total_cmp(&svd.singular_values[x])
            .then(x.cmp(&y))
    });
    let mut p = DMatrix::zeros(d, k);
    for (col, &src) in order.iter().take(k).enumerate() {
        let mut v = vt.row(src).transpose();
        canonical_sign(&mut v);
        p.set_column(col, &v);
    }
    Ok(PcaModel {
        components: DenseMatrix::from_nalgebra(&p),
        mean,
    })
}

/// Sine of the largest principal angle between the column spans of two
/// matrices with orthonormal columns.
pub fn max_principal_angle_sin(p: &DenseMatrix, q: &DenseMatrix) -> f64 {
    let p = p.to_nalgebra();
    let q = q.to_nalgebra();
    let resid = &q - &p * p.tr_mul(&q);
    resid.singular_values().max()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    /// Cyclic Jacobi eigenvalue iteration for a symmetric matrix, independent
    /// of the library eigensolver.
    fn jacobi_eigenvalues(mut m: Vec<Vec<f64>>) -> Vec<f64> {
        let n = m.len();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[i][j] * m[i][j])
                .sum();
            if off < 1e-22 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if m[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for r in 0..n {
                        let (a, b) = (m[r][p], m[r][q]);
                        m[r][p] = c * a - s * b;
                        m[r][q] = s * a + c * b;
                    }
                    for r in 0..n {
                        let (a, b) = (m[p][r], m[q][r]);
                        m[p][r] = c * a - s * b;
                        m[q][r] = s * a + c * b;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    fn covariance(a: &DenseMatrix) -> Vec<Vec<f64>> {
        let mean = column_means(a);
        let d = a.cols();
        let mut c = vec![vec![0.0; d]; d];
        for r in 0..a.rows() {
            for i in 0..d {
                for j in 0..d {
                    c[i][j] += (a.get(r, i) - mean[i]) * (a.get(r, j) - mean[j]);
                }
            }
        }
        c
    }

    fn captured_variance(a: &DenseMatrix, m: &PcaModel) -> f64 {
        let proj = m.project(a).unwrap();
        proj.values().iter().map(|v| v * v).sum()
    }

    fn orthonormality_error(p: &DenseMatrix) -> f64 {
        let p = p.to_nalgebra();
        (p.tr_mul(&p) - DMatrix::identity(p.ncols(), p.ncols()))
            .abs()
            .max()
    }

    /// n×d matrix with singular values 2^{-j} and zero column means.
    pub(crate) fn geometric_spectrum(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut u = gaussian(n, d, seed).to_nalgebra();
        for mut col in u.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let u = u.qr().q();
        let v = gaussian(d, d, seed + 1000).to_nalgebra().qr().q();
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |j, _| {
            2f64.powi(-(j as i32))
        }));
        DenseMatrix::from_nalgebra(&(u * s * v.transpose()))
    }

    #[test]
    fn single_nonzero_column_gives_axis() {
        let a = DenseMatrix::from_fn(20, 4, |i, j| if j == 2 { i as f64 } else { 0.0 });
        let m = pca_svd(&a, 1).unwrap();
        let p = &m.components;
        assert!((p.get(2, 0).abs() - 1.0).abs() < 1e-12);
        assert!(p.get(0, 0).abs() < 1e-12);
    }

    #[test]
    fn components_are_orthonormal() {
        let a = gaussian(60, 12, 1);
        let m = pca_svd(&a, 5).unwrap();
        assert!(orthonormality_error(&m.components) < 1e-10);
        let t = pca_tsvd(&a, 2, TsvdConfig::default()).unwrap();
        assert!(orthonormality_error(&t.components) < 1e-10);
    }

    #[test]
    fn captured_variance_matches_jacobi_oracle() {
        let a = gaussian(80, 9, 2);
        let k = 4;
        let m = pca_svd(&a, k).unwrap();
        let ev = jacobi_eigenvalues(covariance(&a));
        let expected: f64 = ev.iter().take(k).sum();
        let got = captured_variance(&a, &m);
        assert!(
            (got - expected).abs() <= 1e-9 * expected,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn projecting_twice_equals_once() {
        let a = gaussian(40, 6, 3);
        let m = pca_svd(&a, 3).unwrap();
        let p = m.components.to_nalgebra();
        let x = centered(&a, &m.mean);
        let once = &x * &p * p.transpose();
        let twice = &once * &p * p.transpose();
        assert!((once - twice).abs().max() < 1e-10);
    }

    #[test]
    fn k_out_of_range() {
        let a = gaussian(10, 5, 4);
        assert!(pca_svd(&a, 0).is_err());
        assert!(pca_svd(&a, 6).is_err());
        assert!(pca_tsvd(&a, 1, TsvdConfig::default()).is_err());
    }

    #[test]
    fn tsvd_recovers_exact_low_rank() {
        let (n, d, k) = (100, 30, 3);
        let mut l = gaussian(n, k, 5).to_nalgebra();
        for mut col in l.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let r = gaussian(k, d, 6).to_nalgebra();
        let a = DenseMatrix::from_nalgebra(&(l * &r));
        let m = pca_tsvd(&a, k, TsvdConfig::default()).unwrap();
        let row_space = DenseMatrix::from_nalgebra(&r.transpose().qr().q());
        assert!(max_principal_angle_sin(&row_space, &m.components) <= 1e-10);
    }

    #[test]
    fn tsvd_is_deterministic_per_seed() {
        let a = gaussian(50, 20, 7);
        let cfg = TsvdConfig {
            seed: 42,
            ..TsvdConfig::default()
        };
        assert_eq!(pca_tsvd(&a, 3, cfg).unwrap(), pca_tsvd(&a, 3, cfg).unwrap());
    }

    #[test]
    fn tsvd_matches_exact_on_geometric_spectrum() {
        let a = geometric_spectrum(500, 100, 8);
        let exact = pca_svd(&a, 10).unwrap();
        let approx = pca_tsvd(
            &a,
            10,
            TsvdConfig {
                seed: 8,
                ..TsvdConfig::default()
            },
        )
        .unwrap();
        let angle = max_principal_angle_sin(&exact.components, &approx.components).asin();
        assert!(angle <= 1e-6, "angle {angle:e}");
    }
}
