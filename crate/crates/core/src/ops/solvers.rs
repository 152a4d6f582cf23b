//! Least-squares solvers: `min_X ½‖AX − B‖²_F`.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::matrix::{DenseMatrix, SparseRows};
use crate::error::{Error, Result};

/// Borrowed design matrix, dense or sparse.
#[derive(Debug, Clone, Copy)]
pub enum Features<'a> {
    Dense(&'a DenseMatrix),
    Sparse(&'a SparseRows),
}

impl Features<'_> {
    pub fn rows(&self) -> usize {
        match self {
            Features::Dense(m) => m.rows(),
            Features::Sparse(s) => s.len(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Features::Dense(m) => m.cols(),
            Features::Sparse(s) => s.dim(),
        }
    }
}

/// A fitted linear map `X` (d×k).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: DenseMatrix,
    pub intercept: Option<Vec<f64>>,
}

impl LinearModel {
    pub fn predict(&self, features: Features<'_>) -> Result<DenseMatrix> {
        let d = self.weights.rows();
        if features.cols() != d {
            return Err(Error::InvalidDimensions(format!(
                "model expects {d} features, got {}",
                features.cols()
            )));
        }
        let design = Design::new(features);
        let x = self.weights.to_nalgebra();
        let mut out = design.mul(&x, &mut 0);
        if let Some(b) = &self.intercept {
            for (c, &v) in b.iter().enumerate() {
                out.column_mut(c).add_scalar_mut(v);
            }
        }
        Ok(DenseMatrix::from_nalgebra(&out))
    }
}

/// Per-run counters for the iterative solvers.
#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// Multiply-adds that touch entries of the design matrix.
    pub design_madds: u64,
    /// Objective after each accepted step, starting with the initial value.
    pub objective_trace: Vec<f64>,
}

enum Design<'a> {
    Dense(DMatrix<f64>),
    Sparse(&'a SparseRows),
}

impl<'a> Design<'a> {
    fn new(f: Features<'a>) -> Self {
        match f {
            Features::Dense(m) => Design::Dense(m.to_nalgebra()),
            Features::Sparse(s) => Design::Sparse(s),
        }
    }

    fn nnz(&self) -> u64 {
        match self {
            Design::Dense(m) => (m.nrows() * m.ncols()) as u64,
            Design::Sparse(s) => s.nnz() as u64,
        }
    }

    /// `A · X`.
    fn mul(&self, x: &DMatrix<f64>, madds: &mut u64) -> DMatrix<f64> {
        *madds += self.nnz() * x.ncols() as u64;
        match self {
            Design::Dense(a) => a * x,
            Design::Sparse(s) => {
                let k = x.ncols();
                let mut out = DMatrix::zeros(s.len(), k);
                for (i, row) in s.iter_rows().enumerate() {
                    for c in 0..k {
                        let mut acc = 0.0;
                        for &(j, v) in row {
                            acc += v * x[(j, c)];
                        }
                        out[(i, c)] = acc;
                    }
                }
                out
            }
        }
    }

    /// `Aᵀ · R`.
    fn tr_mul(&self, r: &DMatrix<f64>, madds: &mut u64) -> DMatrix<f64> {
        *madds += self.nnz() * r.ncols() as u64;
        match self {
            Design::Dense(a) => a.tr_mul(r),
            Design::Sparse(s) => {
                let k = r.ncols();
                let mut out = DMatrix::zeros(s.dim(), k);
                for (i, row) in s.iter_rows().enumerate() {
                    for c in 0..k {
                        let ric = r[(i, c)];
                        if ric == 0.0 {
                            continue;
                        }
                        for &(j, v) in row {
                            out[(j, c)] += v * ric;
                        }
                    }
                }
                out
            }
        }
    }
}

fn check_labels(features: Features<'_>, b: &DenseMatrix) -> Result<()> {
    if features.rows() != b.rows() {
        return Err(Error::InvalidDimensions(format!(
            "features have {} rows but labels have {}",
            features.rows(),
            b.rows()
        )));
    }
    if features.rows() == 0 || features.cols() == 0 || b.cols() == 0 {
        return Err(Error::InvalidDimensions(
            "empty least-squares problem".into(),
        ));
    }
    Ok(())
}

/// `½‖AX − B‖²_F`.
pub fn objective(features: Features<'_>, model: &LinearModel, b: &DenseMatrix) -> Result<f64> {
    let pred = model.predict(features)?;
    Ok(0.5
        * pred
            .values()
            .iter()
            .zip(b.values())
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>())
}

/// Exact least squares via Householder QR.
pub fn solve_exact_qr(a: &DenseMatrix, b: &DenseMatrix) -> Result<LinearModel> {
    check_labels(Features::Dense(a), b)?;
    let (n, d) = (a.rows(), a.cols());
    if n < d {
        return Err(Error::InvalidDimensions(format!(
            "exact solver needs n ≥ d, got {n}×{d}"
        )));
    }
    let qr = a.to_nalgebra().qr();
    let r = qr.r();
    let max_diag = (0..d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(i) = (0..d).find(|&i| r[(i, i)].abs() <= 1e-12 * max_diag || max_diag == 0.0) {
        return Err(Error::Singular(format!("R[{i},{i}] = {:e}", r[(i, i)])));
    }
    let mut qtb = b.to_nalgebra();
    qr.q_tr_mul(&mut qtb);
    let top = qtb.rows(0, d).into_owned();
    let x = r
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    Ok(LinearModel {
        weights: DenseMatrix::from_nalgebra(&x),
        intercept: None,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub iters: usize,
    pub history: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            iters: 100,
            history: 10,
        }
    }
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 20;

fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// L-BFGS with backtracking Armijo line search, started at `X = 0`.
///
/// `A·p` is formed once per iteration, so trial points along the search
/// direction cost `O(nk)` and each iteration touches the stored entries of
/// `A` exactly twice.
pub fn solve_lbfgs(
    features: Features<'_>,
    b: &DenseMatrix,
    config: LbfgsConfig,
) -> Result<(LinearModel, SolveReport)> {
    check_labels(features, b)?;
    if config.iters == 0 || config.history == 0 {
        return Err(Error::Invalid("iters and history must be ≥ 1".into()));
    }
    let design = Design::new(features);
    let (d, k) = (features.cols(), b.cols());
    let target = b.to_nalgebra();
    let mut report = SolveReport::default();

    let mut x = DMatrix::<f64>::zeros(d, k);
    let mut resid = -&target;
    let mut f = 0.5 * resid.norm_squared();
    let mut g = design.tr_mul(&resid, &mut report.design_madds);
    report.objective_trace.push(f);
    let g0 = g.norm();
    let mut history: VecDeque<(DMatrix<f64>, DMatrix<f64>, f64)> = VecDeque::new();

    for it in 0..config.iters {
        let gnorm = g.norm();
        if gnorm == 0.0 || gnorm <= 1e-13 * g0 {
            break;
        }
        let mut p = two_loop(&g, &history);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            history.clear();
            p = -&g;
            slope = -gnorm * gnorm;
        }
        let ap = design.mul(&p, &mut report.design_madds);
        let mut alpha = if history.is_empty() && it == 0 {
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let trial = &resid + &ap * alpha;
            let ft = 0.5 * trial.norm_squared();
            if !ft.is_finite() {
                return Err(Error::Diverged(format!(
                    "objective became {ft} at iteration {it}"
                )));
            }
            if ft <= f + ARMIJO_C * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((new_resid, new_f)) = accepted else {
            break;
        };
        let s = &p * alpha;
        x += &s;
        resid = new_resid;
        f = new_f;
        let new_g = design.tr_mul(&resid, &mut report.design_madds);
        let y = &new_g - &g;
        g = new_g;
        let sy = dot(&s, &y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if history.len() == config.history {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        report.iterations = it + 1;
        report.objective_trace.push(f);
    }
    Ok((
        LinearModel {
            weights: DenseMatrix::from_nalgebra(&x),
            intercept: None,
        },
        report,
    ))
}

/// Two-loop recursion: returns `-H·g`.
fn two_loop(
    g: &DMatrix<f64>,
    history: &VecDeque<(DMatrix<f64>, DMatrix<f64>, f64)>,
) -> DMatrix<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q -= y * a;
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        q *= dot(s, y) / y.norm_squared();
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * dot(y, &q);
        q += s * (a - beta);
    }
    -q
}

/// Block Gauss-Seidel: each update solves the least-squares subproblem of one
/// block of columns against the current residual exactly.
pub fn solve_block(
    features: Features<'_>,
    b: &DenseMatrix,
    block_size: usize,
    passes: usize,
) -> Result<(LinearModel, SolveReport)> {
    check_labels(features, b)?;
    let d = features.cols();
    if block_size == 0 || block_size > d {
        return Err(Error::InvalidDimensions(format!(
            "block size {block_size} not in 1..={d}"
        )));
    }
    if passes == 0 {
        return Err(Error::Invalid("passes must be ≥ 1".into()));
    }
    let a = match features {
        Features::Dense(m) => m.to_nalgebra(),
        Features::Sparse(s) => s.to_dense().to_nalgebra(),
    };
    let n = a.nrows();
    let k = b.cols();
    let mut x = DMatrix::<f64>::zeros(d, k);
    let mut resid = b.to_nalgebra();
    let mut report = SolveReport::default();
    report.objective_trace.push(0.5 * resid.norm_squared());

    for _ in 0..passes {
        let mut start = 0;
        while start < d {
            let width = block_size.min(d - start);
            let cols = a.columns(start, width);
            let mut gram = cols.tr_mul(&cols);
            let rhs = cols.tr_mul(&resid);
            report.design_madds += (n * width * (width + 2 * k)) as u64;
            let max_diag = (0..width).map(|i| gram[(i, i)]).fold(0.0, f64::max);
            let well_posed = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
                let l = c.l_dirty();
                (0..width).all(|i| l[(i, i)] * l[(i, i)] > 1e-12 * max_diag)
            };
            let chol = match gram.clone().cholesky().filter(well_posed) {
                Some(c) => c,
                None => {
                    let ridge = 1e-8 * gram.trace().max(f64::MIN_POSITIVE);
                    log::warn!(
                        "singular block Gram matrix at column {start}, adding ridge {ridge:e}"
                    );
                    for i in 0..width {
                        gram[(i, i)] += ridge;
                    }
                    gram.cholesky()
                        .ok_or_else(|| Error::Singular(format!("block at column {start}")))?
                }
            };
            let delta = chol.solve(&rhs);
            resid -= &cols * &delta;
            let mut xs = x.rows_mut(start, width);
            xs += &delta;
            start += width;
        }
        report.iterations += 1;
        report.objective_trace.push(0.5 * resid.norm_squared());
    }
    Ok((
        LinearModel {
            weights: DenseMatrix::from_nalgebra(&x),
            intercept: None,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    /// Normal equations AᵀA X = AᵀB solved by Gaussian elimination with
    /// partial pivoting; independent of the QR path.
    fn normal_equations(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let (n, d, k) = (a.rows(), a.cols(), b.cols());
        let mut m = vec![vec![0.0; d + k]; d];
        for i in 0..d {
            for j in 0..d {
                m[i][j] = (0..n).map(|r| a.get(r, i) * a.get(r, j)).sum();
            }
            for c in 0..k {
                m[i][d + c] = (0..n).map(|r| a.get(r, i) * b.get(r, c)).sum();
            }
        }
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for r in 0..d {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..d + k {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        DenseMatrix::from_fn(d, k, |i, c| m[i][d + c] / m[i][i])
    }

    fn rel_gap(f: f64, opt: f64) -> f64 {
        (f - opt) / opt
    }

    #[test]
    fn qr_identity_returns_b() {
        let b = gaussian(4, 2, 1);
        let x = solve_exact_qr(&DenseMatrix::identity(4), &b).unwrap();
        for (u, v) in x.weights.values().iter().zip(b.values()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn qr_one_dimensional_mean() {
        let a = DenseMatrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let b = DenseMatrix::new(2, 1, vec![0.0, 2.0]).unwrap();
        let x = solve_exact_qr(&a, &b).unwrap();
        assert!((x.weights.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qr_matches_normal_equations() {
        let a = gaussian(50, 5, 2);
        let b = gaussian(50, 3, 3);
        let x = solve_exact_qr(&a, &b).unwrap();
        let oracle = normal_equations(&a, &b);
        for (u, v) in x.weights.values().iter().zip(oracle.values()) {
            assert!((u - v).abs() < 1e-8, "{u} vs {v}");
        }
    }

    #[test]
    fn qr_residual_is_orthogonal() {
        let a = gaussian(80, 6, 4);
        let b = gaussian(80, 2, 5);
        let x = solve_exact_qr(&a, &b).unwrap();
        let pred = x.predict(Features::Dense(&a)).unwrap();
        let r = DMatrix::from_row_slice(80, 2, pred.values()) - b.to_nalgebra();
        let atr = a.to_nalgebra().tr_mul(&r);
        assert!(atr.norm() <= 1e-8 * a.frobenius_norm() * b.frobenius_norm());
    }

    #[test]
    fn qr_rejects_rank_deficiency() {
        let a = DenseMatrix::from_fn(10, 3, |i, j| if j == 2 { i as f64 } else { (i + j) as f64 });
        // column 2 == column 0
        let a = DenseMatrix::from_fn(10, 3, |i, j| if j == 2 { a.get(i, 0) } else { a.get(i, j) });
        let b = gaussian(10, 1, 6);
        assert!(matches!(solve_exact_qr(&a, &b), Err(Error::Singular(_))));
        assert!(solve_exact_qr(&gaussian(2, 3, 1), &gaussian(2, 1, 1)).is_err());
    }

    #[test]
    fn lbfgs_zero_labels_stay_zero() {
        let a = gaussian(30, 4, 7);
        let b = DenseMatrix::zeros(30, 2);
        let (m, rep) = solve_lbfgs(
            Features::Dense(&a),
            &b,
            LbfgsConfig {
                iters: 1,
                history: 10,
            },
        )
        .unwrap();
        assert!(m.weights.values().iter().all(|&v| v == 0.0));
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn lbfgs_matches_exact_dense() {
        let a = gaussian(200, 20, 8);
        let b = gaussian(200, 3, 9);
        let exact = solve_exact_qr(&a, &b).unwrap();
        let opt = objective(Features::Dense(&a), &exact, &b).unwrap();
        let (m, rep) = solve_lbfgs(
            Features::Dense(&a),
            &b,
            LbfgsConfig {
                iters: 100,
                history: 10,
            },
        )
        .unwrap();
        let f = objective(Features::Dense(&a), &m, &b).unwrap();
        assert!(rel_gap(f, opt) <= 1e-6, "gap {}", rel_gap(f, opt));
        for w in rep.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn lbfgs_sparse_touches_only_nonzeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (n, d, k) = (400, 200, 3);
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|_| {
                let mut row = Vec::new();
                for j in 0..d {
                    if rng.random::<f64>() < 0.01 {
                        row.push((j, rng.sample::<f64, _>(StandardNormal) + 3.0));
                    }
                }
                if row.is_empty() {
                    row.push((rng.random_range(0..d), 1.0));
                }
                row
            })
            .collect();
        let s = SparseRows::new(d, rows).unwrap();
        let b = gaussian(n, k, 11);
        let (_, rep) = solve_lbfgs(
            Features::Sparse(&s),
            &b,
            LbfgsConfig {
                iters: 15,
                history: 5,
            },
        )
        .unwrap();
        // one initial gradient, then one A·p and one Aᵀ·r per iteration
        let per_pass = (s.nnz() * k) as u64;
        let it = rep.iterations as u64;
        assert!(rep.design_madds >= per_pass * (1 + 2 * it));
        assert!(rep.design_madds <= per_pass * (2 + 2 * it));
        assert!(rep.iterations > 0);
        let per_iter = rep.design_madds as f64 / (rep.iterations as f64 + 0.5);
        assert!(per_iter <= (2 * s.nnz() * k + d * k) as f64);
    }

    #[test]
    fn lbfgs_sparse_equals_dense_path() {
        let dense = DenseMatrix::from_fn(60, 8, |i, j| {
            if (i + j) % 3 == 0 {
                (i * j) as f64 * 0.01 + 1.0
            } else {
                0.0
            }
        });
        let sparse = SparseRows::from_dense(&dense);
        let b = gaussian(60, 2, 12);
        let cfg = LbfgsConfig {
            iters: 30,
            history: 5,
        };
        let (md, _) = solve_lbfgs(Features::Dense(&dense), &b, cfg).unwrap();
        let (ms, _) = solve_lbfgs(Features::Sparse(&sparse), &b, cfg).unwrap();
        for (u, v) in md.weights.values().iter().zip(ms.weights.values()) {
            assert!((u - v).abs() < 1e-8 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn block_single_block_is_exact() {
        let a = gaussian(100, 7, 13);
        let b = gaussian(100, 2, 14);
        let exact = solve_exact_qr(&a, &b).unwrap();
        let (m, _) = solve_block(Features::Dense(&a), &b, 7, 1).unwrap();
        for (u, v) in m.weights.values().iter().zip(exact.weights.values()) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn block_orthogonal_columns_one_pass() {
        // Columns of a Hadamard-like matrix are mutually orthogonal.
        let h = |i: usize, j: usize| {
            if (i & j).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        let a = DenseMatrix::from_fn(16, 6, h);
        let b = gaussian(16, 2, 15);
        let exact = solve_exact_qr(&a, &b).unwrap();
        let (m, _) = solve_block(Features::Dense(&a), &b, 2, 1).unwrap();
        for (u, v) in m.weights.values().iter().zip(exact.weights.values()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn block_converges_to_exact() {
        let a = gaussian(300, 30, 16);
        let b = gaussian(300, 2, 17);
        let exact = solve_exact_qr(&a, &b).unwrap();
        let opt = objective(Features::Dense(&a), &exact, &b).unwrap();
        let (m, rep) = solve_block(Features::Dense(&a), &b, 10, 50).unwrap();
        let f = objective(Features::Dense(&a), &m, &b).unwrap();
        assert!(rel_gap(f, opt) <= 1e-5, "gap {}", rel_gap(f, opt));
        for w in rep.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn block_singular_gram_gets_ridge() {
        let a = DenseMatrix::from_fn(20, 4, |i, j| {
            if j == 3 {
                i as f64
            } else {
                (i * (j + 1)) as f64 % 7.0
            }
        });
        let a = DenseMatrix::from_fn(20, 4, |i, j| if j == 1 { a.get(i, 0) } else { a.get(i, j) });
        let b = gaussian(20, 1, 18);
        let (m, _) = solve_block(Features::Dense(&a), &b, 2, 3).unwrap();
        assert!(m.weights.values().iter().all(|v| v.is_finite()));
        assert!(solve_block(Features::Dense(&a), &b, 5, 1).is_err());
    }
}
