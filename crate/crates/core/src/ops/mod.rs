//! Physical operator implementations.

pub mod conv;
pub mod matrix;
pub mod pca;
pub mod solvers;
pub mod text;

pub use conv::{convolve_fft, convolve_matmul, convolve_separable, FilterBank, ImageTensor};
pub use matrix::{DenseMatrix, SparseRows};
pub use pca::{pca_svd, pca_tsvd, PcaModel, TsvdConfig};
pub use solvers::{solve_block, solve_exact_qr, solve_lbfgs, Features, LbfgsConfig, LinearModel};
pub use text::{ngrams, term_frequency, tokenize, top_k_features, Vocabulary};
