use rayon::prelude::*;

use crate::costmodel::ImplId;
use crate::dag::{DataType, LogicalNode, OperatorKind};
use crate::error::{Error, Result};
use crate::ops::conv::{convolve_fft, convolve_matmul, convolve_separable};
use crate::ops::{
    ngrams, pca_svd, pca_tsvd, solve_block, solve_exact_qr, solve_lbfgs, tokenize, top_k_features,
    DenseMatrix, Features, FilterBank, ImageTensor, LbfgsConfig, SparseRows, TsvdConfig,
};
use crate::value::{FittedModel, Value};

/// Implementation used when a node's choice has not been resolved.
pub fn default_implementation(kind: &OperatorKind) -> Option<ImplId> {
    match kind {
        OperatorKind::LinearSolver(_) => Some(ImplId::Lbfgs),
        OperatorKind::Pca(_) => Some(ImplId::Svd),
        OperatorKind::Convolution(_) => Some(ImplId::MatMul),
        _ => None,
    }
}

/// Effective iteration weight of a node under implementation `imp`.
pub fn effective_weight(kind: &OperatorKind, imp: Option<ImplId>) -> u32 {
    match (kind, imp.map(ImplId::local_kernel)) {
        (OperatorKind::LinearSolver(_), Some(ImplId::LocalQr)) => 1,
        (OperatorKind::LinearSolver(p), _) => p.iters.max(1),
        _ => 1,
    }
}

fn features(v: &Value) -> Result<Features<'_>> {
    match v {
        Value::Dense(m) => Ok(Features::Dense(m)),
        Value::Sparse(s) => Ok(Features::Sparse(s)),
        other => Err(Error::TypeMismatch {
            expected: DataType::DenseVec,
            found: other.data_type(),
        }),
    }
}

fn densified(v: &Value) -> Result<std::borrow::Cow<'_, DenseMatrix>> {
    match v {
        Value::Dense(m) => Ok(std::borrow::Cow::Borrowed(m)),
        Value::Sparse(s) => Ok(std::borrow::Cow::Owned(s.to_dense())),
        other => Err(Error::TypeMismatch {
            expected: DataType::DenseVec,
            found: other.data_type(),
        }),
    }
}

fn convolve(imp: ImplId, img: &ImageTensor, bank: &FilterBank) -> Result<ImageTensor> {
    match imp {
        ImplId::Separable => convolve_separable(img, bank),
        ImplId::Fft => convolve_fft(img, bank),
        _ => convolve_matmul(img, bank),
    }
}

fn expect_inputs<'a>(node: &LogicalNode, inputs: &[&'a Value], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(Error::InvalidGraph(format!(
            "{} expects {n} inputs, got {}",
            node.name,
            inputs.len()
        )));
    }
    Ok(())
}

/// Computes one non-source node from its inputs (in slot order) with its
/// resolved implementation, or the default one.
pub fn evaluate(node: &LogicalNode, inputs: &[&Value]) -> Result<Value> {
    let imp = node
        .implementation
        .or_else(|| default_implementation(&node.kind));
    match &node.kind {
        OperatorKind::DataSource { .. } | OperatorKind::LabelSource { .. } => {
            Err(Error::Invalid(format!(
                "{} is a source; its data comes from the source map",
                node.name
            )))
        }
        OperatorKind::Tokenize => {
            expect_inputs(node, inputs, 1)?;
            match inputs[0] {
                Value::Text(docs) => Ok(Value::Tokens(
                    docs.par_iter().map(|d| tokenize(d)).collect(),
                )),
                other => Err(Error::TypeMismatch {
                    expected: DataType::Text,
                    found: other.data_type(),
                }),
            }
        }
        OperatorKind::NGrams { n } => {
            expect_inputs(node, inputs, 1)?;
            let docs = inputs[0].as_tokens()?;
            Ok(Value::Tokens(
                docs.par_iter().map(|d| ngrams(d, *n)).collect(),
            ))
        }
        OperatorKind::TopKFeatures { k } => {
            expect_inputs(node, inputs, 1)?;
            let docs = inputs[0].as_tokens()?;
            let vocab = top_k_features(docs.iter().map(Vec::as_slice), *k)?;
            Ok(Value::Model(FittedModel::Vocabulary(vocab)))
        }
        OperatorKind::TermFrequency => {
            expect_inputs(node, inputs, 2)?;
            let docs = inputs[0].as_tokens()?;
            let vocab = match inputs[1].as_model()? {
                FittedModel::Vocabulary(v) => v,
                _ => {
                    return Err(Error::Invalid(format!(
                        "{}: slot 1 must be a vocabulary",
                        node.name
                    )))
                }
            };
            let rows: Vec<Vec<(usize, f64)>> = docs
                .par_iter()
                .map(|doc| {
                    doc.iter()
                        .filter_map(|g| vocab.get(g).map(|i| (i, 1.0)))
                        .collect()
                })
                .collect();
            Ok(Value::Sparse(SparseRows::from_unsorted(vocab.len(), rows)?))
        }
        OperatorKind::LinearSolver(p) => {
            expect_inputs(node, inputs, 2)?;
            let b = inputs[1].as_labels()?;
            let model = match imp.map(ImplId::local_kernel) {
                Some(ImplId::LocalQr) => solve_exact_qr(&*densified(inputs[0])?, b)?,
                Some(ImplId::BlockSolve) => {
                    let f = features(inputs[0])?;
                    solve_block(
                        f,
                        b,
                        p.block_size.clamp(1, f.cols().max(1)),
                        p.iters as usize,
                    )?
                    .0
                }
                _ => {
                    let cfg = LbfgsConfig {
                        iters: p.iters as usize,
                        history: p.history,
                    };
                    solve_lbfgs(features(inputs[0])?, b, cfg)?.0
                }
            };
            Ok(Value::Model(FittedModel::Linear(model)))
        }
        OperatorKind::Pca(p) => {
            expect_inputs(node, inputs, 1)?;
            let a = inputs[0].as_dense()?;
            let model = match imp.map(ImplId::local_kernel) {
                Some(ImplId::Tsvd) => {
                    let room = a.rows().min(a.cols()).saturating_sub(p.k);
                    let cfg = TsvdConfig {
                        oversample: p.oversample.min(room),
                        power_iters: p.power_iters,
                        seed: p.seed,
                    };
                    pca_tsvd(a, p.k, cfg)?
                }
                _ => pca_svd(a, p.k)?,
            };
            Ok(Value::Model(FittedModel::Pca(model)))
        }
        OperatorKind::Apply => {
            expect_inputs(node, inputs, 2)?;
            match inputs[1].as_model()? {
                FittedModel::Linear(m) => Ok(Value::Dense(m.predict(features(inputs[0])?)?)),
                FittedModel::Pca(m) => Ok(Value::Dense(m.project(&*densified(inputs[0])?)?)),
                FittedModel::Vocabulary(_) => Err(Error::Invalid(format!(
                    "{}: vocabularies are applied by TermFrequency",
                    node.name
                ))),
            }
        }
        OperatorKind::Convolution(p) => {
            expect_inputs(node, inputs, 1)?;
            let images = inputs[0].as_images()?;
            let channels = images.first().map_or(1, ImageTensor::channels);
            let bank = FilterBank::random(p.filters, p.size, channels, p.separable, p.seed);
            let imp = imp.unwrap_or(ImplId::MatMul);
            let out = images
                .par_iter()
                .map(|img| convolve(imp, img, &bank))
                .collect::<Result<Vec<_>>>()?;
            Ok(Value::Images(out))
        }
        OperatorKind::GrayScale => {
            expect_inputs(node, inputs, 1)?;
            Ok(Value::Images(
                inputs[0]
                    .as_images()?
                    .par_iter()
                    .map(ImageTensor::grayscale)
                    .collect(),
            ))
        }
        OperatorKind::ElementMap { func, repeat } => {
            expect_inputs(node, inputs, 1)?;
            let m = inputs[0].as_dense()?;
            let values: Vec<f64> = m
                .values()
                .par_iter()
                .map(|&x| (0..*repeat).fold(x, |acc, _| func.apply(acc)))
                .collect();
            Ok(Value::Dense(DenseMatrix::new(m.rows(), m.cols(), values)?))
        }
        OperatorKind::Flatten => {
            expect_inputs(node, inputs, 1)?;
            let images = inputs[0].as_images()?;
            let d = images.first().map_or(0, |i| i.values().len());
            if images.iter().any(|i| i.values().len() != d) {
                return Err(Error::HeterogeneousRecords(format!(
                    "{}: images differ in size",
                    node.name
                )));
            }
            let values: Vec<f64> = images
                .iter()
                .flat_map(|i| i.values().iter().copied())
                .collect();
            Ok(Value::Dense(DenseMatrix::new(images.len(), d, values)?))
        }
        OperatorKind::Gather => {
            if inputs.len() < 2 {
                return Err(Error::InvalidGraph(format!(
                    "{}: gather needs ≥ 2 inputs",
                    node.name
                )));
            }
            if inputs.iter().any(|v| matches!(v, Value::Sparse(_))) {
                let parts = inputs
                    .iter()
                    .map(|v| match v {
                        Value::Sparse(s) => Ok(s.clone()),
                        Value::Dense(m) => Ok(SparseRows::from_dense(m)),
                        other => Err(Error::TypeMismatch {
                            expected: DataType::SparseVec,
                            found: other.data_type(),
                        }),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Value::Sparse(SparseRows::hstack(&parts)?))
            } else {
                let parts = inputs
                    .iter()
                    .map(|v| v.as_dense())
                    .collect::<Result<Vec<_>>>()?;
                Ok(Value::Dense(DenseMatrix::hstack(&parts)?))
            }
        }
    }
}
