//! Runtime values flowing along pipeline edges.

use crate::dag::DataType;
use crate::error::{Error, Result};
use crate::ops::{DenseMatrix, ImageTensor, LinearModel, PcaModel, SparseRows, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Vocabulary(Vocabulary),
    Linear(LinearModel),
    Pca(PcaModel),
}

impl FittedModel {
    pub fn byte_size(&self) -> u64 {
        match self {
            FittedModel::Vocabulary(v) => v.byte_size(),
            FittedModel::Linear(m) => {
                8 * (m.weights.values().len() + m.intercept.as_ref().map_or(0, Vec::len)) as u64
            }
            FittedModel::Pca(m) => 8 * (m.components.values().len() + m.mean.len()) as u64,
        }
    }
}

/// A collection of records, or a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(Vec<String>),
    Tokens(Vec<Vec<String>>),
    Sparse(SparseRows),
    Dense(DenseMatrix),
    Images(Vec<ImageTensor>),
    Labels(DenseMatrix),
    Model(FittedModel),
}

impl Value {
    pub fn data_type(&self) -> DataType {
        match self {
            Value::Text(_) => DataType::Text,
            Value::Tokens(_) => DataType::Tokens,
            Value::Sparse(_) => DataType::SparseVec,
            Value::Dense(_) => DataType::DenseVec,
            Value::Images(_) => DataType::Image,
            Value::Labels(_) => DataType::Labels,
            Value::Model(_) => DataType::Model,
        }
    }

    /// Record count; a model counts as a single record.
    pub fn len(&self) -> usize {
        match self {
            Value::Text(v) => v.len(),
            Value::Tokens(v) => v.len(),
            Value::Sparse(s) => s.len(),
            Value::Dense(m) | Value::Labels(m) => m.rows(),
            Value::Images(v) => v.len(),
            Value::Model(_) => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-memory size used for cache accounting. Dense data is 8 bytes per
    /// scalar with no per-record overhead.
    pub fn byte_size(&self) -> u64 {
        match self {
            Value::Text(v) => v.iter().map(|s| s.len() as u64 + 8).sum(),
            Value::Tokens(v) => v
                .iter()
                .map(|d| 8 + d.iter().map(|t| t.len() as u64 + 8).sum::<u64>())
                .sum(),
            Value::Sparse(s) => 16 * s.nnz() as u64 + 8 * s.len() as u64,
            Value::Dense(m) | Value::Labels(m) => 8 * m.values().len() as u64,
            Value::Images(v) => v.iter().map(|i| 8 * i.values().len() as u64).sum(),
            Value::Model(m) => m.byte_size(),
        }
    }

    /// The records at `idx`, in that order. Models are returned unchanged.
    pub fn select(&self, idx: &[usize]) -> Value {
        match self {
            Value::Text(v) => Value::Text(idx.iter().map(|&i| v[i].clone()).collect()),
            Value::Tokens(v) => Value::Tokens(idx.iter().map(|&i| v[i].clone()).collect()),
            Value::Sparse(s) => Value::Sparse(s.select_rows(idx)),
            Value::Dense(m) => Value::Dense(m.select_rows(idx)),
            Value::Labels(m) => Value::Labels(m.select_rows(idx)),
            Value::Images(v) => Value::Images(idx.iter().map(|&i| v[i].clone()).collect()),
            Value::Model(m) => Value::Model(m.clone()),
        }
    }

    pub fn as_model(&self) -> Result<&FittedModel> {
        match self {
            Value::Model(m) => Ok(m),
            other => Err(Error::TypeMismatch {
                expected: DataType::Model,
                found: other.data_type(),
            }),
        }
    }

    pub fn as_tokens(&self) -> Result<&[Vec<String>]> {
        match self {
            Value::Tokens(t) => Ok(t),
            other => Err(Error::TypeMismatch {
                expected: DataType::Tokens,
                found: other.data_type(),
            }),
        }
    }

    pub fn as_dense(&self) -> Result<&DenseMatrix> {
        match self {
            Value::Dense(m) => Ok(m),
            other => Err(Error::TypeMismatch {
                expected: DataType::DenseVec,
                found: other.data_type(),
            }),
        }
    }

    pub fn as_labels(&self) -> Result<&DenseMatrix> {
        match self {
            Value::Labels(m) => Ok(m),
            other => Err(Error::TypeMismatch {
                expected: DataType::Labels,
                found: other.data_type(),
            }),
        }
    }

    pub fn as_images(&self) -> Result<&[ImageTensor]> {
        match self {
            Value::Images(v) => Ok(v),
            other => Err(Error::TypeMismatch {
                expected: DataType::Image,
                found: other.data_type(),
            }),
        }
    }
}
