//! Seeded pipelines and datasets used by the examples and the acceptance
//! suite.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cli::io::{load_dense_csv, load_text_lines};
use crate::dag::{
    ConvParams, DataType, LogicalNode, MapFunc, OperatorKind, PcaParams, PipelineGraph,
    SolverParams,
};
use crate::error::Result;
use crate::executor::DataSources;
use crate::ops::{DenseMatrix, ImageTensor};
use crate::value::Value;

/// Directory holding the bundled corpus and spec files.
pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// The bundled 10,000-line review corpus and its ±1 labels.
pub fn review_corpus() -> Result<(Vec<String>, DenseMatrix)> {
    let dir = data_dir();
    Ok((
        load_text_lines(&dir.join("reviews.txt"))?,
        load_dense_csv(&dir.join("reviews_labels.csv"))?,
    ))
}

/// Bigram classifier: top-`k` bigram vocabulary, term frequencies, a linear
/// solver and predictions. With `shared` the vocabulary and featurizer read
/// one tokenize/bigram chain; otherwise each declares its own.
pub fn bigram_classifier(k: usize, iters: u32, shared: bool) -> Result<PipelineGraph> {
    let docs = PipelineGraph::source(LogicalNode::data_source("docs", DataType::Text))?;
    let chain = |g: &PipelineGraph, tag: &str| -> Result<PipelineGraph> {
        g.and_then(LogicalNode::tokenize().named(format!("tokenize{tag}")))?
            .and_then(LogicalNode::ngrams(2).named(format!("bigrams{tag}")))
    };
    let for_vocab = chain(&docs, if shared { "" } else { "_a" })?;
    let for_tf = if shared {
        for_vocab.clone()
    } else {
        chain(&docs, "_b")?
    };
    let vocab = for_vocab.and_then(LogicalNode::top_k_features(k).named("vocabulary"))?;
    let tf = for_tf.and_then_with(LogicalNode::term_frequency().named("tf"), &[&vocab])?;
    let labels = PipelineGraph::source(LogicalNode::label_source("y"))?;
    let params = SolverParams {
        iters,
        ..SolverParams::default()
    };
    let model = tf.and_then_with(
        LogicalNode::linear_solver(params).named("solver"),
        &[&labels],
    )?;
    tf.and_then_with(LogicalNode::apply().named("predict"), &[&model])
}

pub fn text_sources(docs: Vec<String>, labels: DenseMatrix) -> DataSources {
    let mut s = DataSources::new();
    s.insert("docs".into(), Value::Text(docs));
    s.insert("y".into(), Value::Labels(labels));
    s
}

/// Shape of [`image_pipeline`].
#[derive(Debug, Clone, Copy)]
pub struct ImageWorkload {
    pub images: usize,
    pub side: usize,
    pub channels: usize,
    pub filters: usize,
    pub filter_size: usize,
    pub pca_k: usize,
    pub solver_iters: u32,
    pub seed: u64,
}

impl Default for ImageWorkload {
    fn default() -> Self {
        ImageWorkload {
            images: 2000,
            side: 20,
            channels: 3,
            filters: 4,
            filter_size: 9,
            pca_k: 16,
            solver_iters: 20,
            seed: 0,
        }
    }
}

/// Separable convolution, flatten, PCA fitted and applied on the features,
/// then a linear solver and predictions.
pub fn image_pipeline(w: &ImageWorkload) -> Result<PipelineGraph> {
    let images = PipelineGraph::source(LogicalNode::data_source("images", DataType::Image))?;
    let conv = ConvParams {
        filters: w.filters,
        size: w.filter_size,
        separable: true,
        seed: w.seed,
    };
    let features = images
        .and_then(LogicalNode::convolution(conv).named("conv"))?
        .and_then(LogicalNode::new(OperatorKind::Flatten).named("flatten"))?;
    let pca = features.and_then(
        LogicalNode::pca(PcaParams {
            seed: w.seed,
            ..PcaParams::new(w.pca_k)
        })
        .named("pca"),
    )?;
    let reduced = features.and_then_with(LogicalNode::apply().named("project"), &[&pca])?;
    let labels = PipelineGraph::source(LogicalNode::label_source("y"))?;
    let params = SolverParams {
        iters: w.solver_iters,
        ..SolverParams::default()
    };
    let model = reduced.and_then_with(
        LogicalNode::linear_solver(params).named("solver"),
        &[&labels],
    )?;
    reduced.and_then_with(LogicalNode::apply().named("predict"), &[&model])
}

/// Random images whose ±1 label is the sign of the mean red-minus-blue
/// difference.
pub fn image_sources(w: &ImageWorkload) -> DataSources {
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let mut labels = Vec::with_capacity(w.images);
    let images: Vec<ImageTensor> = (0..w.images)
        .map(|_| {
            let bias: f64 = rng.sample(StandardNormal);
            let img = ImageTensor::from_fn(w.side, w.channels, |_, _, c| {
                let shift = match c {
                    0 => bias,
                    2 => -bias,
                    _ => 0.0,
                };
                rng.random::<f64>() + 0.2 * shift
            });
            labels.push(if bias >= 0.0 { 1.0 } else { -1.0 });
            img
        })
        .collect();
    let mut s = DataSources::new();
    s.insert("images".into(), Value::Images(images));
    s.insert(
        "y".into(),
        Value::Labels(DenseMatrix::new(w.images, 1, labels).expect("one label per image")),
    );
    s
}

/// A linear chain of element-wise maps over a dense source named `x`.
pub fn map_chain(dim: usize, stages: &[(MapFunc, u32)]) -> Result<PipelineGraph> {
    let mut g = PipelineGraph::source(LogicalNode::dense_source("x", dim))?;
    for (i, &(f, repeat)) in stages.iter().enumerate() {
        g = g.and_then(LogicalNode::element_map(f, repeat).named(format!("map{}", i + 1)))?;
    }
    Ok(g)
}

/// Standard-normal dense records for [`map_chain`].
pub fn dense_source(n: usize, dim: usize, seed: u64) -> DataSources {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = DataSources::new();
    s.insert(
        "x".into(),
        Value::Dense(DenseMatrix::from_fn(n, dim, |_, _| {
            rng.sample(StandardNormal)
        })),
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{execute, ExecutorConfig};

    #[test]
    fn bundled_corpus_has_ten_thousand_lines() {
        let (docs, labels) = review_corpus().unwrap();
        assert_eq!(docs.len(), 10_000);
        assert_eq!((labels.rows(), labels.cols()), (10_000, 1));
    }

    #[test]
    fn small_image_pipeline_runs() {
        let w = ImageWorkload {
            images: 40,
            side: 8,
            filter_size: 3,
            filters: 2,
            pca_k: 4,
            solver_iters: 3,
            ..Default::default()
        };
        let out = execute(
            &image_pipeline(&w).unwrap(),
            &image_sources(&w),
            &ExecutorConfig::lru(0),
        )
        .unwrap();
        assert_eq!(out.output.as_dense().unwrap().rows(), 40);
    }
}
