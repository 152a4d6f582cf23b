//! Pipeline spec files.
//!
//! ```text
//! [cluster]
//! workers = 16
//!
//! [nodes]
//! docs    DataSource    type=text
//! y       LabelSource
//! tok     Tokenize
//! model   LinearSolver  iters=20
//!
//! [edges]
//! docs -> tok
//! tok -> model:0
//! y -> model:1
//!
//! [data]
//! docs = text corpus.txt
//! y = labels labels.csv
//! ```
//!
//! `[cluster]` holds descriptor overrides. Each `[nodes]` line is a node id,
//! an operator kind and `key=value` parameters; `w=` sets the iteration
//! weight and `impl=` fixes the physical implementation. Edges without a
//! `:slot` fill the consumer's slots in the order listed. `[data]` binds a
//! source name to a file: `text`, `dense` and `labels` (CSV), `sparse`
//! (`label idx:val …`, with `dim=` and `labels=<source>` to bind the label
//! column), and `images` (CSV rows with `side=` and `channels=`). Paths are
//! relative to the spec file. The sink is the one node without consumers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::io::{load_dense_csv, load_images_csv, load_sparse_text, load_text_lines};
use crate::costmodel::{ClusterResourceDescriptor, ImplId};
use crate::dag::{
    ConvParams, DataType, Edge, LogicalNode, MapFunc, NodeId, OperatorKind, PcaParams,
    PipelineGraph, SolverParams,
};
use crate::error::{Error, Result};
use crate::executor::DataSources;
use crate::ops::DenseMatrix;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Text,
    Dense,
    Labels,
    Sparse,
    Images,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataBinding {
    pub source: String,
    pub format: DataFormat,
    pub path: PathBuf,
    pub dim: Option<usize>,
    /// Source that receives the label column of a sparse file.
    pub labels: Option<String>,
    pub image: Option<(usize, usize)>,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineSpec {
    pub origin: String,
    pub graph: PipelineGraph,
    /// Spec node ids.
    pub ids: BTreeMap<String, NodeId>,
    cluster: Vec<(usize, String)>,
    pub data: Vec<DataBinding>,
}

#[derive(PartialEq)]
enum Section {
    None,
    Cluster,
    Nodes,
    Edges,
    Data,
}

fn params<'a>(fields: &[&'a str], origin: &str, line: usize) -> Result<BTreeMap<&'a str, &'a str>> {
    let mut out = BTreeMap::new();
    for f in fields {
        let (k, v) = f
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, line, format!("expected key=value, got {f:?}")))?;
        if out.insert(k, v).is_some() {
            return Err(Error::parse(
                origin,
                line,
                format!("parameter {k:?} given twice"),
            ));
        }
    }
    Ok(out)
}

struct Params<'a> {
    map: BTreeMap<&'a str, &'a str>,
    origin: &'a str,
    line: usize,
}

impl<'a> Params<'a> {
    fn err(&self, msg: String) -> Error {
        Error::parse(self.origin, self.line, msg)
    }

    fn take(&mut self, key: &str) -> Option<&'a str> {
        self.map.remove(key)
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(format!("{key}: bad value {v:?}"))),
        }
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.num(key)?
            .ok_or_else(|| self.err(format!("missing parameter {key}")))
    }

    fn flag(&mut self, key: &str) -> Result<bool> {
        match self.take(key) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => Err(self.err(format!("{key}: expected true or false, got {v:?}"))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(self.err(format!("unknown parameter {k:?}"))),
            None => Ok(()),
        }
    }
}

fn node_from(id: &str, kind: &str, mut p: Params<'_>) -> Result<LogicalNode> {
    let weight: Option<u32> = p.num("w")?;
    let imp = match p.take("impl") {
        None => None,
        Some(s) => {
            Some(ImplId::parse(s).ok_or_else(|| p.err(format!("unknown implementation {s:?}")))?)
        }
    };
    let node = match kind.to_ascii_lowercase().as_str() {
        "datasource" => {
            let dtype = match p.take("type") {
                None => DataType::DenseVec,
                Some(t) => {
                    DataType::parse(t).ok_or_else(|| p.err(format!("unknown data type {t:?}")))?
                }
            };
            let name = p.take("name").unwrap_or(id).to_string();
            let dim = p.num("dim")?;
            LogicalNode::new(OperatorKind::DataSource { name, dtype, dim })
        }
        "labelsource" => {
            let name = p.take("name").unwrap_or(id).to_string();
            let classes = p.num("classes")?;
            LogicalNode::new(OperatorKind::LabelSource { name, classes })
        }
        "tokenize" => LogicalNode::tokenize(),
        "ngrams" => LogicalNode::ngrams(p.required("n")?),
        "topkfeatures" => LogicalNode::top_k_features(p.required("k")?),
        "termfrequency" => LogicalNode::term_frequency(),
        "linearsolver" => {
            let d = SolverParams::default();
            LogicalNode::linear_solver(SolverParams {
                iters: p.num("iters")?.unwrap_or(d.iters),
                block_size: p.num("block")?.unwrap_or(d.block_size),
                history: p.num("history")?.unwrap_or(d.history),
            })
        }
        "pca" => {
            let d = PcaParams::new(p.required("k")?);
            LogicalNode::pca(PcaParams {
                oversample: p.num("oversample")?.unwrap_or(d.oversample),
                power_iters: p.num("power")?.unwrap_or(d.power_iters),
                seed: p.num("seed")?.unwrap_or(d.seed),
                ..d
            })
        }
        "apply" => LogicalNode::apply(),
        "convolution" => LogicalNode::convolution(ConvParams {
            filters: p.required("filters")?,
            size: p.required("size")?,
            separable: p.flag("separable")?,
            seed: p.num("seed")?.unwrap_or(0),
        }),
        "grayscale" => LogicalNode::new(OperatorKind::GrayScale),
        "elementmap" => {
            let f = p.take("func").unwrap_or("tanh");
            let func = MapFunc::parse(f).ok_or_else(|| p.err(format!("unknown function {f:?}")))?;
            LogicalNode::element_map(func, p.num("repeat")?.unwrap_or(1))
        }
        "flatten" => LogicalNode::new(OperatorKind::Flatten),
        "gather" => LogicalNode::gather(),
        other => return Err(p.err(format!("unknown operator kind {other:?}"))),
    };
    let (origin, line) = (p.origin.to_string(), p.line);
    p.finish()?;
    let mut node = node.named(id);
    if let Some(w) = weight {
        node = node
            .with_weight(w)
            .map_err(|e| Error::parse(&origin, line, e.to_string()))?;
    }
    if let Some(imp) = imp {
        node = node.with_implementation(imp);
    }
    Ok(node)
}

impl PipelineSpec {
    /// Parses a spec; data paths are resolved against `base`.
    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<Self> {
        let mut section = Section::None;
        let mut cluster = Vec::new();
        let mut nodes: Vec<LogicalNode> = Vec::new();
        let mut ids: BTreeMap<String, NodeId> = BTreeMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut next_slot: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut first_edge_line = 0;
        let mut data = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| Error::parse(origin, line, msg);
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if content.starts_with('[') {
                section = match content {
                    "[cluster]" => Section::Cluster,
                    "[nodes]" => Section::Nodes,
                    "[edges]" => Section::Edges,
                    "[data]" => Section::Data,
                    other => return Err(err(format!("unknown section {other}"))),
                };
                continue;
            }
            match section {
                Section::None => return Err(err("content before the first section".into())),
                Section::Cluster => cluster.push((line, content.to_string())),
                Section::Nodes => {
                    let fields: Vec<&str> = content.split_whitespace().collect();
                    if fields.len() < 2 {
                        return Err(err("expected: id kind [key=value …]".into()));
                    }
                    let p = Params {
                        map: params(&fields[2..], origin, line)?,
                        origin,
                        line,
                    };
                    let node = node_from(fields[0], fields[1], p)?;
                    if ids.insert(fields[0].to_string(), node.id).is_some() {
                        return Err(err(format!("node {:?} defined twice", fields[0])));
                    }
                    nodes.push(node);
                }
                Section::Edges => {
                    if first_edge_line == 0 {
                        first_edge_line = line;
                    }
                    let (from, to) = content
                        .split_once("->")
                        .ok_or_else(|| err("expected: from -> to[:slot]".into()))?;
                    let (to, slot) = match to.trim().split_once(':') {
                        Some((t, s)) => (
                            t,
                            Some(
                                s.parse::<usize>()
                                    .map_err(|_| err(format!("bad slot {s:?}")))?,
                            ),
                        ),
                        None => (to.trim(), None),
                    };
                    let look = |name: &str| {
                        ids.get(name.trim())
                            .copied()
                            .ok_or_else(|| err(format!("unknown node {:?}", name.trim())))
                    };
                    let (from, to) = (look(from)?, look(to)?);
                    let next = next_slot.entry(to).or_default();
                    let slot = slot.unwrap_or(*next);
                    *next = slot + 1;
                    edges.push(Edge { from, to, slot });
                }
                Section::Data => {
                    let (name, rest) = content
                        .split_once('=')
                        .ok_or_else(|| err("expected: source = format path".into()))?;
                    let fields: Vec<&str> = rest.split_whitespace().collect();
                    if fields.len() < 2 {
                        return Err(err("expected: source = format path [key=value …]".into()));
                    }
                    let format = match fields[0] {
                        "text" => DataFormat::Text,
                        "dense" => DataFormat::Dense,
                        "labels" => DataFormat::Labels,
                        "sparse" => DataFormat::Sparse,
                        "images" => DataFormat::Images,
                        other => return Err(err(format!("unknown data format {other:?}"))),
                    };
                    let mut p = Params {
                        map: params(&fields[2..], origin, line)?,
                        origin,
                        line,
                    };
                    let dim = p.num("dim")?;
                    let labels = p.take("labels").map(str::to_string);
                    let image = match format {
                        DataFormat::Images => {
                            Some((p.required("side")?, p.num("channels")?.unwrap_or(1)))
                        }
                        _ => None,
                    };
                    p.finish()?;
                    data.push(DataBinding {
                        source: name.trim().to_string(),
                        format,
                        path: base.join(fields[1]),
                        dim,
                        labels,
                        image,
                        line,
                    });
                }
            }
        }
        let consumed: std::collections::BTreeSet<NodeId> = edges.iter().map(|e| e.from).collect();
        let sinks: Vec<&LogicalNode> = nodes.iter().filter(|n| !consumed.contains(&n.id)).collect();
        let sink = match sinks.as_slice() {
            [one] => one.id,
            [] => {
                return Err(Error::parse(
                    origin,
                    first_edge_line,
                    "no sink: every node has a consumer",
                ))
            }
            many => {
                let names: Vec<&str> = many.iter().map(|n| n.name.as_str()).collect();
                return Err(Error::parse(
                    origin,
                    first_edge_line,
                    format!("more than one sink: {}", names.join(", ")),
                ));
            }
        };
        let graph = PipelineGraph::from_parts(nodes, edges, sink)
            .map_err(|e| Error::parse(origin, first_edge_line, e.to_string()))?;
        Ok(PipelineSpec {
            origin: origin.to_string(),
            graph,
            ids,
            cluster,
            data,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    /// `base` with this spec's `[cluster]` overrides applied.
    pub fn cluster(&self, base: ClusterResourceDescriptor) -> Result<ClusterResourceDescriptor> {
        let mut r = base;
        for (line, text) in &self.cluster {
            r.apply_overrides(text, &self.origin, *line)?;
        }
        Ok(r)
    }

    pub fn node(&self, id: &str) -> Option<NodeId> {
        self.ids.get(id).copied()
    }

    /// Loads every `[data]` binding.
    pub fn load_data(&self) -> Result<DataSources> {
        let mut out = DataSources::new();
        for b in &self.data {
            let value = match b.format {
                DataFormat::Text => Value::Text(load_text_lines(&b.path)?),
                DataFormat::Dense => Value::Dense(load_dense_csv(&b.path)?),
                DataFormat::Labels => Value::Labels(load_dense_csv(&b.path)?),
                DataFormat::Images => {
                    let (side, channels) = b.image.expect("images carry a shape");
                    Value::Images(load_images_csv(&b.path, side, channels)?)
                }
                DataFormat::Sparse => {
                    let (labels, rows) = load_sparse_text(&b.path, b.dim)?;
                    if let Some(name) = &b.labels {
                        let n = labels.len();
                        out.insert(name.clone(), Value::Labels(DenseMatrix::new(n, 1, labels)?));
                    }
                    Value::Sparse(rows)
                }
            };
            out.insert(b.source.clone(), value);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "\
# bigram classifier
[cluster]
workers = 4

[nodes]
docs   DataSource  type=text
y      LabelSource
tok    Tokenize
bi     NGrams n=2
vocab  TopKFeatures k=100
tf     TermFrequency
model  LinearSolver iters=10 block=50
pred   Apply

[edges]
docs -> tok
tok -> bi
bi -> vocab
bi -> tf:0
vocab -> tf:1
tf -> model:0
y -> model:1
tf -> pred:0
model -> pred:1

[data]
docs = text corpus.txt
y = labels y.csv
";

    #[test]
    fn parses_sections() {
        let s = PipelineSpec::parse(TEXT, "p.spec", Path::new("/data")).unwrap();
        assert_eq!(s.graph.len(), 8);
        assert_eq!(s.graph.sink(), s.node("pred").unwrap());
        let model = s.graph.node(s.node("model").unwrap()).unwrap();
        assert_eq!(model.weight, 10);
        assert_eq!(
            s.cluster(ClusterResourceDescriptor::default())
                .unwrap()
                .workers,
            4
        );
        assert_eq!(s.data[0].path, Path::new("/data/corpus.txt"));
        assert_eq!(
            s.graph.inputs(s.node("tf").unwrap()),
            vec![s.node("bi").unwrap(), s.node("vocab").unwrap()]
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = TEXT.replace("tok    Tokenize", "tok    Tokenise");
        let e = PipelineSpec::parse(&bad, "p.spec", Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(
            e.starts_with("p.spec:8:") && e.contains("Tokenise".to_lowercase().as_str()),
            "{e}"
        );
        let bad = TEXT.replace("n=2", "n=two");
        assert!(PipelineSpec::parse(&bad, "p.spec", Path::new("."))
            .unwrap_err()
            .to_string()
            .starts_with("p.spec:9:"));
        let bad = TEXT.replace("workers = 4", "workers = lots");
        assert!(PipelineSpec::parse(&bad, "p.spec", Path::new("."))
            .unwrap()
            .cluster(Default::default())
            .is_err());
    }

    #[test]
    fn two_sinks_are_rejected() {
        let bad = TEXT.replace("model -> pred:1\n", "");
        assert!(PipelineSpec::parse(&bad, "p.spec", Path::new(".")).is_err());
    }

    #[test]
    fn missing_data_names_the_path() {
        let s = PipelineSpec::parse(TEXT, "p.spec", Path::new("/nonexistent")).unwrap();
        let e = s.load_data().unwrap_err();
        assert!(matches!(e, Error::Io { .. }));
        assert!(e.to_string().contains("/nonexistent/corpus.txt"));
    }
}
