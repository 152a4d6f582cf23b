//! Pipeline DAGs of logical operators.
//!
//! A [`PipelineGraph`] is an immutable value: [`PipelineGraph::and_then`]
//! returns a new graph and leaves the receiver untouched, so calling it twice
//! on the same graph produces two pipelines that share a prefix. Sharing is by
//! node identity. Value-level duplicates (two separately constructed but
//! identical chains) are left for [`crate::optimizer::cse`] to merge.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::costmodel::ImplId;
use crate::error::{Error, Result};

static NEXT_NODE_ID: AtomicU64 = AtomicU64::new(1);

/// Stable node identifier, assigned once at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

impl NodeId {
    pub fn fresh() -> Self {
        NodeId(NEXT_NODE_ID.fetch_add(1, Ordering::Relaxed))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Closed set of edge type tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DataType {
    Text,
    Tokens,
    SparseVec,
    DenseVec,
    Image,
    Labels,
    Model,
}

impl DataType {
    pub fn is_vector(self) -> bool {
        matches!(self, DataType::SparseVec | DataType::DenseVec)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "text" => DataType::Text,
            "tokens" => DataType::Tokens,
            "sparse" | "sparsevec" => DataType::SparseVec,
            "dense" | "densevec" => DataType::DenseVec,
            "image" => DataType::Image,
            "labels" => DataType::Labels,
            "model" => DataType::Model,
            _ => return None,
        })
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataType::Text => "Text",
            DataType::Tokens => "Tokens",
            DataType::SparseVec => "SparseVec",
            DataType::DenseVec => "DenseVec",
            DataType::Image => "Image",
            DataType::Labels => "Labels",
            DataType::Model => "Model",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Source,
    Transformer,
    Estimator,
}

/// Element-wise function applied by [`OperatorKind::ElementMap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapFunc {
    Scale(f64),
    Square,
    Tanh,
    Sin,
    Abs,
}

impl MapFunc {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            MapFunc::Scale(a) => a * x,
            MapFunc::Square => x * x,
            MapFunc::Tanh => x.tanh(),
            MapFunc::Sin => x.sin(),
            MapFunc::Abs => x.abs(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if let Some(rest) = s.strip_prefix("scale:") {
            return rest.parse().ok().map(MapFunc::Scale);
        }
        Some(match s {
            "square" => MapFunc::Square,
            "tanh" => MapFunc::Tanh,
            "sin" => MapFunc::Sin,
            "abs" => MapFunc::Abs,
            _ => return None,
        })
    }
}

impl fmt::Display for MapFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapFunc::Scale(a) => write!(f, "scale:{a}"),
            MapFunc::Square => f.write_str("square"),
            MapFunc::Tanh => f.write_str("tanh"),
            MapFunc::Sin => f.write_str("sin"),
            MapFunc::Abs => f.write_str("abs"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverParams {
    /// Passes over the data for the iterative implementations.
    pub iters: u32,
    pub block_size: usize,
    pub history: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            iters: 20,
            block_size: 100,
            history: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcaParams {
    pub k: usize,
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl PcaParams {
    pub fn new(k: usize) -> Self {
        PcaParams {
            k,
            oversample: 10,
            power_iters: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub filters: usize,
    pub size: usize,
    pub separable: bool,
    pub seed: u64,
}

/// Operator kinds with their parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    DataSource {
        name: String,
        dtype: DataType,
        dim: Option<usize>,
    },
    LabelSource {
        name: String,
        classes: Option<usize>,
    },
    Tokenize,
    NGrams {
        n: usize,
    },
    /// Estimator: scans the corpus for the `k` most frequent grams.
    TopKFeatures {
        k: usize,
    },
    /// Slot 0: tokens, slot 1: vocabulary model.
    TermFrequency,
    /// Slot 0: features, slot 1: labels.
    LinearSolver(SolverParams),
    Pca(PcaParams),
    /// Slot 0: data, slot 1: fitted model.
    Apply,
    Convolution(ConvParams),
    GrayScale,
    ElementMap {
        func: MapFunc,
        repeat: u32,
    },
    Flatten,
    Gather,
}

impl OperatorKind {
    pub fn role(&self) -> Role {
        match self {
            OperatorKind::DataSource { .. } | OperatorKind::LabelSource { .. } => Role::Source,
            OperatorKind::TopKFeatures { .. }
            | OperatorKind::LinearSolver(_)
            | OperatorKind::Pca(_) => Role::Estimator,
            _ => Role::Transformer,
        }
    }

    /// Operators with more than one physical implementation.
    pub fn is_optimizable(&self) -> bool {
        matches!(
            self,
            OperatorKind::LinearSolver(_) | OperatorKind::Pca(_) | OperatorKind::Convolution(_)
        )
    }

    pub fn is_iterative(&self) -> bool {
        matches!(self, OperatorKind::LinearSolver(_))
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            OperatorKind::DataSource { .. } => "DataSource",
            OperatorKind::LabelSource { .. } => "LabelSource",
            OperatorKind::Tokenize => "Tokenize",
            OperatorKind::NGrams { .. } => "NGrams",
            OperatorKind::TopKFeatures { .. } => "TopKFeatures",
            OperatorKind::TermFrequency => "TermFrequency",
            OperatorKind::LinearSolver(_) => "LinearSolver",
            OperatorKind::Pca(_) => "PCA",
            OperatorKind::Apply => "Apply",
            OperatorKind::Convolution(_) => "Convolution",
            OperatorKind::GrayScale => "GrayScale",
            OperatorKind::ElementMap { .. } => "ElementMap",
            OperatorKind::Flatten => "Flatten",
            OperatorKind::Gather => "Gather",
        }
    }

    /// Number of fixed input slots, `None` for variadic [`OperatorKind::Gather`].
    pub fn arity(&self) -> Option<usize> {
        match self {
            OperatorKind::DataSource { .. } | OperatorKind::LabelSource { .. } => Some(0),
            OperatorKind::TermFrequency | OperatorKind::LinearSolver(_) | OperatorKind::Apply => {
                Some(2)
            }
            OperatorKind::Gather => None,
            _ => Some(1),
        }
    }

    /// Whether `ty` may feed input `slot`.
    pub fn accepts(&self, slot: usize, ty: DataType) -> bool {
        use DataType::*;
        match (self, slot) {
            (OperatorKind::Tokenize, 0) => ty == Text,
            (OperatorKind::NGrams { .. }, 0) | (OperatorKind::TopKFeatures { .. }, 0) => {
                ty == Tokens
            }
            (OperatorKind::TermFrequency, 0) => ty == Tokens,
            (OperatorKind::TermFrequency, 1) => ty == Model,
            (OperatorKind::LinearSolver(_), 0) => ty.is_vector(),
            (OperatorKind::LinearSolver(_), 1) => ty == Labels,
            (OperatorKind::Pca(_), 0) => ty == DenseVec,
            (OperatorKind::Apply, 0) => ty.is_vector(),
            (OperatorKind::Apply, 1) => ty == Model,
            (OperatorKind::Convolution(_), 0)
            | (OperatorKind::GrayScale, 0)
            | (OperatorKind::Flatten, 0) => ty == Image,
            (OperatorKind::ElementMap { .. }, 0) => ty == DenseVec,
            (OperatorKind::Gather, _) => ty.is_vector(),
            _ => false,
        }
    }

    /// The type expected in `slot`, for error messages.
    fn expected(&self, slot: usize) -> DataType {
        use DataType::*;
        [Text, Tokens, DenseVec, SparseVec, Image, Labels, Model]
            .into_iter()
            .find(|&t| self.accepts(slot, t))
            .unwrap_or(Text)
    }

    pub fn output_type(&self, inputs: &[DataType]) -> DataType {
        use DataType::*;
        match self {
            OperatorKind::DataSource { dtype, .. } => *dtype,
            OperatorKind::LabelSource { .. } => Labels,
            OperatorKind::Tokenize | OperatorKind::NGrams { .. } => Tokens,
            OperatorKind::TopKFeatures { .. }
            | OperatorKind::LinearSolver(_)
            | OperatorKind::Pca(_) => Model,
            OperatorKind::TermFrequency => SparseVec,
            OperatorKind::Apply | OperatorKind::ElementMap { .. } | OperatorKind::Flatten => {
                DenseVec
            }
            OperatorKind::Convolution(_) | OperatorKind::GrayScale => Image,
            OperatorKind::Gather => {
                if inputs.contains(&SparseVec) {
                    SparseVec
                } else {
                    DenseVec
                }
            }
        }
    }

    /// Canonical parameter string; two nodes with the same signature and the
    /// same inputs compute the same value.
    pub fn signature(&self) -> String {
        format!("{self:?}")
    }
}

/// A logical operator node.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalNode {
    pub id: NodeId,
    pub name: String,
    pub kind: OperatorKind,
    /// Iteration weight: passes the node makes over its inputs.
    pub weight: u32,
    /// Physical implementation, once resolved.
    pub implementation: Option<ImplId>,
}

impl LogicalNode {
    pub fn new(kind: OperatorKind) -> Self {
        let id = NodeId::fresh();
        let weight = match &kind {
            OperatorKind::LinearSolver(p) => p.iters.max(1),
            _ => 1,
        };
        LogicalNode {
            id,
            name: format!("{}{}", kind.short_name(), id.0),
            kind,
            weight,
            implementation: None,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_weight(mut self, weight: u32) -> Result<Self> {
        if weight == 0 {
            return Err(Error::InvalidGraph(format!(
                "{}: weight must be ≥ 1",
                self.name
            )));
        }
        if weight > 1 && !self.kind.is_iterative() {
            return Err(Error::InvalidGraph(format!(
                "{}: only iterative operators may have weight > 1",
                self.name
            )));
        }
        self.weight = weight;
        if let OperatorKind::LinearSolver(p) = &mut self.kind {
            p.iters = weight;
        }
        Ok(self)
    }

    pub fn with_implementation(mut self, imp: ImplId) -> Self {
        self.implementation = Some(imp);
        self
    }

    pub fn role(&self) -> Role {
        self.kind.role()
    }

    pub fn data_source(name: impl Into<String>, dtype: DataType) -> Self {
        let name = name.into();
        LogicalNode::new(OperatorKind::DataSource {
            name: name.clone(),
            dtype,
            dim: None,
        })
        .named(name)
    }

    pub fn dense_source(name: impl Into<String>, dim: usize) -> Self {
        let name = name.into();
        LogicalNode::new(OperatorKind::DataSource {
            name: name.clone(),
            dtype: DataType::DenseVec,
            dim: Some(dim),
        })
        .named(name)
    }

    pub fn label_source(name: impl Into<String>) -> Self {
        let name = name.into();
        LogicalNode::new(OperatorKind::LabelSource {
            name: name.clone(),
            classes: None,
        })
        .named(name)
    }

    pub fn tokenize() -> Self {
        LogicalNode::new(OperatorKind::Tokenize)
    }

    pub fn ngrams(n: usize) -> Self {
        LogicalNode::new(OperatorKind::NGrams { n })
    }

    pub fn top_k_features(k: usize) -> Self {
        LogicalNode::new(OperatorKind::TopKFeatures { k })
    }

    pub fn term_frequency() -> Self {
        LogicalNode::new(OperatorKind::TermFrequency)
    }

    pub fn linear_solver(params: SolverParams) -> Self {
        LogicalNode::new(OperatorKind::LinearSolver(params))
    }

    pub fn pca(params: PcaParams) -> Self {
        LogicalNode::new(OperatorKind::Pca(params))
    }

    pub fn apply() -> Self {
        LogicalNode::new(OperatorKind::Apply)
    }

    pub fn convolution(params: ConvParams) -> Self {
        LogicalNode::new(OperatorKind::Convolution(params))
    }

    pub fn element_map(func: MapFunc, repeat: u32) -> Self {
        LogicalNode::new(OperatorKind::ElementMap {
            func,
            repeat: repeat.max(1),
        })
    }

    pub fn gather() -> Self {
        LogicalNode::new(OperatorKind::Gather)
    }
}

/// Statistics of the dataset flowing along an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    /// Record count.
    pub n: u64,
    /// Feature dimensionality per record.
    pub d: usize,
    /// Average stored non-zeros per record; `s = d` when dense.
    pub s: f64,
    pub bytes_per_record: f64,
    /// Label or class count, where applicable.
    pub k: Option<usize>,
    /// `(side, channels)` for image records.
    pub image: Option<(usize, usize)>,
}

impl DatasetStats {
    pub fn dense(n: u64, d: usize) -> Self {
        DatasetStats {
            n,
            d,
            s: d as f64,
            bytes_per_record: 8.0 * d as f64,
            k: None,
            image: None,
        }
    }

    pub fn sparse(n: u64, d: usize, s: f64) -> Self {
        DatasetStats {
            n,
            d,
            s,
            bytes_per_record: 16.0 * s + 8.0,
            k: None,
            image: None,
        }
    }

    pub fn labels(n: u64, k: usize) -> Self {
        DatasetStats {
            k: Some(k),
            ..Self::dense(n, k)
        }
    }

    pub fn images(n: u64, side: usize, channels: usize) -> Self {
        let d = side * side * channels;
        DatasetStats {
            image: Some((side, channels)),
            ..Self::dense(n, d)
        }
    }

    pub fn is_sparse(&self) -> bool {
        self.s < self.d as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !(self.s > 0.0 && self.s <= self.d as f64) {
            return Err(Error::InvalidDimensions(format!(
                "stats need 0 < s ≤ d, got s = {}, d = {}",
                self.s, self.d
            )));
        }
        if self.n > 0 && !(self.bytes_per_record > 0.0) {
            return Err(Error::InvalidDimensions(
                "bytes per record must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Directed edge from producer to the `slot`-th input of the consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub slot: usize,
}

/// An immutable, validated pipeline DAG with exactly one sink.
#[derive(Debug, Clone)]
pub struct PipelineGraph {
    nodes: Arc<BTreeMap<NodeId, LogicalNode>>,
    edges: Arc<Vec<Edge>>,
    sink: NodeId,
}

impl PipelineGraph {
    /// Single-node pipeline starting at a source.
    pub fn source(node: LogicalNode) -> Result<Self> {
        if node.kind.arity() != Some(0) {
            return Err(Error::InvalidGraph(format!(
                "{} is not a source operator",
                node.name
            )));
        }
        let sink = node.id;
        Self::from_parts(vec![node], Vec::new(), sink)
    }

    /// Appends `node` consuming this pipeline's sink in slot 0.
    pub fn and_then(&self, node: LogicalNode) -> Result<Self> {
        self.and_then_with(node, &[])
    }

    /// Appends a multi-input node: this pipeline feeds slot 0 and `others`
    /// feed slots 1.. in order.
    pub fn and_then_with(&self, node: LogicalNode, others: &[&PipelineGraph]) -> Result<Self> {
        let mut inputs = vec![self];
        inputs.extend_from_slice(others);
        Self::join(node, &inputs)
    }

    /// Joins the outputs of several pipelines with a gather node.
    pub fn gather(pipelines: &[PipelineGraph]) -> Result<Self> {
        if pipelines.len() < 2 {
            return Err(Error::InvalidGraph(format!(
                "gather: need ≥ 2 pipelines, got {}",
                pipelines.len()
            )));
        }
        let refs: Vec<&PipelineGraph> = pipelines.iter().collect();
        Self::join(LogicalNode::gather(), &refs)
    }

    fn join(node: LogicalNode, inputs: &[&PipelineGraph]) -> Result<Self> {
        if let Some(arity) = node.kind.arity() {
            if arity != inputs.len() {
                return Err(Error::InvalidGraph(format!(
                    "{} takes {arity} inputs, got {}",
                    node.name,
                    inputs.len()
                )));
            }
        }
        let mut nodes: BTreeMap<NodeId, LogicalNode> = BTreeMap::new();
        let mut edges: BTreeSet<Edge> = BTreeSet::new();
        for (slot, g) in inputs.iter().enumerate() {
            let ty = g.output_type(g.sink);
            if !node.kind.accepts(slot, ty) {
                return Err(Error::TypeMismatch {
                    expected: node.kind.expected(slot),
                    found: ty,
                });
            }
            for (id, n) in g.nodes.iter() {
                nodes.entry(*id).or_insert_with(|| n.clone());
            }
            edges.extend(g.edges.iter().copied());
            edges.insert(Edge {
                from: g.sink,
                to: node.id,
                slot,
            });
        }
        let sink = node.id;
        nodes.insert(sink, node);
        Self::from_parts(
            nodes.into_values().collect(),
            edges.into_iter().collect(),
            sink,
        )
    }

    /// Builds and validates a graph from explicit parts.
    pub fn from_parts(nodes: Vec<LogicalNode>, edges: Vec<Edge>, sink: NodeId) -> Result<Self> {
        let mut map = BTreeMap::new();
        for n in nodes {
            if map.insert(n.id, n).is_some() {
                return Err(Error::InvalidGraph("duplicate node id".into()));
            }
        }
        let mut edges = edges;
        edges.sort_by_key(|e| (e.to, e.slot, e.from));
        edges.dedup();
        let g = PipelineGraph {
            nodes: Arc::new(map),
            edges: Arc::new(edges),
            sink,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.nodes.contains_key(&self.sink) {
            return Err(Error::UnknownNode(self.sink));
        }
        for e in self.edges.iter() {
            for id in [e.from, e.to] {
                if !self.nodes.contains_key(&id) {
                    return Err(Error::UnknownNode(id));
                }
            }
        }
        self.topo_order()?;
        for node in self.nodes.values() {
            let inputs = self.input_edges(node.id);
            for (i, e) in inputs.iter().enumerate() {
                if e.slot != i {
                    return Err(Error::InvalidGraph(format!(
                        "{}: input slots must be contiguous from 0",
                        node.name
                    )));
                }
            }
            match node.kind.arity() {
                Some(a) if a != inputs.len() => {
                    return Err(Error::InvalidGraph(format!(
                        "{} takes {a} inputs, got {}",
                        node.name,
                        inputs.len()
                    )))
                }
                None if inputs.len() < 2 => {
                    return Err(Error::InvalidGraph(format!(
                        "{}: gather needs in-degree ≥ 2",
                        node.name
                    )))
                }
                _ => {}
            }
            for e in &inputs {
                let ty = self.output_type(e.from);
                if !node.kind.accepts(e.slot, ty) {
                    return Err(Error::TypeMismatch {
                        expected: node.kind.expected(e.slot),
                        found: ty,
                    });
                }
            }
            let consumed = self.edges.iter().any(|e| e.from == node.id);
            if node.id == self.sink && consumed {
                return Err(Error::InvalidGraph("sink has consumers".into()));
            }
            if node.id != self.sink && !consumed {
                return Err(Error::InvalidGraph(format!(
                    "{} is a second sink; a pipeline has exactly one",
                    node.name
                )));
            }
        }
        Ok(())
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&LogicalNode> {
        self.nodes.get(&id).ok_or(Error::UnknownNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &LogicalNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn find(&self, name: &str) -> Option<&LogicalNode> {
        self.nodes.values().find(|n| n.name == name)
    }

    fn input_edges(&self, id: NodeId) -> Vec<Edge> {
        let mut v: Vec<Edge> = self.edges.iter().filter(|e| e.to == id).copied().collect();
        v.sort_by_key(|e| e.slot);
        v
    }

    /// Producers of `id`, in slot order.
    pub fn inputs(&self, id: NodeId) -> Vec<NodeId> {
        self.input_edges(id).into_iter().map(|e| e.from).collect()
    }

    /// Consumers of `id`, one entry per edge, sorted by consumer id.
    pub fn consumers(&self, id: NodeId) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self
            .edges
            .iter()
            .filter(|e| e.from == id)
            .map(|e| e.to)
            .collect();
        v.sort();
        v
    }

    pub fn output_type(&self, id: NodeId) -> DataType {
        let node = &self.nodes[&id];
        let inputs: Vec<DataType> = self
            .inputs(id)
            .into_iter()
            .map(|i| self.output_type(i))
            .collect();
        node.kind.output_type(&inputs)
    }

    /// Statically known per-record output dimension, where it can be inferred.
    pub fn output_dim(&self, id: NodeId) -> Option<usize> {
        let node = self.nodes.get(&id)?;
        let inputs = self.inputs(id);
        match &node.kind {
            OperatorKind::DataSource { dim, .. } => *dim,
            OperatorKind::LabelSource { classes, .. } => *classes,
            OperatorKind::TopKFeatures { k } => Some(*k),
            OperatorKind::TermFrequency => self.model_dim(inputs[1]),
            OperatorKind::ElementMap { .. } => self.output_dim(inputs[0]),
            OperatorKind::Apply => self.model_dim(inputs[1]),
            OperatorKind::Gather => inputs
                .iter()
                .map(|&i| self.output_dim(i))
                .sum::<Option<usize>>(),
            _ => None,
        }
    }

    fn model_dim(&self, model: NodeId) -> Option<usize> {
        let node = self.nodes.get(&model)?;
        match &node.kind {
            OperatorKind::TopKFeatures { k } => Some(*k),
            OperatorKind::Pca(p) => Some(p.k),
            OperatorKind::LinearSolver(_) => self.output_dim(self.inputs(model)[1]),
            _ => None,
        }
    }

    /// Topological order; ties broken by node id.
    pub fn topo_order(&self) -> Result<Vec<NodeId>> {
        let mut indeg: BTreeMap<NodeId, usize> = self.nodes.keys().map(|&k| (k, 0)).collect();
        for e in self.edges.iter() {
            *indeg.get_mut(&e.to).ok_or(Error::UnknownNode(e.to))? += 1;
        }
        let mut ready: BinaryHeap<Reverse<NodeId>> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&k, _)| Reverse(k))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(id)) = ready.pop() {
            order.push(id);
            for e in self.edges.iter().filter(|e| e.from == id) {
                let d = indeg.get_mut(&e.to).expect("edge target checked above");
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(e.to));
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = indeg
                .iter()
                .find(|(_, &d)| d > 0)
                .map(|(&k, _)| k)
                .unwrap_or(self.sink);
            return Err(Error::Cycle(stuck));
        }
        Ok(order)
    }

    /// Returns a copy with one node replaced (same id, same edges).
    pub fn with_node(&self, node: LogicalNode) -> Result<Self> {
        if !self.nodes.contains_key(&node.id) {
            return Err(Error::UnknownNode(node.id));
        }
        let mut nodes = (*self.nodes).clone();
        nodes.insert(node.id, node);
        let g = PipelineGraph {
            nodes: Arc::new(nodes),
            edges: self.edges.clone(),
            sink: self.sink,
        };
        g.validate()?;
        Ok(g)
    }

    #[cfg(test)]
    pub(crate) fn unchecked(nodes: Vec<LogicalNode>, edges: Vec<Edge>, sink: NodeId) -> Self {
        PipelineGraph {
            nodes: Arc::new(nodes.into_iter().map(|n| (n.id, n)).collect()),
            edges: Arc::new(edges),
            sink,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text() -> PipelineGraph {
        PipelineGraph::source(LogicalNode::data_source("docs", DataType::Text)).unwrap()
    }

    fn dense(d: usize) -> PipelineGraph {
        PipelineGraph::source(LogicalNode::dense_source("x", d)).unwrap()
    }

    #[test]
    fn and_then_appends() {
        let src = text();
        let g = src.and_then(LogicalNode::tokenize()).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.node(g.sink()).unwrap().kind, OperatorKind::Tokenize);
        assert_eq!(src.len(), 1);
    }

    #[test]
    fn branches_share_prefix() {
        let ab = text().and_then(LogicalNode::tokenize()).unwrap();
        let c = ab.and_then(LogicalNode::ngrams(1)).unwrap();
        let d = ab.and_then(LogicalNode::ngrams(2)).unwrap();
        let shared: Vec<_> = ab.topo_order().unwrap();
        assert_eq!(&c.topo_order().unwrap()[..2], &shared[..]);
        assert_eq!(&d.topo_order().unwrap()[..2], &shared[..]);
        assert_ne!(c.sink(), d.sink());
        assert_eq!(ab.topo_order().unwrap(), shared);
    }

    #[test]
    fn type_mismatch_names_both_types() {
        let img = PipelineGraph::source(LogicalNode::data_source("img", DataType::Image)).unwrap();
        let err = img.and_then(LogicalNode::tokenize()).unwrap_err();
        assert_eq!(err.to_string(), "type mismatch: Image ≠ Text");
    }

    #[test]
    fn gather_sums_dimensions() {
        let a = dense(4);
        let b = dense(6);
        let g = PipelineGraph::gather(&[a, b]).unwrap();
        assert_eq!(g.output_dim(g.sink()), Some(10));
        assert_eq!(g.output_type(g.sink()), DataType::DenseVec);
    }

    #[test]
    fn gather_dedups_shared_prefix() {
        let ab = dense(3)
            .and_then(LogicalNode::element_map(MapFunc::Square, 1))
            .unwrap();
        let c = ab
            .and_then(LogicalNode::element_map(MapFunc::Sin, 1))
            .unwrap();
        let d = ab
            .and_then(LogicalNode::element_map(MapFunc::Tanh, 1))
            .unwrap();
        let g = PipelineGraph::gather(&[c, d]).unwrap();
        assert_eq!(g.len(), 5);
    }

    #[test]
    fn gather_needs_two() {
        let err = PipelineGraph::gather(&[dense(2)]).unwrap_err();
        assert!(err.to_string().contains("need ≥ 2"), "{err}");
    }

    #[test]
    fn gather_rejects_non_vectors() {
        let t = text().and_then(LogicalNode::tokenize()).unwrap();
        assert!(PipelineGraph::gather(&[t, dense(2)]).is_err());
    }

    #[test]
    fn topo_order_chain_and_diamond() {
        let a = dense(2);
        let b = a
            .and_then(LogicalNode::element_map(MapFunc::Abs, 1))
            .unwrap();
        let c = b
            .and_then(LogicalNode::element_map(MapFunc::Sin, 1))
            .unwrap();
        let ids: Vec<_> = [a.sink(), b.sink(), c.sink()].into();
        assert_eq!(c.topo_order().unwrap(), ids);

        let left = a
            .and_then(LogicalNode::element_map(MapFunc::Square, 1))
            .unwrap();
        let right = a
            .and_then(LogicalNode::element_map(MapFunc::Tanh, 1))
            .unwrap();
        let d = PipelineGraph::gather(&[right.clone(), left.clone()]).unwrap();
        assert_eq!(
            d.topo_order().unwrap(),
            vec![a.sink(), left.sink(), right.sink(), d.sink()]
        );
    }

    #[test]
    fn back_edge_is_a_cycle() {
        let a = LogicalNode::element_map(MapFunc::Abs, 1);
        let b = LogicalNode::element_map(MapFunc::Sin, 1);
        let edges = vec![
            Edge {
                from: a.id,
                to: b.id,
                slot: 0,
            },
            Edge {
                from: b.id,
                to: a.id,
                slot: 0,
            },
        ];
        let (ia, ib) = (a.id, b.id);
        let g = PipelineGraph::unchecked(vec![a.clone(), b.clone()], edges.clone(), ib);
        assert!(matches!(g.topo_order(), Err(Error::Cycle(_))));
        let _ = ia;
        assert!(matches!(
            PipelineGraph::from_parts(vec![a, b], edges, ib),
            Err(Error::Cycle(_))
        ));
    }

    #[test]
    fn weights_only_on_iterative_nodes() {
        assert!(LogicalNode::tokenize().with_weight(3).is_err());
        let s = LogicalNode::linear_solver(SolverParams::default())
            .with_weight(5)
            .unwrap();
        assert_eq!(s.weight, 5);
        assert!(matches!(s.kind, OperatorKind::LinearSolver(p) if p.iters == 5));
    }

    #[test]
    fn solver_takes_features_and_labels() {
        let x = dense(5);
        let y = PipelineGraph::source(LogicalNode::label_source("y")).unwrap();
        let fit = x
            .and_then_with(LogicalNode::linear_solver(SolverParams::default()), &[&y])
            .unwrap();
        assert_eq!(fit.output_type(fit.sink()), DataType::Model);
        let bad = y.and_then_with(LogicalNode::linear_solver(SolverParams::default()), &[&x]);
        assert!(bad.is_err());
    }
}
