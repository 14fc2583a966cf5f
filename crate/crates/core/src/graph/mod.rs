//! Graphs, datasets and block-diagonal batching.

mod split;
mod synthetic;
mod tudataset;

use std::sync::Arc;

use crate::error::{GrdlError, Result};
use crate::tensor::Tensor;

pub use split::{kfold_splits, DatasetSplit};
pub use synthetic::generate_synthetic;
pub use tudataset::{parse_tudataset, write_tudataset};

/// Undirected graph with node features and a class label.
///
/// Edges are stored once, canonically as `(u, v)` with `u < v`; self-loops
/// are never stored since the message-passing adjacency adds exactly one per
/// node.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    label: usize,
    /// Raw node labels (dataset-level indices), kept so the graph can be
    /// written back out in its source format.
    node_labels: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a graph, canonicalizing and deduplicating `edges` and dropping
    /// self-loops.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Tensor,
        label: usize,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(GrdlError::CorruptDataset("graph with zero nodes".into()));
        }
        if features.rows() != num_nodes {
            return Err(GrdlError::CorruptDataset(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(GrdlError::CorruptDataset(format!(
                    "edge ({u}, {v}) in a graph with {num_nodes} nodes"
                )));
            }
            if u != v {
                canon.push((u.min(v), u.max(v)));
            }
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Graph {
            num_nodes,
            edges: canon,
            features,
            label,
            node_labels: None,
        })
    }

    pub(crate) fn with_node_labels(mut self, labels: Vec<usize>) -> Self {
        debug_assert_eq!(labels.len(), self.num_nodes);
        self.node_labels = Some(labels);
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn node_labels(&self) -> Option<&[usize]> {
        self.node_labels.as_deref()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Dense symmetric adjacency `A` (no self-loops).
    pub fn dense_adjacency(&self) -> Tensor {
        let n = self.num_nodes;
        let mut a = Tensor::zeros(n, n);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    /// Dense `Ã = A + I`.
    pub fn dense_self_looped(&self) -> Tensor {
        let mut a = self.dense_adjacency();
        for i in 0..self.num_nodes {
            a.set(i, i, 1.0);
        }
        a
    }

    pub fn self_looped(&self) -> Adjacency {
        Adjacency::self_looped(self.num_nodes, &self.edges)
    }

    /// Relabels nodes: new node `i` is old node `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.num_nodes);
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let edges = self.edges.iter().map(|&(u, v)| (inverse[u], inverse[v]));
        let mut g = Graph::new(
            self.num_nodes,
            edges,
            self.features.permute_rows(perm),
            self.label,
        )
        .expect("permutation preserves validity");
        g.node_labels = self
            .node_labels
            .as_ref()
            .map(|l| perm.iter().map(|&old| l[old]).collect());
        g
    }
}

/// Square 0/1 sparse matrix in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl Adjacency {
    /// `A + I` for an undirected edge list over `n` nodes.
    pub fn self_looped(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(u, v) in edges {
            rows[u].push(v);
            rows[v].push(u);
        }
        Self::from_rows(rows)
    }

    fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }
        Adjacency { n, row_ptr, cols }
    }

    /// Block-diagonal concatenation.
    pub fn block_diag(blocks: &[Adjacency]) -> Self {
        let n: usize = blocks.iter().map(|b| b.n).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        let mut offset = 0;
        for b in blocks {
            for r in 0..b.n {
                cols.extend(b.row(r).iter().map(|c| c + offset));
                row_ptr.push(cols.len());
            }
            offset += b.n;
        }
        Adjacency { n, row_ptr, cols }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.n, self.n);
        for r in 0..self.n {
            for &c in self.row(r) {
                t.set(r, c, 1.0);
            }
        }
        t
    }

    /// `self · x` for dense `x`.
    pub fn matmul(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.n {
            return Err(GrdlError::shape(
                "aggregate",
                format!("{}x{} adjacency · {:?}", self.n, self.n, x.shape()),
            ));
        }
        let d = x.cols();
        let mut out = Tensor::zeros(self.n, d);
        for r in 0..self.n {
            let dst = out.row_mut(r);
            for &c in self.row(r) {
                for (o, v) in dst.iter_mut().zip(x.row(c)) {
                    *o += v;
                }
            }
        }
        Ok(out)
    }

    /// `acc += selfᵀ · g`.
    pub(crate) fn transpose_matmul_acc(&self, g: &Tensor, acc: &mut Tensor) {
        for r in 0..self.n {
            for &c in self.row(r) {
                let src = g.row(r).to_vec();
                for (o, v) in acc.row_mut(c).iter_mut().zip(&src) {
                    *o += v;
                }
            }
        }
    }
}

/// Graphs stacked into one block-diagonal system.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    adjacency: Arc<Adjacency>,
    features: Tensor,
    indicator: Vec<usize>,
    offsets: Vec<usize>,
    labels: Vec<usize>,
}

impl GraphBatch {
    pub fn adjacency(&self) -> &Arc<Adjacency> {
        &self.adjacency
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    /// Graph index (position within the batch) of every stacked node.
    pub fn indicator(&self) -> &[usize] {
        &self.indicator
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_graphs(&self) -> usize {
        self.labels.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.indicator.len()
    }

    /// Row range of graph `i` inside the stacked matrices.
    pub fn node_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

/// Stacks graphs into a block-diagonal `Ã = A + I` and row-stacked features.
pub fn make_batch<'a>(graphs: impl IntoIterator<Item = &'a Graph>) -> Result<GraphBatch> {
    let graphs: Vec<&Graph> = graphs.into_iter().collect();
    let Some(first) = graphs.first() else {
        return Err(GrdlError::Batch("empty graph list".into()));
    };
    let dim = first.feature_dim();
    let mut blocks = Vec::with_capacity(graphs.len());
    let mut feats = Vec::with_capacity(graphs.len());
    let mut indicator = Vec::new();
    let mut offsets = vec![0];
    let mut labels = Vec::with_capacity(graphs.len());
    for (i, g) in graphs.iter().enumerate() {
        if g.feature_dim() != dim {
            return Err(GrdlError::Batch(format!(
                "graph {i} has feature dimension {}, expected {dim}",
                g.feature_dim()
            )));
        }
        blocks.push(g.self_looped());
        feats.push(&g.features);
        indicator.extend(std::iter::repeat_n(i, g.num_nodes));
        offsets.push(indicator.len());
        labels.push(g.label);
    }
    Ok(GraphBatch {
        adjacency: Arc::new(Adjacency::block_diag(&blocks)),
        features: Tensor::vstack(&feats)?,
        indicator,
        offsets,
        labels,
    })
}

/// Symmetric-normalized aggregation `D̂^{-1/2} Ã D̂^{-1/2} X` with
/// `D̂ = diag(Ã·1)`.
pub fn normalized_aggregate(graph: &Graph) -> Tensor {
    normalized_aggregate_dense(&graph.dense_self_looped(), graph.features())
}

/// Same as [`normalized_aggregate`] for an explicit self-looped adjacency.
/// Every row of `a_tilde` must have a positive sum.
pub fn normalized_aggregate_dense(a_tilde: &Tensor, x: &Tensor) -> Tensor {
    let n = a_tilde.rows();
    let deg: Vec<f64> = (0..n).map(|i| a_tilde.row(i).iter().sum()).collect();
    let mut out = Tensor::zeros(n, x.cols());
    for i in 0..n {
        for j in 0..n {
            let w = a_tilde.get(i, j);
            if w == 0.0 {
                continue;
            }
            let coef = w / (deg[i] * deg[j]).sqrt();
            for (o, v) in out.row_mut(i).iter_mut().zip(x.row(j)) {
                *o += coef * v;
            }
        }
    }
    out
}

/// A labelled collection of graphs with a common feature layout.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    /// Original label value of each contiguous class index.
    pub class_values: Vec<i64>,
    /// Original node-label values when features include a one-hot block.
    pub node_label_values: Option<Vec<i64>>,
    /// Number of real-valued attribute columns appended after the one-hot block.
    pub attribute_dim: usize,
}

impl Dataset {
    /// Wraps in-memory graphs whose labels are already contiguous class indices.
    pub fn from_graphs(name: impl Into<String>, graphs: Vec<Graph>) -> Result<Self> {
        let num_classes = graphs.iter().map(|g| g.label + 1).max().unwrap_or(0);
        let dim = graphs.first().map(|g| g.feature_dim()).unwrap_or(0);
        if graphs.iter().any(|g| g.feature_dim() != dim) {
            return Err(GrdlError::Batch("mixed feature dimensions".into()));
        }
        Ok(Dataset {
            name: name.into(),
            graphs,
            num_classes,
            class_values: (0..num_classes as i64).collect(),
            node_label_values: None,
            attribute_dim: dim,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map(|g| g.feature_dim()).unwrap_or(0)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&Graph> {
        indices.iter().map(|&i| &self.graphs[i]).collect()
    }

    /// (min, median, max) node counts over `indices`.
    pub fn node_count_stats(&self, indices: &[usize]) -> (usize, f64, usize) {
        let mut counts: Vec<usize> = indices.iter().map(|&i| self.graphs[i].num_nodes).collect();
        counts.sort_unstable();
        let k = counts.len();
        let median = if k % 2 == 1 {
            counts[k / 2] as f64
        } else {
            (counts[k / 2 - 1] + counts[k / 2]) as f64 / 2.0
        };
        (counts[0], median, counts[k - 1])
    }
}
