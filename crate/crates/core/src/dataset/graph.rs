use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// One named undirected edge type. Edges are canonical `(u, v)` with
/// `u < v`, sorted and free of duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    pub name: String,
    pub edges: Vec<(usize, usize)>,
}

impl Relation {
    /// Canonicalizes arbitrary pairs: orders endpoints, drops self-loops and
    /// duplicates.
    pub fn from_pairs(name: impl Into<String>, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut edges: Vec<(usize, usize)> = pairs
            .into_iter()
            .filter(|(u, v)| u != v)
            .map(|(u, v)| (u.min(v), u.max(v)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Relation {
            name: name.into(),
            edges,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiRelationGraph {
    features: Tensor,
    labels: Vec<u8>,
    relations: Vec<Relation>,
}

impl MultiRelationGraph {
    pub fn new(features: Tensor, labels: Vec<u8>, relations: Vec<Relation>) -> Result<Self> {
        let n = features.rows();
        if features.shape().len() != 2 {
            return Err(Error::InvalidArgument("features must be a matrix".into()));
        }
        if labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidArgument(format!("label {l} is not 0 or 1")));
        }
        if !features.is_finite() {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        for rel in &relations {
            if rel.name.is_empty() || rel.name.contains(['/', '\\', '\t', '\n']) {
                return Err(Error::InvalidArgument(format!(
                    "relation name {:?} is not usable as a file name",
                    rel.name
                )));
            }
            for w in rel.edges.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidArgument(format!(
                        "relation {} edges are not sorted and unique",
                        rel.name
                    )));
                }
            }
            for &(u, v) in &rel.edges {
                if u >= v {
                    return Err(Error::InvalidArgument(format!(
                        "relation {} edge ({u}, {v}) is not canonical",
                        rel.name
                    )));
                }
                if v >= n {
                    return Err(Error::InvalidArgument(format!(
                        "relation {} edge ({u}, {v}) exceeds {n} nodes",
                        rel.name
                    )));
                }
            }
        }
        Ok(MultiRelationGraph {
            features,
            labels,
            relations,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation_names(&self) -> Vec<String> {
        self.relations.iter().map(|r| r.name.clone()).collect()
    }

    pub fn num_fraud(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn total_edges(&self) -> usize {
        self.relations.iter().map(|r| r.edges.len()).sum()
    }

    /// Per-column z-scoring. Constant columns are only centered.
    pub fn standardize_features(&mut self) {
        let (n, d) = (self.features.rows(), self.features.cols());
        if n == 0 {
            return;
        }
        let data = self.features.data_mut();
        for c in 0..d {
            let mean = (0..n).map(|r| data[r * d + c]).sum::<f64>() / n as f64;
            let var = (0..n).map(|r| (data[r * d + c] - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            for r in 0..n {
                let v = &mut data[r * d + c];
                *v -= mean;
                if sd > 0.0 {
                    *v /= sd;
                }
            }
        }
    }
}

/// Sorted adjacency lists per relation plus their union.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    per_relation: Vec<Vec<Vec<usize>>>,
    merged: Vec<Vec<usize>>,
}

impl NeighborIndex {
    pub fn new(graph: &MultiRelationGraph) -> Self {
        let n = graph.num_nodes();
        let per_relation: Vec<Vec<Vec<usize>>> = graph
            .relations()
            .iter()
            .map(|rel| {
                let mut lists = vec![Vec::new(); n];
                for &(u, v) in &rel.edges {
                    lists[u].push(v);
                    lists[v].push(u);
                }
                for l in &mut lists {
                    l.sort_unstable();
                }
                lists
            })
            .collect();
        let merged = (0..n)
            .map(|v| {
                let mut all: Vec<usize> = per_relation.iter().flat_map(|r| r[v].iter().copied()).collect();
                all.sort_unstable();
                all.dedup();
                all
            })
            .collect();
        NeighborIndex {
            per_relation,
            merged,
        }
    }

    pub fn num_relations(&self) -> usize {
        self.per_relation.len()
    }

    pub fn neighbors(&self, relation: usize, node: usize) -> &[usize] {
        &self.per_relation[relation][node]
    }

    /// Neighbors under any relation.
    pub fn merged(&self, node: usize) -> &[usize] {
        &self.merged[node]
    }
}
