//! Treatment graphs: undirected, node-labeled, indexed by dense 1-based
//! treatment ids.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based treatment identifier, dense in `1..=catalog.len()`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TreatmentId(pub usize);

impl TreatmentId {
    /// Zero-based position in the catalog.
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for TreatmentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Undirected graph with a categorical label per node. Immutable after
/// construction; adjacency is symmetric by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    node_labels: Vec<usize>,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl LabeledGraph {
    pub fn new(node_labels: Vec<usize>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = node_labels.len();
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph {
                    id: 0,
                    reason: format!("edge ({a}, {b}) out of range for {n} nodes"),
                });
            }
            if a == b {
                return Err(Error::InvalidGraph {
                    id: 0,
                    reason: format!("self-loop at node {a}"),
                });
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::InvalidGraph {
                    id: 0,
                    reason: format!("duplicate edge ({}, {})", key.0, key.1),
                });
            }
            normalized.push(key);
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &normalized {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(LabeledGraph {
            node_labels,
            edges: normalized,
            neighbors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_labels.len()
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn max_label(&self) -> Option<usize> {
        self.node_labels.iter().copied().max()
    }

    /// Relabel nodes by `perm` (new index of old node i is `perm[i]`).
    /// Structure-preserving; used for invariance checks.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.node_count() {
            return Err(Error::Contract("permutation length mismatch".into()));
        }
        let mut labels = vec![0; perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            labels[new] = self.node_labels[old];
        }
        let edges = self
            .edges
            .iter()
            .map(|&(a, b)| (perm[a], perm[b]))
            .collect();
        LabeledGraph::new(labels, edges)
    }
}

/// Ordered treatment graphs; ids are dense 1..=len.
#[derive(Debug, Clone)]
pub struct TreatmentCatalog {
    graphs: Vec<LabeledGraph>,
    label_vocab: usize,
}

impl TreatmentCatalog {
    pub fn new(graphs: Vec<LabeledGraph>, label_vocab: usize) -> Result<Self> {
        if label_vocab == 0 {
            return Err(Error::Config("label_vocab must be positive".into()));
        }
        for (i, g) in graphs.iter().enumerate() {
            if let Some(max) = g.max_label() {
                if max >= label_vocab {
                    return Err(Error::InvalidGraph {
                        id: i + 1,
                        reason: format!("node label {max} >= label_vocab {label_vocab}"),
                    });
                }
            }
        }
        Ok(TreatmentCatalog {
            graphs,
            label_vocab,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn label_vocab(&self) -> usize {
        self.label_vocab
    }

    pub fn get(&self, id: TreatmentId) -> Result<&LabeledGraph> {
        if id.0 == 0 || id.0 > self.graphs.len() {
            return Err(Error::TreatmentOutOfRange {
                id: id.0,
                count: self.graphs.len(),
            });
        }
        Ok(&self.graphs[id.index()])
    }

    pub fn ids(&self) -> impl Iterator<Item = TreatmentId> {
        (1..=self.graphs.len()).map(TreatmentId)
    }

    pub fn graphs(&self) -> &[LabeledGraph] {
        &self.graphs
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CatalogDoc {
            label_vocab: self.label_vocab,
            graphs: self
                .graphs
                .iter()
                .enumerate()
                .map(|(i, g)| GraphRecord {
                    id: i + 1,
                    node_labels: g.node_labels().to_vec(),
                    edges: g.edges().iter().map(|&(a, b)| [a, b]).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Contract(e.to_string()))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let doc: CatalogDoc = serde_json::from_str(text)
            .map_err(|e| Error::schema(origin, format!("line {}", e.line()), e.to_string()))?;
        let mut graphs = Vec::with_capacity(doc.graphs.len());
        for (i, record) in doc.graphs.iter().enumerate() {
            if record.id != i + 1 {
                return Err(Error::schema(
                    origin,
                    format!("graph {}", record.id),
                    format!("ids must be dense and ordered; expected {}", i + 1),
                ));
            }
            let edges = record.edges.iter().map(|e| (e[0], e[1])).collect();
            let graph =
                LabeledGraph::new(record.node_labels.clone(), edges).map_err(|e| match e {
                    Error::InvalidGraph { reason, .. } => Error::InvalidGraph {
                        id: record.id,
                        reason,
                    },
                    other => other,
                })?;
            graphs.push(graph);
        }
        TreatmentCatalog::new(graphs, doc.label_vocab).map_err(|e| match e {
            Error::InvalidGraph { id, reason } => Error::schema(
                origin,
                format!("graph {id}"),
                reason,
            ),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::io::atomic_write(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct CatalogDoc {
    label_vocab: usize,
    graphs: Vec<GraphRecord>,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    id: usize,
    node_labels: Vec<usize>,
    edges: Vec<[usize; 2]>,
}

/// Graph-encoder hyperparameters. Defaults: 3 layers, 64-dim node states,
/// ReLU node activation, per-node softmax-over-features readout, and
/// layer-shared transformation matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub readout: ReadoutActivation,
    /// When true, each message-passing layer gets its own W and M.
    pub per_layer_weights: bool,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            layers: 3,
            hidden_dim: 64,
            readout: ReadoutActivation::SoftmaxOverFeatures,
            per_layer_weights: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutActivation {
    SoftmaxOverFeatures,
    Sigmoid,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_loops_duplicates_and_range() {
        assert!(LabeledGraph::new(vec![0, 1], vec![(0, 0)]).is_err());
        assert!(LabeledGraph::new(vec![0, 1], vec![(0, 1), (1, 0)]).is_err());
        assert!(LabeledGraph::new(vec![0, 1], vec![(0, 2)]).is_err());
        assert!(LabeledGraph::new(vec![0, 1], vec![(0, 1)]).is_ok());
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = LabeledGraph::new(vec![0, 1, 0], vec![(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[1]);
    }

    #[test]
    fn catalog_validates_labels_and_ids() {
        let g = LabeledGraph::new(vec![0, 3], vec![(0, 1)]).unwrap();
        assert!(TreatmentCatalog::new(vec![g.clone()], 3).is_err());
        let cat = TreatmentCatalog::new(vec![g], 4).unwrap();
        assert!(cat.get(TreatmentId(1)).is_ok());
        assert!(cat.get(TreatmentId(0)).is_err());
        assert!(cat.get(TreatmentId(2)).is_err());
    }

    #[test]
    fn catalog_json_round_trip() {
        let g1 = LabeledGraph::new(vec![0, 1, 2], vec![(0, 1), (1, 2)]).unwrap();
        let g2 = LabeledGraph::new(vec![2], vec![]).unwrap();
        let cat = TreatmentCatalog::new(vec![g1, g2], 3).unwrap();
        let text = cat.to_json().unwrap();
        let loaded = TreatmentCatalog::from_json(&text, "test").unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.graphs()[0], cat.graphs()[0]);
        assert_eq!(loaded.graphs()[1], cat.graphs()[1]);
    }

    #[test]
    fn loader_reports_offending_graph_id() {
        let text = r#"{
            "label_vocab": 2,
            "graphs": [
                {"id": 1, "node_labels": [0, 1], "edges": [[0, 1]]},
                {"id": 2, "node_labels": [0, 1], "edges": [[0, 0]]}
            ]
        }"#;
        let err = TreatmentCatalog::from_json(text, "test").unwrap_err();
        assert!(err.to_string().contains('2'), "{err}");
    }

    #[test]
    fn permutation_preserves_structure() {
        let g = LabeledGraph::new(vec![0, 1, 2], vec![(0, 1), (1, 2)]).unwrap();
        let p = g.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.node_labels(), &[1, 2, 0]);
        assert_eq!(p.neighbors(0), &[1, 2]);
    }
}
