//! Graph encoder ψ: message passing over node states followed by a
//! permutation-invariant readout.
//!
//! Per layer, node k is updated to relu(W·v_k + Σ_{m ∈ N(k)} M·v_m); an
//! isolated node receives relu(W·v_k). The readout sums all layers' states
//! per node (layer 0 included), applies the readout activation per node,
//! and sums over nodes. Batches of graphs are encoded in one pass by
//! stacking node states and using global index lists.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{GnnConfig, LabeledGraph, ReadoutActivation};
use crate::numerics::{IndexLists, ParamId, ParamStore, Tape, Tensor, Var};

/// Flattened view of one or more graphs, ready for stacked message passing.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    labels: Vec<usize>,
    neighbor_lists: IndexLists,
    graph_nodes: IndexLists,
}

impl GraphBatch {
    pub fn new(graphs: &[&LabeledGraph]) -> Result<Self> {
        let mut labels = Vec::new();
        let mut neighbor_lists = Vec::new();
        let mut graph_nodes = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for g in graphs {
            if g.node_count() == 0 {
                return Err(Error::Capability(
                    "cannot encode an empty treatment graph".into(),
                ));
            }
            labels.extend_from_slice(g.node_labels());
            for k in 0..g.node_count() {
                neighbor_lists.push(g.neighbors(k).iter().map(|&m| m + offset).collect());
            }
            graph_nodes.push((offset..offset + g.node_count()).collect());
            offset += g.node_count();
        }
        Ok(GraphBatch {
            labels,
            neighbor_lists: Arc::new(neighbor_lists),
            graph_nodes: Arc::new(graph_nodes),
        })
    }

    pub fn total_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn graph_count(&self) -> usize {
        self.graph_nodes.len()
    }

    /// One singleton list per node, pointing at its label's embedding row.
    fn label_lists(&self) -> IndexLists {
        Arc::new(self.labels.iter().map(|&l| vec![l]).collect())
    }
}

/// One message-passing update over stacked node states.
pub fn gnn_layer(
    tape: &mut Tape,
    states: Var,
    batch: &GraphBatch,
    w: Var,
    m: Var,
) -> Result<Var> {
    if tape.value(states).rows() != batch.total_nodes() {
        return Err(Error::shape(
            "gnn_layer",
            format!(
                "{} state rows vs {} nodes",
                tape.value(states).rows(),
                batch.total_nodes()
            ),
        ));
    }
    let own = tape.matmul(states, w)?;
    let neighbor_sum = tape.gather_rows_sum(states, Arc::clone(&batch.neighbor_lists))?;
    let messages = tape.matmul(neighbor_sum, m)?;
    let combined = tape.add(own, messages)?;
    tape.relu(combined)
}

/// Aggregate per-layer node states (layers 0..=C) into one vector per graph.
pub fn gnn_readout(
    tape: &mut Tape,
    per_layer_states: &[Var],
    batch: &GraphBatch,
    readout: ReadoutActivation,
) -> Result<Var> {
    let mut iter = per_layer_states.iter();
    let first = *iter
        .next()
        .ok_or_else(|| Error::Contract("readout needs at least the layer-0 states".into()))?;
    let mut total = first;
    for &s in iter {
        if tape.value(s).shape() != tape.value(total).shape() {
            return Err(Error::shape("gnn_readout", "inconsistent state shapes"));
        }
        total = tape.add(total, s)?;
    }
    let activated = match readout {
        ReadoutActivation::SoftmaxOverFeatures => tape.softmax(total)?,
        ReadoutActivation::Sigmoid => tape.sigmoid(total)?,
    };
    tape.gather_rows_sum(activated, Arc::clone(&batch.graph_nodes))
}

/// ψ: learned node embeddings per label plus message-passing weights.
#[derive(Debug, Clone)]
pub struct GnnEncoder {
    embedding: ParamId,
    layer_weights: Vec<(ParamId, ParamId)>,
    config: GnnConfig,
    label_vocab: usize,
}

impl GnnEncoder {
    /// Register freshly initialized parameters in `store`. Embedding rows
    /// and transformation matrices are drawn uniform in [-1/√D, 1/√D].
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        label_vocab: usize,
        config: GnnConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let d = config.hidden_dim;
        let bound = 1.0 / (d as f64).sqrt();
        let embedding =
            store.register_uniform(format!("{prefix}.embedding"), &[label_vocab, d], bound, rng)?;
        let weight_sets = if config.per_layer_weights {
            config.layers
        } else {
            usize::from(config.layers > 0)
        };
        let mut layer_weights = Vec::with_capacity(weight_sets);
        for c in 0..weight_sets {
            let suffix = if config.per_layer_weights {
                format!(".l{c}")
            } else {
                String::new()
            };
            let w = store.register_uniform(format!("{prefix}{suffix}.w"), &[d, d], bound, rng)?;
            let m = store.register_uniform(format!("{prefix}{suffix}.m"), &[d, d], bound, rng)?;
            layer_weights.push((w, m));
        }
        Ok(GnnEncoder {
            embedding,
            layer_weights,
            config,
            label_vocab,
        })
    }

    /// Rebind parameter ids by name from a loaded store.
    pub fn bind(
        store: &ParamStore,
        prefix: &str,
        label_vocab: usize,
        config: GnnConfig,
    ) -> Result<Self> {
        let missing =
            |name: &str| Error::Contract(format!("checkpoint is missing parameter {name}"));
        let name = format!("{prefix}.embedding");
        let embedding = store.lookup(&name).ok_or_else(|| missing(&name))?;
        let weight_sets = if config.per_layer_weights {
            config.layers
        } else {
            usize::from(config.layers > 0)
        };
        let mut layer_weights = Vec::with_capacity(weight_sets);
        for c in 0..weight_sets {
            let suffix = if config.per_layer_weights {
                format!(".l{c}")
            } else {
                String::new()
            };
            let wn = format!("{prefix}{suffix}.w");
            let mn = format!("{prefix}{suffix}.m");
            let w = store.lookup(&wn).ok_or_else(|| missing(&wn))?;
            let m = store.lookup(&mn).ok_or_else(|| missing(&mn))?;
            layer_weights.push((w, m));
        }
        Ok(GnnEncoder {
            embedding,
            layer_weights,
            config,
            label_vocab,
        })
    }

    pub fn config(&self) -> &GnnConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn embedding_param(&self) -> ParamId {
        self.embedding
    }

    fn weights_for_layer(&self, c: usize) -> (ParamId, ParamId) {
        if self.config.per_layer_weights {
            self.layer_weights[c]
        } else {
            self.layer_weights[0]
        }
    }

    /// Encode several graphs at once; row g of the result is ψ(graphs[g]).
    pub fn encode_batch(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        graphs: &[&LabeledGraph],
    ) -> Result<Var> {
        for g in graphs {
            if let Some(max) = g.max_label() {
                if max >= self.label_vocab {
                    return Err(Error::Contract(format!(
                        "node label {max} outside embedding vocabulary {}",
                        self.label_vocab
                    )));
                }
            }
        }
        let batch = GraphBatch::new(graphs)?;
        let table = tape.param(store, self.embedding)?;
        let initial = tape.gather_rows_sum(table, batch.label_lists())?;

        let mut states = vec![initial];
        for c in 0..self.config.layers {
            let (w_id, m_id) = self.weights_for_layer(c);
            let w = tape.param(store, w_id)?;
            let m = tape.param(store, m_id)?;
            let next = gnn_layer(tape, *states.last().unwrap(), &batch, w, m)?;
            states.push(next);
        }
        gnn_readout(tape, &states, &batch, self.config.readout)
    }

    /// ψ(G) as a plain value.
    pub fn encode_treatment(&self, store: &ParamStore, graph: &LabeledGraph) -> Result<Tensor> {
        let mut tape = Tape::new();
        let out = self.encode_batch(&mut tape, store, &[graph])?;
        Ok(Tensor::vector(tape.value(out).row(0).to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_matrix(d: usize) -> Tensor {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        Tensor::matrix(d, d, data).unwrap()
    }

    #[test]
    fn isolated_node_sees_only_its_own_state() {
        // single node, no edges, W = I: relu([1, -1]) = [1, 0]
        let g = LabeledGraph::new(vec![0], vec![]).unwrap();
        let batch = GraphBatch::new(&[&g]).unwrap();
        let mut tape = Tape::new();
        let states = tape
            .constant(Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap())
            .unwrap();
        let w = tape.constant(identity_matrix(2)).unwrap();
        let m = tape.constant(identity_matrix(2)).unwrap();
        let out = gnn_layer(&mut tape, states, &batch, w, m).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 0.0]);
    }

    #[test]
    fn zero_w_identity_m_swaps_neighbor_states_on_a_path() {
        let g = LabeledGraph::new(vec![0, 0], vec![(0, 1)]).unwrap();
        let batch = GraphBatch::new(&[&g]).unwrap();
        let mut tape = Tape::new();
        let states = tape
            .constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let w = tape.constant(Tensor::matrix(2, 2, vec![0.0; 4]).unwrap()).unwrap();
        let m = tape.constant(identity_matrix(2)).unwrap();
        let out = gnn_layer(&mut tape, states, &batch, w, m).unwrap();
        assert_eq!(tape.value(out).data(), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn readout_of_zero_states_with_softmax_is_uniform_sum() {
        let g = LabeledGraph::new(vec![0], vec![]).unwrap();
        let batch = GraphBatch::new(&[&g]).unwrap();
        let mut tape = Tape::new();
        let zeros = tape.constant(Tensor::matrix(1, 4, vec![0.0; 4]).unwrap()).unwrap();
        let out = gnn_readout(
            &mut tape,
            &[zeros],
            &batch,
            ReadoutActivation::SoftmaxOverFeatures,
        )
        .unwrap();
        assert_eq!(tape.value(out).data(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn two_identical_isolated_nodes_double_the_readout() {
        let single = LabeledGraph::new(vec![0], vec![]).unwrap();
        let double = LabeledGraph::new(vec![0, 0], vec![]).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = GnnEncoder::register(
            &mut store,
            "psi",
            2,
            GnnConfig {
                layers: 2,
                hidden_dim: 4,
                ..GnnConfig::default()
            },
            &mut rng,
        )
        .unwrap();
        let one = enc.encode_treatment(&store, &single).unwrap();
        let two = enc.encode_treatment(&store, &double).unwrap();
        for (a, b) in one.data().iter().zip(two.data()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_layers_reads_out_initial_embeddings() {
        let g = LabeledGraph::new(vec![1], vec![]).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = GnnEncoder::register(
            &mut store,
            "psi",
            3,
            GnnConfig {
                layers: 0,
                hidden_dim: 4,
                readout: ReadoutActivation::Sigmoid,
                per_layer_weights: false,
            },
            &mut rng,
        )
        .unwrap();
        let out = enc.encode_treatment(&store, &g).unwrap();
        let row = store.value(enc.embedding_param()).row(1).to_vec();
        for (o, r) in out.data().iter().zip(&row) {
            assert!((o - 1.0 / (1.0 + (-r).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_graph_is_an_invalid_treatment() {
        let g = LabeledGraph::new(vec![], vec![]).unwrap();
        assert!(GraphBatch::new(&[&g]).is_err());
    }

    #[test]
    fn permuted_graphs_encode_identically() {
        let g = LabeledGraph::new(vec![0, 1, 2, 1], vec![(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let p = g.permuted(&[3, 1, 0, 2]).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc =
            GnnEncoder::register(&mut store, "psi", 3, GnnConfig::default(), &mut rng).unwrap();
        let a = enc.encode_treatment(&store, &g).unwrap();
        let b = enc.encode_treatment(&store, &p).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
