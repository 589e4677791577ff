//! Outcome model: covariate encoder φ, treatment encoder ψ (graph
//! encoder, one-hot, or learned embedding table), and prediction head g
//! over the concatenated representations.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::GnnEncoder;
use crate::graph::{GnnConfig, TreatmentCatalog, TreatmentId};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

/// Feed-forward network shape: ReLU between layers, identity output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub layers: usize,
}

impl MlpConfig {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden_dim: 64,
            output_dim,
            layers: 3,
        }
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        assert!(self.layers >= 1, "MlpConfig requires at least one layer");
        let mut dims = Vec::with_capacity(self.layers);
        let mut input = self.input_dim;
        for l in 0..self.layers {
            let out = if l + 1 == self.layers {
                self.output_dim
            } else {
                self.hidden_dim
            };
            dims.push((input, out));
            input = out;
        }
        dims
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    config: MlpConfig,
}

impl Mlp {
    /// Weights and biases drawn uniform in [-1/√fan_in, 1/√fan_in].
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        config: MlpConfig,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(config.layers);
        for (l, (fan_in, fan_out)) in config.layer_dims().into_iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = store.register_uniform(
                format!("{prefix}.l{l}.w"),
                &[fan_in, fan_out],
                bound,
                rng,
            )?;
            let b =
                store.register_uniform(format!("{prefix}.l{l}.b"), &[fan_out], bound, rng)?;
            layers.push((w, b));
        }
        Ok(Mlp { layers, config })
    }

    pub fn bind(store: &ParamStore, prefix: &str, config: MlpConfig) -> Result<Self> {
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let wn = format!("{prefix}.l{l}.w");
            let bn = format!("{prefix}.l{l}.b");
            let w = store
                .lookup(&wn)
                .ok_or_else(|| Error::Contract(format!("checkpoint is missing parameter {wn}")))?;
            let b = store
                .lookup(&bn)
                .ok_or_else(|| Error::Contract(format!("checkpoint is missing parameter {bn}")))?;
            layers.push((w, b));
        }
        Ok(Mlp { layers, config })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    /// Batched forward over row-stacked inputs (B × input_dim).
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        if tape.value(x).rank() != 2 || tape.value(x).cols() != self.config.input_dim {
            return Err(Error::shape(
                "mlp_forward",
                format!(
                    "{:?} vs input_dim {}",
                    tape.value(x).shape(),
                    self.config.input_dim
                ),
            ));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (l, (w_id, b_id)) in self.layers.iter().enumerate() {
            let w = tape.param(store, *w_id)?;
            let b = tape.param(store, *b_id)?;
            let lin = tape.matmul(h, w)?;
            h = tape.add_bias(lin, b)?;
            if l != last {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// Standard basis vector for treatment `t` in a catalog of size `n`.
pub fn treatment_one_hot(t: TreatmentId, n_treatments: usize) -> Result<Tensor> {
    if t.0 == 0 || t.0 > n_treatments {
        return Err(Error::TreatmentOutOfRange {
            id: t.0,
            count: n_treatments,
        });
    }
    let mut data = vec![0.0; n_treatments];
    data[t.index()] = 1.0;
    Ok(Tensor::vector(data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiMode {
    GraphEncoder,
    OneHot,
    EmbeddingTable,
}

/// Treatment-representation branch. Only the graph encoder can represent
/// treatments that were unseen during training.
#[derive(Debug, Clone)]
pub enum PsiEncoder {
    Graph(GnnEncoder),
    OneHot { n_treatments: usize },
    Embedding { table: ParamId, dim: usize, n_treatments: usize },
}

impl PsiEncoder {
    pub fn mode(&self) -> PsiMode {
        match self {
            PsiEncoder::Graph(_) => PsiMode::GraphEncoder,
            PsiEncoder::OneHot { .. } => PsiMode::OneHot,
            PsiEncoder::Embedding { .. } => PsiMode::EmbeddingTable,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            PsiEncoder::Graph(enc) => enc.output_dim(),
            PsiEncoder::OneHot { n_treatments } => *n_treatments,
            PsiEncoder::Embedding { dim, .. } => *dim,
        }
    }

    /// Representations for a batch of treatment ids, one row per id.
    pub fn encode_ids(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ids: &[TreatmentId],
        catalog: &TreatmentCatalog,
    ) -> Result<Var> {
        match self {
            PsiEncoder::Graph(enc) => {
                let distinct: Vec<TreatmentId> = {
                    let set: BTreeSet<TreatmentId> = ids.iter().copied().collect();
                    set.into_iter().collect()
                };
                let graphs: Vec<&crate::graph::LabeledGraph> = distinct
                    .iter()
                    .map(|&t| catalog.get(t))
                    .collect::<Result<_>>()?;
                let encoded = enc.encode_batch(tape, store, &graphs)?;
                let position: std::collections::BTreeMap<TreatmentId, usize> = distinct
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| (t, i))
                    .collect();
                let lists: Vec<Vec<usize>> =
                    ids.iter().map(|t| vec![position[t]]).collect();
                tape.gather_rows_sum(encoded, Arc::new(lists))
            }
            PsiEncoder::OneHot { n_treatments } => {
                let mut data = Vec::with_capacity(ids.len() * n_treatments);
                for &t in ids {
                    data.extend_from_slice(treatment_one_hot(t, *n_treatments)?.data());
                }
                let value = Tensor::matrix(ids.len(), *n_treatments, data)?;
                tape.constant(value)
            }
            PsiEncoder::Embedding { table, n_treatments, .. } => {
                let mut lists = Vec::with_capacity(ids.len());
                for &t in ids {
                    if t.0 == 0 || t.0 > *n_treatments {
                        return Err(Error::TreatmentOutOfRange {
                            id: t.0,
                            count: *n_treatments,
                        });
                    }
                    lists.push(vec![t.index()]);
                }
                let table = tape.param(store, *table)?;
                tape.gather_rows_sum(table, Arc::new(lists))
            }
        }
    }
}

/// Architecture description; enough to rebuild a model around a loaded
/// checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub covariate_dim: usize,
    pub n_treatments: usize,
    pub label_vocab: usize,
    pub psi_mode: PsiMode,
    pub gnn: GnnConfig,
    /// φ output width; ψ's embedding-table width reuses this value.
    pub rep_dim: usize,
    pub hidden_dim: usize,
    pub phi_layers: usize,
    pub g_layers: usize,
}

impl ModelConfig {
    pub fn new(covariate_dim: usize, n_treatments: usize, label_vocab: usize) -> Self {
        ModelConfig {
            covariate_dim,
            n_treatments,
            label_vocab,
            psi_mode: PsiMode::GraphEncoder,
            gnn: GnnConfig::default(),
            rep_dim: 64,
            hidden_dim: 64,
            phi_layers: 3,
            g_layers: 3,
        }
    }

    fn phi_config(&self) -> MlpConfig {
        MlpConfig {
            input_dim: self.covariate_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.rep_dim,
            layers: self.phi_layers,
        }
    }

    fn psi_dim(&self) -> usize {
        match self.psi_mode {
            PsiMode::GraphEncoder => self.gnn.hidden_dim,
            PsiMode::OneHot => self.n_treatments,
            PsiMode::EmbeddingTable => self.rep_dim,
        }
    }

    fn g_config(&self) -> MlpConfig {
        MlpConfig {
            input_dim: self.rep_dim + self.psi_dim(),
            hidden_dim: self.hidden_dim,
            output_dim: 1,
            layers: self.g_layers,
        }
    }
}

/// The trainable triple (φ, ψ, g) plus its parameter store.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub store: ParamStore,
    phi: Mlp,
    psi: PsiEncoder,
    g: Mlp,
    config: ModelConfig,
    observed_treatments: Option<BTreeSet<TreatmentId>>,
}

impl ModelBundle {
    /// Fresh model with seed-determined initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = Mlp::register(&mut store, "phi", config.phi_config(), &mut rng)?;
        let psi = match config.psi_mode {
            PsiMode::GraphEncoder => PsiEncoder::Graph(GnnEncoder::register(
                &mut store,
                "psi",
                config.label_vocab,
                config.gnn,
                &mut rng,
            )?),
            PsiMode::OneHot => PsiEncoder::OneHot {
                n_treatments: config.n_treatments,
            },
            PsiMode::EmbeddingTable => {
                let bound = 1.0 / (config.rep_dim as f64).sqrt();
                let table = store.register_uniform(
                    "psi.table",
                    &[config.n_treatments, config.rep_dim],
                    bound,
                    &mut rng,
                )?;
                PsiEncoder::Embedding {
                    table,
                    dim: config.rep_dim,
                    n_treatments: config.n_treatments,
                }
            }
        };
        let g = Mlp::register(&mut store, "g", config.g_config(), &mut rng)?;
        Ok(ModelBundle {
            store,
            phi,
            psi,
            g,
            config,
            observed_treatments: None,
        })
    }

    /// Rebuild around a loaded checkpoint, binding parameters by name.
    pub fn from_checkpoint(
        config: ModelConfig,
        store: ParamStore,
        observed_treatments: Option<BTreeSet<TreatmentId>>,
    ) -> Result<Self> {
        let phi = Mlp::bind(&store, "phi", config.phi_config())?;
        let psi = match config.psi_mode {
            PsiMode::GraphEncoder => PsiEncoder::Graph(GnnEncoder::bind(
                &store,
                "psi",
                config.label_vocab,
                config.gnn,
            )?),
            PsiMode::OneHot => PsiEncoder::OneHot {
                n_treatments: config.n_treatments,
            },
            PsiMode::EmbeddingTable => {
                let table = store.lookup("psi.table").ok_or_else(|| {
                    Error::Contract("checkpoint is missing parameter psi.table".into())
                })?;
                PsiEncoder::Embedding {
                    table,
                    dim: config.rep_dim,
                    n_treatments: config.n_treatments,
                }
            }
        };
        let g = Mlp::bind(&store, "g", config.g_config())?;
        Ok(ModelBundle {
            store,
            phi,
            psi,
            g,
            config,
            observed_treatments,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn psi(&self) -> &PsiEncoder {
        &self.psi
    }

    pub fn phi(&self) -> &Mlp {
        &self.phi
    }

    pub fn g(&self) -> &Mlp {
        &self.g
    }

    pub fn psi_mode(&self) -> PsiMode {
        self.psi.mode()
    }

    pub fn zero_shot_capable(&self) -> bool {
        matches!(self.psi, PsiEncoder::Graph(_))
    }

    pub fn observed_treatments(&self) -> Option<&BTreeSet<TreatmentId>> {
        self.observed_treatments.as_ref()
    }

    /// Record which treatments appeared in training data; prediction for
    /// other ids is then a capability error for the non-graph ψ modes.
    pub fn set_observed_treatments(&mut self, observed: BTreeSet<TreatmentId>) {
        self.observed_treatments = Some(observed);
    }

    fn ensure_representable(&self, ids: &[TreatmentId]) -> Result<()> {
        if self.zero_shot_capable() {
            return Ok(());
        }
        if let Some(observed) = &self.observed_treatments {
            if let Some(unseen) = ids.iter().find(|t| !observed.contains(t)) {
                return Err(Error::Capability(format!(
                    "treatment {unseen} was not observed in training; the {:?} \
                     representation cannot encode unseen treatments",
                    self.psi_mode()
                )));
            }
        }
        Ok(())
    }

    /// Forward pass for a training batch. Returns (φ reps, ψ reps,
    /// predictions as a B×1 matrix).
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        covariates: &Tensor,
        ids: &[TreatmentId],
        catalog: &TreatmentCatalog,
    ) -> Result<(Var, Var, Var)> {
        if covariates.rows() != ids.len() {
            return Err(Error::shape(
                "forward_batch",
                format!("{} covariate rows vs {} ids", covariates.rows(), ids.len()),
            ));
        }
        self.ensure_representable(ids)?;
        let x = tape.constant(covariates.clone())?;
        let phi_out = self.phi.forward(tape, &self.store, x)?;
        let psi_out = self.psi.encode_ids(tape, &self.store, ids, catalog)?;
        let joint = tape.concat(phi_out, psi_out)?;
        let pred = self.g.forward(tape, &self.store, joint)?;
        Ok((phi_out, psi_out, pred))
    }

    /// Predictions for every (unit, treatment) pair: row u, column t.
    /// Encodes units and treatments once and batches the head.
    pub fn predict_block(
        &self,
        covariates: &Tensor,
        treatments: &[TreatmentId],
        catalog: &TreatmentCatalog,
    ) -> Result<Tensor> {
        self.ensure_representable(treatments)?;
        let units = covariates.rows();
        let mut tape = Tape::new();
        let x = tape.constant(covariates.clone())?;
        let phi_out = self.phi.forward(&mut tape, &self.store, x)?;
        let psi_out = self
            .psi
            .encode_ids(&mut tape, &self.store, treatments, catalog)?;

        let pair_count = units * treatments.len();
        let mut unit_lists = Vec::with_capacity(pair_count);
        let mut treatment_lists = Vec::with_capacity(pair_count);
        for u in 0..units {
            for t in 0..treatments.len() {
                unit_lists.push(vec![u]);
                treatment_lists.push(vec![t]);
            }
        }
        let phi_rows = tape.gather_rows_sum(phi_out, Arc::new(unit_lists))?;
        let psi_rows = tape.gather_rows_sum(psi_out, Arc::new(treatment_lists))?;
        let joint = tape.concat(phi_rows, psi_rows)?;
        let pred = self.g.forward(&mut tape, &self.store, joint)?;
        Tensor::matrix(units, treatments.len(), tape.value(pred).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabeledGraph;

    fn tiny_catalog(n: usize) -> TreatmentCatalog {
        let graphs = (0..n)
            .map(|i| {
                LabeledGraph::new(vec![i % 3, (i + 1) % 3], vec![(0, 1)]).unwrap()
            })
            .collect();
        TreatmentCatalog::new(graphs, 3).unwrap()
    }

    #[test]
    fn one_hot_basis_vectors() {
        assert_eq!(
            treatment_one_hot(TreatmentId(1), 3).unwrap().data(),
            &[1.0, 0.0, 0.0]
        );
        assert_eq!(
            treatment_one_hot(TreatmentId(3), 3).unwrap().data(),
            &[0.0, 0.0, 1.0]
        );
        assert!(treatment_one_hot(TreatmentId(4), 3).is_err());
        assert!(treatment_one_hot(TreatmentId(0), 3).is_err());
    }

    #[test]
    fn zero_weights_make_zero_phi() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::register(
            &mut store,
            "f",
            MlpConfig {
                input_dim: 3,
                hidden_dim: 4,
                output_dim: 2,
                layers: 2,
            },
            &mut rng,
        )
        .unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let x = tape
            .constant(Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap())
            .unwrap();
        let y = mlp.forward(&mut tape, &store, x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_nonnegative_input() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::register(
            &mut store,
            "f",
            MlpConfig {
                input_dim: 3,
                hidden_dim: 3,
                output_dim: 3,
                layers: 1,
            },
            &mut rng,
        )
        .unwrap();
        let w = store.lookup("f.l0.w").unwrap();
        let b = store.lookup("f.l0.b").unwrap();
        store.value_mut(w).data_mut().copy_from_slice(&[
            1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ]);
        store.value_mut(b).data_mut().fill(0.0);
        let mut tape = Tape::new();
        let x = tape
            .constant(Tensor::matrix(1, 3, vec![0.3, 0.0, 2.0]).unwrap())
            .unwrap();
        let y = mlp.forward(&mut tape, &store, x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.3, 0.0, 2.0]);
    }

    #[test]
    fn embedding_lookup_gradient_hits_only_used_rows() {
        let catalog = tiny_catalog(3);
        let mut config = ModelConfig::new(2, 3, 3);
        config.psi_mode = PsiMode::EmbeddingTable;
        config.rep_dim = 4;
        config.hidden_dim = 4;
        let model = ModelBundle::new(config, 7).unwrap();
        let mut store = model.store.clone();
        let table = store.lookup("psi.table").unwrap();

        let mut tape = Tape::new();
        let reps = model
            .psi
            .encode_ids(&mut tape, &store, &[TreatmentId(2)], &catalog)
            .unwrap();
        let loss = tape.mean(reps).unwrap();
        tape.backward(loss, &mut store).unwrap();
        let grad = store.grad(table);
        assert!(grad.row(0).iter().all(|&g| g == 0.0));
        assert!(grad.row(1).iter().all(|&g| g != 0.0));
        assert!(grad.row(2).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unseen_treatment_is_a_capability_error_for_embedding_mode() {
        let catalog = tiny_catalog(3);
        let mut config = ModelConfig::new(2, 3, 3);
        config.psi_mode = PsiMode::EmbeddingTable;
        config.rep_dim = 4;
        config.hidden_dim = 4;
        let mut model = ModelBundle::new(config, 7).unwrap();
        model.set_observed_treatments([TreatmentId(1), TreatmentId(2)].into_iter().collect());
        let covariates = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        let err = model
            .predict_block(&covariates, &[TreatmentId(3)], &catalog)
            .unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
        assert!(model
            .predict_block(&covariates, &[TreatmentId(1)], &catalog)
            .is_ok());
    }

    #[test]
    fn graph_mode_predicts_unseen_treatments() {
        let catalog = tiny_catalog(3);
        let mut config = ModelConfig::new(2, 3, 3);
        config.gnn.hidden_dim = 4;
        config.gnn.layers = 2;
        config.rep_dim = 4;
        config.hidden_dim = 4;
        let mut model = ModelBundle::new(config, 7).unwrap();
        model.set_observed_treatments([TreatmentId(1)].into_iter().collect());
        let covariates = Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap();
        let out = model
            .predict_block(&covariates, &[TreatmentId(2), TreatmentId(3)], &catalog)
            .unwrap();
        assert!(out.all_finite());
    }

    #[test]
    fn predict_block_matches_forward_batch() {
        let catalog = tiny_catalog(2);
        let mut config = ModelConfig::new(3, 2, 3);
        config.gnn.hidden_dim = 8;
        config.rep_dim = 8;
        config.hidden_dim = 8;
        let model = ModelBundle::new(config, 11).unwrap();
        let covariates = Tensor::matrix(2, 3, vec![0.1, -0.2, 0.4, 1.0, 0.5, -0.3]).unwrap();

        let block = model
            .predict_block(&covariates, &[TreatmentId(1), TreatmentId(2)], &catalog)
            .unwrap();

        let mut tape = Tape::new();
        let pair_cov = Tensor::matrix(
            2,
            3,
            vec![0.1, -0.2, 0.4, 0.1, -0.2, 0.4],
        )
        .unwrap();
        let (_, _, pred) = model
            .forward_batch(
                &mut tape,
                &pair_cov,
                &[TreatmentId(1), TreatmentId(2)],
                &catalog,
            )
            .unwrap();
        assert!((block.get(0, 0) - tape.value(pred).data()[0]).abs() < 1e-12);
        assert!((block.get(0, 1) - tape.value(pred).data()[1]).abs() < 1e-12);
    }
}
