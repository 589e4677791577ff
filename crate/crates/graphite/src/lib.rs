//! graphite — outcome prediction for graph-structured treatments from
//! biased observational data.
//!
//! A treatment (a drug, an intervention) is an undirected labeled graph.
//! The model encodes unit covariates with a feed-forward network φ and the
//! treatment graph with a message-passing encoder ψ, then predicts the
//! outcome with a head g over the concatenated representations. Training
//! on logged (biased) observations adds an independence penalty between
//! the two representations — normalized HSIC by default — which mitigates
//! treatment-selection bias; because treatments are encoded from their
//! structure, the model also predicts outcomes for treatments never seen
//! in training.
//!
//! The crate ships the full experimental harness: a dense-tensor autodiff
//! engine, the synthetic-bias benchmark generator, baseline models
//! (one-hot OLS, global mean, learned treatment embeddings), uniform-test
//! metrics (all-pair RMSE, concordance index), and the η × method × seed
//! sweep used by the `graphite` binary. Start with the examples:
//!
//! ```bash
//! cargo run --release --example train_outcome_model
//! ```

pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod gnn;
pub mod graph;
pub mod independence;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use graph::{GnnConfig, LabeledGraph, ReadoutActivation, TreatmentCatalog, TreatmentId};
pub use model::{ModelBundle, ModelConfig, PsiMode};
pub use numerics::{Adam, AdamConfig, ParamStore, Tape, Tensor, Var};
pub use training::{Regularizer, TrainConfig, TrainReport};
