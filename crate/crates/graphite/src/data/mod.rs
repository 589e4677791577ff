//! Dataset model, synthetic generation, biased sampling, and splits.

pub mod bias;
pub mod io;
pub mod splits;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TreatmentId;
use crate::numerics::Tensor;

pub use bias::{bias_sample, bias_sample_units, selection_probabilities};
pub use splits::{split_treatments_zero_shot, split_units, SplitSpec, UnitSplit};
pub use synthetic::{generate_synthetic, SyntheticConfig};

/// One logged interaction: covariates, the factual treatment, its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub unit_index: usize,
    pub covariates: Vec<f64>,
    pub treatment: TreatmentId,
    pub outcome: f64,
}

/// Complete ground-truth outcomes (units × treatments) plus the unit
/// covariates; the synthetic stand-in for a fully observed interaction
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    covariates: Tensor,
    outcomes: Tensor,
}

impl OutcomeTable {
    pub fn new(covariates: Tensor, outcomes: Tensor) -> Result<Self> {
        if covariates.rank() != 2 || outcomes.rank() != 2 {
            return Err(Error::shape("outcome_table", "expected matrices"));
        }
        if covariates.rows() != outcomes.rows() {
            return Err(Error::shape(
                "outcome_table",
                format!(
                    "{} covariate rows vs {} outcome rows",
                    covariates.rows(),
                    outcomes.rows()
                ),
            ));
        }
        if !covariates.all_finite() || !outcomes.all_finite() {
            return Err(Error::NonFinite { op: "outcome_table" });
        }
        Ok(OutcomeTable {
            covariates,
            outcomes,
        })
    }

    pub fn n_units(&self) -> usize {
        self.outcomes.rows()
    }

    pub fn n_treatments(&self) -> usize {
        self.outcomes.cols()
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariates.cols()
    }

    pub fn covariates(&self) -> &Tensor {
        &self.covariates
    }

    pub fn outcomes(&self) -> &Tensor {
        &self.outcomes
    }

    pub fn unit_covariates(&self, unit: usize) -> &[f64] {
        self.covariates.row(unit)
    }

    pub fn outcome_row(&self, unit: usize) -> &[f64] {
        self.outcomes.row(unit)
    }

    pub fn outcome(&self, unit: usize, t: TreatmentId) -> f64 {
        self.outcomes.get(unit, t.index())
    }

    /// Covariate rows for a unit subset, stacked in the given order.
    pub fn covariate_block(&self, units: &[usize]) -> Result<Tensor> {
        let d = self.covariate_dim();
        let mut data = Vec::with_capacity(units.len() * d);
        for &u in units {
            if u >= self.n_units() {
                return Err(Error::Contract(format!("unit index {u} out of range")));
            }
            data.extend_from_slice(self.unit_covariates(u));
        }
        Tensor::matrix(units.len(), d, data)
    }

    /// Population standard deviation over every outcome in the table.
    pub fn outcome_std(&self) -> f64 {
        let data = self.outcomes.data();
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        var.sqrt()
    }

    pub fn observation(&self, unit: usize, t: TreatmentId) -> Observation {
        Observation {
            unit_index: unit,
            covariates: self.unit_covariates(unit).to_vec(),
            treatment: t,
            outcome: self.outcome(unit, t),
        }
    }
}

/// Selection-bias strength. The softmax logit coefficient is
/// ρ = η / (100 σ), with σ the standard deviation of the whole outcome
/// table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    /// Bias magnitude η; 0 reproduces a randomized (uniform) assignment.
    pub eta: f64,
    pub seed: u64,
    /// Factual observations sampled per unit.
    #[serde(default = "default_observations_per_unit")]
    pub observations_per_unit: usize,
}

fn default_observations_per_unit() -> usize {
    1
}

impl BiasConfig {
    pub fn new(eta: f64, seed: u64) -> Self {
        BiasConfig {
            eta,
            seed,
            observations_per_unit: 1,
        }
    }

    /// ρ = η / (100 σ). Errors when η > 0 but the table is constant
    /// (σ = 0 leaves ρ undefined).
    pub fn rho(&self, table: &OutcomeTable) -> Result<f64> {
        if self.eta < 0.0 {
            return Err(Error::Config("eta must be non-negative".into()));
        }
        if self.eta == 0.0 {
            return Ok(0.0);
        }
        let sigma = table.outcome_std();
        if sigma <= 0.0 {
            return Err(Error::Config(
                "outcome table has zero variance; rho = eta/(100 sigma) is undefined".into(),
            ));
        }
        Ok(self.eta / (100.0 * sigma))
    }
}
